"""defsc: deformed semicircle law solver and spectral-statistics harness.

Core layers:

- :mod:`defsc.measure` — potential laws on [-1, 1] (Jacobi / atomic) with
  high-accuracy kernel integration and reproducible sampling;
- :mod:`defsc.freeconv` — the self-consistent Stieltjes transform, support
  endpoints, density, quantiles, and edge diagnostics;
- :mod:`defsc.rmt` — sampling and spectral statistics of H = lam*V + W;
- :mod:`defsc.fluctuation` — potential-driven corrections (r_n, zeta);
- :mod:`defsc.harness` — declarative Monte Carlo experiments and reports;
- :mod:`defsc.cli` — the ``defsc`` command.
"""

__version__ = "0.1.0"

from . import errors
from .freeconv import (
    FreeConvolutionSolution,
    SpectralPoint,
    solve_free_convolution,
    solve_mfc,
    support_endpoints,
)
from .measure import (
    AtomicMeasure,
    JacobiMeasure,
    Measure,
    make_atomic,
    make_jacobi,
)

__all__ = [
    "errors",
    "AtomicMeasure",
    "JacobiMeasure",
    "Measure",
    "make_atomic",
    "make_jacobi",
    "FreeConvolutionSolution",
    "SpectralPoint",
    "solve_free_convolution",
    "solve_mfc",
    "support_endpoints",
    "__version__",
]
