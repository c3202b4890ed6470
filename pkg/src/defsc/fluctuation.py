"""Potential-driven corrections to the averaged resolvent.

The empirical kernel moments over a realized potential deviate from their
population values by r_n; the leading correction zeta0 solves the quadratic
``(1 - R2 - r2) zeta = r1 + (R3 + r3) zeta^2`` on the branch that vanishes
as eta grows, and its linearization zeta_tilde = r1 / (1 - R2) is the
convenient bulk approximation.  Subtracting zeta0 from m - m_fc strips the
potential fluctuation and leaves the Wigner-scale remainder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchAmbiguity, EdgeDegeneracy
from .freeconv import FreeConvolutionSolution, SpectralPoint
from .rmt import SpectralData, empirical_stieltjes

__all__ = [
    "FluctuationTerms",
    "empirical_r",
    "zeta_tilde",
    "zeta0",
    "fluctuation_terms",
    "decomposition_residual",
]

_ZETA_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class FluctuationTerms:
    r1: complex
    r2: complex
    r3: complex
    zeta_tilde: complex
    zeta0: complex
    point: SpectralPoint
    branch_flag: str  # "Linear" | "QuadraticMinus" | "QuadraticPlus"


def empirical_r(v, sol: FreeConvolutionSolution, point: SpectralPoint, n: int) -> complex:
    """r_n = N^-1 sum (lam v_i - z - m_fc)^-n  minus  R_n."""
    if not 1 <= n <= 3:
        raise ValueError("empirical moment order must be in 1..3")
    v = np.asarray(v, dtype=float)
    m = sol.mfc(point.e, point.eta)
    den = sol.lam * v - point.z - m
    return complex(np.mean(1.0 / den**n) - sol.r_moment(point, n))


def zeta_tilde(v, sol: FreeConvolutionSolution, point: SpectralPoint) -> complex:
    """Linearized correction r1 / (1 - R2)."""
    one_minus_r2 = 1.0 - sol.r_moment(point, 2)
    if abs(one_minus_r2) <= 1e-10:
        raise EdgeDegeneracy(f"|1 - R2| = {abs(one_minus_r2):.3e} at z = {point.z}")
    return empirical_r(v, sol, point, 1) / one_minus_r2


def _quadratic_roots(a: complex, b: complex, r1: complex):
    """Roots of b*zeta^2 - a*zeta + r1 = 0, numerically stable pairing."""
    disc = np.sqrt(a * a - 4.0 * b * r1 + 0j)
    # pick the sign that avoids cancellation in a +/- disc
    if (np.conj(a) * disc).real >= 0.0:
        big = a + disc
        sign_plus_is_big = True
    else:
        big = a - disc
        sign_plus_is_big = False
    root_big = big / (2.0 * b)
    root_small = (2.0 * r1) / big if big != 0 else np.inf
    return root_small, root_big, sign_plus_is_big


def _zeta0_from_moments(a, b, r1):
    if abs(b) < 1e-10:
        return r1 / a, "Linear"
    small, big, plus_is_big = _quadratic_roots(a, b, r1)
    flag = "QuadraticMinus" if plus_is_big else "QuadraticPlus"
    return small, flag


def zeta0(v, sol: FreeConvolutionSolution, point: SpectralPoint):
    """Quadratic correction on the branch with zeta -> 0 as eta -> inf.

    Operationally the smaller-modulus root; when the two roots are
    indistinguishable the branch is followed continuously down an eta
    ladder from eta = 2, and BranchAmbiguity is raised only if that
    history cannot disambiguate either.
    """
    v = np.asarray(v, dtype=float)
    a, b, r1 = _moments(v, sol, point)
    if abs(a) < 1e-14 and abs(b) < 1e-14:
        raise BranchAmbiguity("degenerate coefficients: |1-R2-r2| and |R3+r3| both < 1e-14")
    if abs(b) < 1e-10:
        zeta, flag = r1 / a, "Linear"
        return _checked(zeta, a, b, r1), flag
    small, big, plus_is_big = _quadratic_roots(a, b, r1)
    if abs(abs(small) - abs(big)) > 1e-10 * max(abs(big), 1e-300):
        flag = "QuadraticMinus" if plus_is_big else "QuadraticPlus"
        return _checked(small, a, b, r1), flag
    # tie: continue the branch down from eta = 2 where it is unambiguous
    etas = [max(2.0, point.eta)]
    while etas[-1] > point.eta * 1.0001:
        etas.append(max(etas[-1] / 1.5, point.eta))
    prev = None
    for eta in etas:
        pt = SpectralPoint(point.e, eta)
        a_k, b_k, r1_k = _moments(v, sol, pt)
        if abs(b_k) < 1e-10:
            prev = r1_k / a_k
            continue
        s_k, g_k, plus_is_big = _quadratic_roots(a_k, b_k, r1_k)
        if prev is None:
            prev = s_k
        else:
            prev = s_k if abs(s_k - prev) <= abs(g_k - prev) else g_k
    if prev is None:
        raise BranchAmbiguity(f"roots indistinguishable at z = {point.z}")
    chosen = small if abs(small - prev) <= abs(big - prev) else big
    if chosen is small:
        flag = "QuadraticMinus" if plus_is_big else "QuadraticPlus"
    else:
        flag = "QuadraticPlus" if plus_is_big else "QuadraticMinus"
    return _checked(chosen, a, b, r1), flag


def _moments(v, sol, point):
    a = 1.0 - sol.r_moment(point, 2) - empirical_r(v, sol, point, 2)
    b = sol.r_moment(point, 3) + empirical_r(v, sol, point, 3)
    r1 = empirical_r(v, sol, point, 1)
    return a, b, r1


def _checked(zeta, a, b, r1):
    res = abs(a * zeta - r1 - b * zeta * zeta)
    if res > _ZETA_RESIDUAL_TOL:
        raise BranchAmbiguity(f"root residual {res:.3e} above {_ZETA_RESIDUAL_TOL}")
    return complex(zeta)


def fluctuation_terms(v, sol: FreeConvolutionSolution, point: SpectralPoint) -> FluctuationTerms:
    """All correction terms at one spectral point."""
    r1 = empirical_r(v, sol, point, 1)
    r2 = empirical_r(v, sol, point, 2)
    r3 = empirical_r(v, sol, point, 3)
    zt = zeta_tilde(v, sol, point)
    z0, flag = zeta0(v, sol, point)
    return FluctuationTerms(
        r1=r1, r2=r2, r3=r3, zeta_tilde=zt, zeta0=z0, point=point, branch_flag=flag
    )


def decomposition_residual(
    data: SpectralData, sol: FreeConvolutionSolution, point: SpectralPoint
):
    """(raw, corrected) = (|m - m_fc|, |m - m_fc - zeta0|) for one sample."""
    if data.potential is None:
        raise ValueError("spectral data carries no potential realization")
    m_emp = empirical_stieltjes(data, point)
    m_fc = sol.mfc(point.e, point.eta)
    z0, _ = zeta0(data.potential, sol, point)
    raw = abs(m_emp - m_fc)
    corrected = abs(m_emp - m_fc - z0)
    return raw, corrected
