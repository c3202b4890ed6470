"""Potential distributions on [-1, 1].

Two families are supported: Jacobi measures, with density
``Z^-1 (1+v)^alpha (1-v)^beta d(v)`` for a positive polynomial ``d``, and
finite atomic mixtures (used for closed-form oracles).  Both know how to
integrate the resolvent-type kernels ``1/(lam*v - tau)^n`` against
themselves to high absolute accuracy, which is what the free-convolution
solver consumes.
"""

from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import roots_jacobi, roots_legendre

from .errors import NoDensity, NonIntegrable, NonPositiveDensity, PoleOnSupport

__all__ = [
    "JacobiMeasure",
    "AtomicMeasure",
    "Measure",
    "make_jacobi",
    "make_atomic",
    "uniform",
    "delta",
    "symmetric_two_atom",
    "density",
    "quadrature_nodes",
    "integrate_kernel",
    "sample",
    "mean",
    "measure_to_dict",
    "measure_from_dict",
    "dumps",
    "loads",
]

# Absolute accuracy promised by integrate_kernel.
KERNEL_TOL = 1e-12

_POSITIVITY_GRID = 2049
_CDF_GRID = 4097


@lru_cache(maxsize=256)
def _bare_jacobi_rule(alpha: float, beta: float, n: int):
    """Gauss-Jacobi nodes/weights for weight (1+v)^alpha (1-v)^beta on [-1,1].

    scipy's convention puts its first exponent on (1-x), hence the swap.
    """
    x, w = roots_jacobi(n, beta, alpha)
    return x, w


@lru_cache(maxsize=64)
def _legendre_rule(n: int):
    return roots_legendre(n)


def _polyval(coeffs, v):
    # coeffs constant-term first
    return np.polynomial.polynomial.polyval(v, np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class JacobiMeasure:
    """Normalized Jacobi measure ``Z^-1 (1+v)^alpha (1-v)^beta d(v)`` on [-1,1].

    ``shift`` records the mean of the measure (the translation that would
    center it).  It is reported, never silently applied; all formulas use
    the measure as constructed.
    """

    alpha: float
    beta: float
    d_coeffs: tuple
    z_norm: float
    shift: float

    @property
    def support(self):
        return (-1.0, 1.0)

    def d_poly(self, v):
        return _polyval(self.d_coeffs, v)

    def density(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v > -1.0) & (v < 1.0)
        out = np.zeros_like(v)
        vi = v[inside]
        out[inside] = (
            np.exp(self.alpha * np.log1p(vi) + self.beta * np.log1p(-vi))
            * self.d_poly(vi)
            / self.z_norm
        )
        return out if out.ndim else float(out)

    @cached_property
    def _graded_table(self):
        """Composite quadrature (nodes, weights) with the measure folded in.

        Panels shrink geometrically toward both endpoints, so kernels with
        peaks near the support edges stay resolved.  Endpoint panels use
        one-sided Gauss-Jacobi rules so the algebraic weight is handled
        exactly.  Fixed-point iterations run on this table; converged values
        are re-verified against the finer independent table below.
        """
        return _graded_measure_table(self, levels=32, order=10)

    @cached_property
    def _graded_table_check(self):
        # Independent higher-order table used to validate solver residuals.
        return _graded_measure_table(self, levels=46, order=20)

    @cached_property
    def _inverse_cdf(self):
        """Monotone interpolant of the inverse CDF on a Chebyshev grid."""
        m = _CDF_GRID
        x = -np.cos(np.pi * np.arange(m) / (m - 1))
        x[0], x[-1] = -1.0, 1.0
        cdf = np.empty(m)
        cdf[0] = 0.0
        # left edge interval with the (1+v)^alpha one-sided rule
        t, w = _bare_jacobi_rule(self.alpha, 0.0, 16)
        h = x[1] - x[0]
        v = -1.0 + h * (t + 1.0) / 2.0
        rest = np.exp(self.beta * np.log1p(-v)) * self.d_poly(v) / self.z_norm
        cdf[1] = (h / 2.0) ** (self.alpha + 1.0) * np.dot(w, rest)
        # right edge interval with the (1-v)^beta rule
        t, w = _bare_jacobi_rule(0.0, self.beta, 16)
        h = x[-1] - x[-2]
        v = 1.0 - h * (1.0 - t) / 2.0
        rest = np.exp(self.alpha * np.log1p(v)) * self.d_poly(v) / self.z_norm
        right_mass = (h / 2.0) ** (self.beta + 1.0) * np.dot(w, rest)
        # interior intervals, plain Gauss-Legendre on the full density
        tg, wg = _legendre_rule(8)
        a = x[1:-2]
        b = x[2:-1]
        mid = (a + b) / 2.0
        half = (b - a) / 2.0
        nodes = mid[:, None] + half[:, None] * tg[None, :]
        vals = self.density(nodes.ravel()).reshape(nodes.shape)
        increments = half * (vals @ wg)
        cdf[2:-1] = cdf[1] + np.cumsum(increments)
        cdf[-1] = cdf[-2] + right_mass
        cdf /= cdf[-1]
        cdf = np.maximum.accumulate(cdf)
        keep = np.concatenate(([True], np.diff(cdf) > 0.0))
        idx = np.flatnonzero(keep)
        if idx[-1] != m - 1:
            # CDF saturates before the endpoint (underflow); pin u=1 to v=+1
            idx[-1] = m - 1
        return PchipInterpolator(cdf[idx], x[idx])


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite mixture of point masses inside [-1, 1]."""

    atoms: tuple  # ((location, weight), ...)

    @property
    def support(self):
        locs = [a for a, _ in self.atoms]
        return (min(locs), max(locs))

    @property
    def locations(self):
        return np.array([a for a, _ in self.atoms])

    @property
    def weights(self):
        return np.array([w for _, w in self.atoms])


Measure = JacobiMeasure | AtomicMeasure


def make_jacobi(alpha: float, beta: float, d_coeffs) -> JacobiMeasure:
    """Build a normalized Jacobi measure; validates integrability and positivity."""
    alpha = float(alpha)
    beta = float(beta)
    if alpha <= -1.0 or beta <= -1.0:
        raise NonIntegrable(f"exponents must exceed -1, got alpha={alpha}, beta={beta}")
    d_coeffs = tuple(float(c) for c in d_coeffs)
    if not d_coeffs:
        raise NonPositiveDensity("empty polynomial for d(v)")
    grid = -np.cos(np.pi * np.arange(_POSITIVITY_GRID) / (_POSITIVITY_GRID - 1))
    dvals = _polyval(d_coeffs, grid)
    if np.min(dvals) <= 0.0:
        vbad = grid[int(np.argmin(dvals))]
        raise NonPositiveDensity(f"d(v) <= 0 near v={vbad:.6f}")
    # Z and the mean are polynomial moments against the bare Jacobi weight,
    # so a small exact Gauss-Jacobi rule suffices.
    deg = len(d_coeffs) - 1
    n = deg // 2 + 2
    x, w = _bare_jacobi_rule(alpha, beta, n)
    dv = _polyval(d_coeffs, x)
    z = float(np.dot(w, dv))
    mu_mean = float(np.dot(w, x * dv) / z)
    if abs(mu_mean) > 1e-10:
        warnings.warn(
            f"Jacobi measure is not centered (mean = {mu_mean:.6g}); "
            "downstream formulas use it as-is",
            stacklevel=2,
        )
    return JacobiMeasure(alpha=alpha, beta=beta, d_coeffs=d_coeffs, z_norm=z, shift=mu_mean)


def make_atomic(atoms) -> AtomicMeasure:
    """Build an atomic measure from (location, weight) pairs."""
    atoms = tuple((float(a), float(w)) for a, w in atoms)
    if not atoms:
        raise ValueError("at least one atom required")
    locs = [a for a, _ in atoms]
    wts = [w for _, w in atoms]
    if any(w <= 0 for w in wts):
        raise ValueError("atom weights must be positive")
    if abs(sum(wts) - 1.0) > 1e-12:
        raise ValueError(f"atom weights must sum to 1, got {sum(wts)!r}")
    if any(b <= a for a, b in zip(locs, locs[1:])):
        raise ValueError("atom locations must be strictly increasing")
    if locs[0] < -1.0 or locs[-1] > 1.0:
        raise ValueError("atom locations must lie in [-1, 1]")
    return AtomicMeasure(atoms=atoms)


def uniform() -> JacobiMeasure:
    return make_jacobi(0.0, 0.0, [1.0])


def delta(location: float) -> AtomicMeasure:
    return make_atomic([(location, 1.0)])


def symmetric_two_atom() -> AtomicMeasure:
    return make_atomic([(-1.0, 0.5), (1.0, 0.5)])


def density(mu: Measure, v):
    """Density of the measure at v (0 outside [-1, 1]); atomic measures have none."""
    if isinstance(mu, AtomicMeasure):
        raise NoDensity("atomic measures have no density")
    return mu.density(v)


def mean(mu: Measure) -> float:
    if isinstance(mu, AtomicMeasure):
        return float(np.dot(mu.weights, mu.locations))
    return mu.shift


def quadrature_nodes(mu: Measure, n: int):
    """n-point Gauss-Jacobi rule with d(v)/Z folded into the weights.

    Approximates integrals against the measure itself:
    sum(w_i f(x_i)) ~ int f dmu, exact for polynomial f of degree
    <= 2n - 1 - deg(d).
    """
    if isinstance(mu, AtomicMeasure):
        raise NoDensity("atomic measures have no quadrature rule")
    if n < 1:
        raise ValueError("n must be >= 1")
    x, w = _bare_jacobi_rule(mu.alpha, mu.beta, int(n))
    wf = w * mu.d_poly(x) / mu.z_norm
    return list(zip(x.tolist(), wf.tolist()))


def sample(mu: Measure, rng: np.random.Generator, count: int):
    """Draw iid samples; deterministic given the generator state."""
    if count < 1:
        raise ValueError("count must be >= 1")
    u = rng.random(count)
    if isinstance(mu, AtomicMeasure):
        cum = np.cumsum(mu.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="left")
        return mu.locations[idx]
    return np.clip(mu._inverse_cdf(u), -1.0, 1.0)


# --- kernel integration ------------------------------------------------------

def integrate_kernel(mu: Measure, lam: float, tau: complex, n: int) -> complex:
    """Integrate dmu(v) / (lam*v - tau)^n to absolute accuracy ~1e-12.

    Escalates a global Gauss-Jacobi rule first; if successive levels
    disagree, falls back to adaptive panel bisection with one-sided
    endpoint rules (which absorb the algebraic weight exactly).
    """
    if n < 1 or n > 4:
        raise ValueError("kernel order n must be in 1..4")
    tau = complex(tau)
    if isinstance(mu, AtomicMeasure):
        dens = lam * mu.locations - tau
        if tau.imag == 0.0 and np.min(np.abs(dens)) <= 1e-14:
            raise PoleOnSupport(f"tau={tau} touches an atom")
        return complex(np.sum(mu.weights / dens**n))
    if lam == 0.0:
        if tau == 0.0:
            raise PoleOnSupport("tau = 0 with lam = 0")
        return (-tau) ** (-n)
    if tau.imag == 0.0 and abs(tau.real) <= abs(lam):
        raise PoleOnSupport(f"real tau={tau.real} lies on the support segment")

    rest = _KernelRest(mu, lam, tau, n)
    prev = None
    for m in (64, 128, 256, 512, 1024):
        x, w = _bare_jacobi_rule(mu.alpha, mu.beta, m)
        val = complex(np.dot(w * mu.d_poly(x) / mu.z_norm, 1.0 / (lam * x - tau) ** n))
        if prev is not None and abs(val - prev) <= 0.5 * KERNEL_TOL:
            return val
        prev = val
    breakpoints = _pole_breakpoints(lam, tau)
    return _adaptive_weighted_integral(
        mu.alpha, mu.beta, rest, tol=0.5 * KERNEL_TOL, breakpoints=breakpoints
    )


class _KernelRest:
    """Smooth part of the kernel integrand (everything but the Jacobi weight)."""

    def __init__(self, mu, lam, tau, n):
        self.mu = mu
        self.lam = lam
        self.tau = tau
        self.n = n

    def __call__(self, v):
        return self.mu.d_poly(v) / self.mu.z_norm / (self.lam * v - self.tau) ** self.n


def _pole_breakpoints(lam, tau):
    x_star = tau.real / lam
    if not (-1.0 < x_star < 1.0):
        return ()
    width = max(abs(tau.imag) / abs(lam), 1e-13)
    pts = [x_star]
    for k in (1.0, 8.0, 64.0, 512.0):
        pts.extend((x_star - k * width, x_star + k * width))
    return tuple(p for p in pts if -1.0 < p < 1.0)


def _adaptive_weighted_integral(alpha, beta, rest, tol, breakpoints=(), max_panels=20000):
    """Adaptive integral of (1+v)^alpha (1-v)^beta rest(v) over [-1, 1].

    Interior panels: Gauss-Legendre at two orders for an error estimate.
    Panels touching an endpoint: one-sided Gauss-Jacobi, so the endpoint
    singularity never has to be resolved by brute force.
    """
    pts = sorted({-1.0, -0.5, 0.0, 0.5, 1.0} | set(breakpoints))

    def eval_panel(a, b):
        if a == -1.0:
            lo = _edge_panel(alpha, beta, rest, a, b, left=True, order=12)
            hi = _edge_panel(alpha, beta, rest, a, b, left=True, order=25)
        elif b == 1.0:
            lo = _edge_panel(alpha, beta, rest, a, b, left=False, order=12)
            hi = _edge_panel(alpha, beta, rest, a, b, left=False, order=25)
        else:
            lo = _interior_panel(alpha, beta, rest, a, b, order=12)
            hi = _interior_panel(alpha, beta, rest, a, b, order=25)
        return hi, abs(hi - lo)

    heap = []
    for a, b in zip(pts, pts[1:]):
        val, err = eval_panel(a, b)
        heapq.heappush(heap, (-err, a, b, val))
    n_panels = len(heap)
    while n_panels < max_panels:
        total_err = sum(-item[0] for item in heap)
        if total_err <= tol:
            break
        negerr, a, b, _ = heapq.heappop(heap)
        mid = (a + b) / 2.0
        if mid <= a or mid >= b:
            heapq.heappush(heap, (negerr, a, b, _))
            break
        for lo_, hi_ in ((a, mid), (mid, b)):
            val, err = eval_panel(lo_, hi_)
            heapq.heappush(heap, (-err, lo_, hi_, val))
        n_panels += 1
    return complex(sum(item[3] for item in heap))


def _interior_panel(alpha, beta, rest, a, b, order):
    t, w = _legendre_rule(order)
    mid = (a + b) / 2.0
    half = (b - a) / 2.0
    v = mid + half * t
    weight = np.exp(alpha * np.log1p(v) + beta * np.log1p(-v))
    return half * np.dot(w, weight * rest(v))


def _edge_panel(alpha, beta, rest, a, b, left, order):
    if left:
        # weight (1+t)^alpha on the reference panel
        t, w = _bare_jacobi_rule(alpha, 0.0, order)
        h = b - a
        v = -1.0 + h * (t + 1.0) / 2.0
        other = np.exp(beta * np.log1p(-v))
        return (h / 2.0) ** (alpha + 1.0) * np.dot(w, other * rest(v))
    t, w = _bare_jacobi_rule(0.0, beta, order)
    h = b - a
    v = 1.0 - h * (1.0 - t) / 2.0
    other = np.exp(alpha * np.log1p(v))
    return (h / 2.0) ** (beta + 1.0) * np.dot(w, other * rest(v))


def _graded_measure_table(mu: JacobiMeasure, levels: int, order: int):
    """Fixed composite rule for fast repeated integrals against the measure.

    Returns (nodes, weights) such that sum(w f(x)) ~ int f dmu for f smooth
    away from the endpoints, with geometric panel grading toward both
    endpoints so narrow edge peaks remain resolved.
    """
    bounds = [0.0]
    for k in range(1, levels + 1):
        bounds.append(1.0 - 2.0**-k)
    nodes = []
    weights = []
    # interior panels on both sides, mirrored
    tg, wg = _legendre_rule(order)
    for sgn in (-1.0, 1.0):
        for a, b in zip(bounds[:-1], bounds[1:]):
            lo, hi = (sgn * b, sgn * a) if sgn < 0 else (a, b)
            mid = (lo + hi) / 2.0
            half = (hi - lo) / 2.0
            v = mid + half * tg
            wfold = (
                half
                * wg
                * np.exp(mu.alpha * np.log1p(v) + mu.beta * np.log1p(-v))
                * mu.d_poly(v)
                / mu.z_norm
            )
            nodes.append(v)
            weights.append(wfold)
    # endpoint caps with one-sided Jacobi rules
    h = 2.0**-levels
    t, w = _bare_jacobi_rule(mu.alpha, 0.0, order)
    v = -1.0 + h * (t + 1.0) / 2.0
    nodes.append(v)
    weights.append(
        (h / 2.0) ** (mu.alpha + 1.0)
        * w
        * np.exp(mu.beta * np.log1p(-v))
        * mu.d_poly(v)
        / mu.z_norm
    )
    t, w = _bare_jacobi_rule(0.0, mu.beta, order)
    v = 1.0 - h * (1.0 - t) / 2.0
    nodes.append(v)
    weights.append(
        (h / 2.0) ** (mu.beta + 1.0)
        * w
        * np.exp(mu.alpha * np.log1p(v))
        * mu.d_poly(v)
        / mu.z_norm
    )
    x = np.concatenate(nodes)
    wt = np.concatenate(weights)
    order_idx = np.argsort(x)
    return x[order_idx], wt[order_idx]


def kernel_nodes(mu: Measure, check: bool = False):
    """(nodes, weights) digest of the measure for vectorized kernel sums.

    Atomic measures return their atoms; Jacobi measures return the graded
    composite table (the ``check`` variant uses an independent rule order).
    """
    if isinstance(mu, AtomicMeasure):
        return mu.locations, mu.weights
    return mu._graded_table_check if check else mu._graded_table


# --- serialization -----------------------------------------------------------

def measure_to_dict(mu: Measure) -> dict:
    if isinstance(mu, AtomicMeasure):
        return {"kind": "atomic", "atoms": [[a, w] for a, w in mu.atoms]}
    return {"kind": "jacobi", "alpha": mu.alpha, "beta": mu.beta, "d": list(mu.d_coeffs)}


def measure_from_dict(obj: dict) -> Measure:
    kind = obj.get("kind")
    if kind == "jacobi":
        return make_jacobi(obj["alpha"], obj["beta"], obj["d"])
    if kind == "atomic":
        return make_atomic([(a, w) for a, w in obj["atoms"]])
    raise ValueError(f"unknown measure kind {kind!r}")


def dumps(mu: Measure) -> str:
    return json.dumps(measure_to_dict(mu))


def loads(text: str) -> Measure:
    return measure_from_dict(json.loads(text))
