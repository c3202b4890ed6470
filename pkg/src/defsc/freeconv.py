"""Deformed semicircle law via the self-consistent Stieltjes transform.

Solves ``m(z) = int dmu(v) / (lam*v - z - m(z))`` on the upper half plane,
extracts the support endpoints from the critical points of
``F(tau) = tau - int dmu/(lam*v - tau)``, classifies the edge behaviour
(square root vs. Jacobi-exponent), and exposes density, integrated density,
quantile locations and stability diagnostics.

Solver strategy: for each energy E, continue the solution down a geometric
eta ladder starting at eta = 2 (where the fixed-point map is a contraction),
warm-starting every rung, with a few damped fixed-point sweeps followed by
safeguarded Newton on ``m - T(m)``.  All per-point updates are elementwise,
so values are identical whether points are solved one at a time or in
batches.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import brentq

from . import measure as measure_mod
from .errors import (
    DegenerateFit,
    MultiIntervalUnsupported,
    NegativeLambda,
    NoConvergence,
)
from .measure import (
    AtomicMeasure,
    JacobiMeasure,
    Measure,
    integrate_kernel,
    kernel_nodes,
    measure_from_dict,
    measure_to_dict,
)

__all__ = [
    "SpectralPoint",
    "EdgeInfo",
    "SupportInfo",
    "FreeConvolutionSolution",
    "solve_mfc",
    "support_endpoints",
    "solve_free_convolution",
    "density_fc",
    "n_fc",
    "classical_locations",
    "r_moment",
    "stability_alpha",
    "edge_exponent_fit",
    "im_mfc_profile_check",
    "save_solution",
    "load_solution_dict",
]

ETA_FLOOR = 1e-7
ETA_ANCHOR = 2.0
RESIDUAL_TOL = 1e-12
_RUNG_TOL = 1e-9
_TARGET_TOL = 2e-13
_VERIFY_TOL = 8e-13


@dataclass(frozen=True)
class SpectralPoint:
    """Spectral parameter z = e + i*eta with eta > 0."""

    e: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.e, self.eta)

    def in_domain(self, e0: float, n_size: int | None = None) -> bool:
        """Whether the point lies in the admissible band |E| <= e0, eta <= 3.

        With a matrix size, also require N*eta >= 1/3 (points below the
        spectral resolution floor are flagged, not rejected).
        """
        if abs(self.e) > e0 or self.eta > 3.0:
            return False
        if n_size is not None and n_size * self.eta < 1.0 / 3.0:
            return False
        return True


# --- vectorized fixed-point machinery ---------------------------------------


class _Kernel:
    """Fast evaluators of T(m) = int dmu/(lam v - z - m) and its m-derivative."""

    def __init__(self, mu: Measure, lam: float):
        self.x, self.w = kernel_nodes(mu)
        self.xc, self.wc = kernel_nodes(mu, check=True)
        self.lam = lam

    def t_and_h(self, z, m):
        den = self.lam * self.x[None, :] - z[:, None] - m[:, None]
        inv = 1.0 / den
        t = inv @ self.w
        h = (inv * inv) @ self.w
        return t, h

    def t_check(self, z, m):
        den = self.lam * self.xc[None, :] - z[:, None] - m[:, None]
        return (1.0 / den) @ self.wc


def _refine(kern, z, m, tol, fp_steps=3, newton_steps=18, cycles=4):
    """Drive residual |m - T(m)| below tol, elementwise, Im m kept positive."""
    active = np.ones(m.shape, dtype=bool)
    for _ in range(cycles):
        for _ in range(fp_steps):
            t, _ = kern.t_and_h(z, m)
            res = np.abs(t - m)
            active = res > tol
            if not active.any():
                return m
            m = np.where(active, m + 0.5 * (t - m), m)
        for _ in range(newton_steps):
            t, h = kern.t_and_h(z, m)
            phi = m - t
            res = np.abs(phi)
            active = res > tol
            if not active.any():
                return m
            step = np.where(active, phi / (1.0 - h), 0.0)
            cand = m - step
            for _ in range(60):
                bad = active & (cand.imag <= 0.0)
                if not bad.any():
                    break
                step = np.where(bad, 0.5 * step, step)
                cand = m - step
            m = np.where(active, cand, m)
        fp_steps = min(2 * fp_steps + 4, 50)
    return m


def _ladder_etas(targets):
    """Descending rung schedule: anchor at 2, halve, include every target."""
    targets = sorted(set(float(t) for t in targets), reverse=True)
    rungs = set(targets)
    floor = targets[-1]
    if floor < ETA_ANCHOR:
        h = ETA_ANCHOR
        while h > floor:
            rungs.add(h)
            h /= 2.0
    return sorted(rungs, reverse=True)


def _solve_columns(kern, e_values, eta_targets):
    """Solve the fixed point for every E at every target eta.

    Returns dict eta -> complex array aligned with e_values.  Values are
    independent of how the energies are batched (updates are elementwise).
    """
    e = np.asarray(e_values, dtype=float)
    targets = set(float(t) for t in eta_targets)
    out = {}
    high = sorted((t for t in targets if t >= ETA_ANCHOR), reverse=True)
    low_floor = min(targets)
    rungs = _ladder_etas(targets | {ETA_ANCHOR}) if low_floor < ETA_ANCHOR else []
    for eta in high:
        z = e + 1j * eta
        m = _refine(kern, z, -1.0 / z, _TARGET_TOL)
        out[eta] = m
    if low_floor < ETA_ANCHOR:
        z = e + 1j * ETA_ANCHOR
        m = _refine(kern, z, -1.0 / z, _RUNG_TOL)
        if ETA_ANCHOR in targets:
            m = _refine(kern, z, m, _TARGET_TOL)
            out[ETA_ANCHOR] = m.copy()
        for eta in rungs:
            if eta >= ETA_ANCHOR:
                continue
            z = e + 1j * eta
            tol = _TARGET_TOL if eta in targets else _RUNG_TOL
            m = _refine(kern, z, m, tol)
            if eta in targets:
                out[eta] = m.copy()
    return out


def _verify_residual(kern, e_values, eta, m):
    """Residual against the independent check rule; polish stragglers."""
    z = np.asarray(e_values, dtype=float) + 1j * eta
    res = np.abs(m - kern.t_check(z, m))
    bad = res > _VERIFY_TOL
    if bad.any():
        idx = np.flatnonzero(bad)
        zb = z[idx]
        mb = m[idx]
        for _ in range(25):
            den = kern.lam * kern.xc[None, :] - zb[:, None] - mb[:, None]
            inv = 1.0 / den
            t = inv @ kern.wc
            h = (inv * inv) @ kern.wc
            phi = mb - t
            if np.all(np.abs(phi) <= _TARGET_TOL):
                break
            step = phi / (1.0 - h)
            cand = mb - step
            for _ in range(60):
                flip = cand.imag <= 0.0
                if not flip.any():
                    break
                step = np.where(flip, 0.5 * step, step)
                cand = mb - step
            mb = cand
        m = m.copy()
        m[idx] = mb
        res = np.abs(m - kern.t_check(z, m))
    return m, res


# --- public solver -----------------------------------------------------------


def solve_mfc(
    mu: Measure,
    lam: float,
    point: SpectralPoint,
    warm_start: complex | None = None,
) -> complex:
    """Solve the self-consistent equation at one spectral point.

    Returns m with Im m >= 0 and residual |m - T(m)| <= 1e-12; raises
    NoConvergence (carrying the last iterate) otherwise.
    """
    if lam < 0:
        raise NegativeLambda(f"lam must be >= 0, got {lam}")
    kern = _Kernel(mu, lam)
    e = np.array([point.e])
    if warm_start is not None and complex(warm_start).imag > 0:
        m = np.array([complex(warm_start)])
        z = e + 1j * point.eta
        m = _refine(kern, z, m, _TARGET_TOL)
        m, res = _verify_residual(kern, e, point.eta, m)
        if res[0] <= RESIDUAL_TOL:
            return complex(m[0])
    sols = _solve_columns(kern, e, [point.eta])
    m = sols[point.eta]
    m, res = _verify_residual(kern, e, point.eta, m)
    if res[0] > RESIDUAL_TOL:
        raise NoConvergence(
            f"residual {res[0]:.3e} above {RESIDUAL_TOL} at z={point.z}",
            last_iterate=complex(m[0]),
            residual=float(res[0]),
        )
    return complex(m[0])


# --- support endpoints -------------------------------------------------------


@dataclass(frozen=True)
class EdgeInfo:
    kind: str  # "sqrt" | "power"
    exponent: float
    tau: float
    near_threshold: bool


@dataclass(frozen=True)
class SupportInfo:
    l1: float
    l2: float
    tau1: float
    tau2: float
    edge_class: str
    lower: EdgeInfo
    upper: EdgeInfo
    lambda_thresholds: tuple | None


def _edge_moment(mu: JacobiMeasure, upper: bool, k: int) -> float:
    """Exact moment int dmu/(1 -+ v)^k via an exponent-shifted Jacobi rule."""
    a = mu.alpha - (0 if upper else k)
    b = mu.beta - (k if upper else 0)
    n = (len(mu.d_coeffs) - 1) // 2 + 2
    x, w = measure_mod._bare_jacobi_rule(a, b, n)
    return float(np.dot(w, mu.d_poly(x)) / mu.z_norm)


def _h_of_tau(mu, lam, tau):
    # Real tau off the pole segment: the graded check table resolves the
    # near-endpoint peak down to widths ~1e-14, far faster than the
    # escalating adaptive path.
    if isinstance(mu, AtomicMeasure):
        return integrate_kernel(mu, lam, complex(tau), 2).real
    x, w = kernel_nodes(mu, check=True)
    return float(np.dot(w, 1.0 / (lam * x - tau) ** 2))


def _f_of_tau(mu, lam, tau):
    if isinstance(mu, AtomicMeasure):
        return float(tau - integrate_kernel(mu, lam, complex(tau), 1).real)
    x, w = kernel_nodes(mu, check=True)
    return float(tau - np.dot(w, 1.0 / (lam * x - tau)))


def support_endpoints(mu: Measure, lam: float) -> SupportInfo:
    """Support [L1, L2] of the free convolution, endpoint preimages, edge class.

    An endpoint is F(tau*) at the crossing H(tau*) = 1 outside the pole
    segment when a crossing exists; otherwise (Jacobi exponent > 1 beyond
    its coupling threshold) the endpoint is lam + moment/lam with the edge
    moment int dmu/(1 -+ v), and the density exponent equals the Jacobi
    exponent there.
    """
    if lam < 0:
        raise NegativeLambda(f"lam must be >= 0, got {lam}")
    atomic = isinstance(mu, AtomicMeasure)
    if atomic and lam > 1.0:
        raise MultiIntervalUnsupported(
            "atomic measures may split the support for lam > 1"
        )
    v_lo, v_hi = mu.support if atomic else (-1.0, 1.0)

    thresholds = None
    lam1 = lam2 = None
    if not atomic:
        if mu.alpha > 1.0:
            lam1 = math.sqrt(_edge_moment(mu, upper=False, k=2))
        if mu.beta > 1.0:
            lam2 = math.sqrt(_edge_moment(mu, upper=True, k=2))
        if lam1 is not None or lam2 is not None:
            thresholds = (lam1, lam2)

    eps = 1e-8
    edges = {}
    for upper in (True, False):
        t0 = lam * (v_hi if upper else v_lo)
        sgn = 1.0 if upper else -1.0
        probe = _h_of_tau(mu, lam, t0 + sgn * eps)
        near = abs(probe - 1.0) < 1e-4
        lam_thr = lam2 if upper else lam1
        if lam_thr is not None and abs(lam - lam_thr) < 1e-4:
            near = True
        if probe > 1.0:
            # interior crossing exists: square-root edge
            lo = t0 + sgn * 1e-12
            hi = t0 + sgn * 50.0
            tau_star = brentq(
                lambda t: _h_of_tau(mu, lam, t) - 1.0,
                min(lo, hi),
                max(lo, hi),
                xtol=1e-15,
                rtol=8.9e-16,
                maxiter=200,
            )
            l_val = _f_of_tau(mu, lam, tau_star)
            edges[upper] = EdgeInfo("sqrt", 0.5, float(tau_star), near)
        else:
            if atomic or (mu.beta if upper else mu.alpha) <= 1.0:
                raise NoConvergence(
                    "no H(tau)=1 crossing found for a square-root-class edge"
                )
            moment = _edge_moment(mu, upper=upper, k=1)
            l_val = sgn * (lam + moment / lam)
            edges[upper] = EdgeInfo(
                "power", mu.beta if upper else mu.alpha, float(moment), near
            )
        if upper:
            l2 = l_val
        else:
            l1 = l_val

    lower, upper_e = edges[False], edges[True]
    if lower.kind == "sqrt" and upper_e.kind == "sqrt":
        edge_class = "SquareRootBoth"
    elif lower.kind == "sqrt":
        edge_class = "SquareRootLowerOnly"
    elif upper_e.kind == "sqrt":
        edge_class = "SquareRootUpperOnly"
    else:
        edge_class = "PowerBoth"
    return SupportInfo(
        l1=float(l1),
        l2=float(l2),
        tau1=lower.tau,
        tau2=upper_e.tau,
        edge_class=edge_class,
        lower=lower,
        upper=upper_e,
        lambda_thresholds=thresholds,
    )


# --- the solution object -----------------------------------------------------


class FreeConvolutionSolution:
    """Cached free-convolution data for a fixed (measure, coupling) pair.

    Construction computes the support; Stieltjes-transform values are
    solved on demand and memoized under quantized (E, eta) keys.  Reads are
    thread-safe; inserts are serialized and idempotent (the continuation is
    deterministic, so concurrent writers store identical values).
    """

    eta_floor = ETA_FLOOR

    def __init__(self, mu: Measure, lam: float):
        if lam < 0:
            raise NegativeLambda(f"lam must be >= 0, got {lam}")
        self.mu = mu
        self.lam = float(lam)
        self._kern = _Kernel(mu, self.lam)
        info = support_endpoints(mu, self.lam)
        self.support_info = info
        self.l1, self.l2 = info.l1, info.l2
        self.tau1, self.tau2 = info.tau1, info.tau2
        self.edge_class = info.edge_class
        self.lambda_thresholds = info.lambda_thresholds
        self._mfc_cache: dict[tuple, complex] = {}
        self._rn_cache: dict[tuple, complex] = {}
        self._lock = threading.Lock()
        self._cumulative = None

    # -- Stieltjes transform ------------------------------------------------

    @staticmethod
    def _key(e: float, eta: float) -> tuple:
        return (round(float(e), 12), round(float(eta), 12))

    def mfc(self, e: float, eta: float | None = None) -> complex:
        if eta is None:
            eta = self.eta_floor
        key = self._key(e, eta)
        hit = self._mfc_cache.get(key)
        if hit is not None:
            return hit
        m = self._solve_batch([float(e)], float(eta))[0]
        return m

    def mfc_grid(self, e_values, eta_values) -> np.ndarray:
        """m values on the cross grid, shape (len(e_values), len(eta_values))."""
        e_values = [float(e) for e in e_values]
        eta_values = [float(t) for t in eta_values]
        out = np.empty((len(e_values), len(eta_values)), dtype=complex)
        missing = [
            e
            for e in e_values
            if any(self._key(e, t) not in self._mfc_cache for t in eta_values)
        ]
        if missing:
            for chunk in _chunks(missing, 1024):
                sols = _solve_columns(self._kern, chunk, eta_values)
                for eta in eta_values:
                    m, res = _verify_residual(self._kern, chunk, eta, sols[eta])
                    self._insert(chunk, eta, m, res)
        for i, e in enumerate(e_values):
            for j, t in enumerate(eta_values):
                out[i, j] = self._mfc_cache[self._key(e, t)]
        return out

    def _solve_batch(self, e_list, eta):
        sols = _solve_columns(self._kern, e_list, [eta])
        m, res = _verify_residual(self._kern, e_list, eta, sols[eta])
        self._insert(e_list, eta, m, res)
        return m

    def _insert(self, e_list, eta, m, res):
        worst = float(np.max(res)) if len(res) else 0.0
        if worst > 1e-11:
            i = int(np.argmax(res))
            raise NoConvergence(
                f"residual {worst:.3e} above cache bound at E={e_list[i]}, eta={eta}",
                last_iterate=complex(m[i]),
                residual=worst,
            )
        with self._lock:
            for e, val in zip(e_list, m):
                self._mfc_cache.setdefault(self._key(e, eta), complex(val))

    # -- density and integrated density --------------------------------------

    def density(self, e):
        """pi^-1 Im m at eta_floor; zero outside a 10*eta_floor margin."""
        e_arr = np.atleast_1d(np.asarray(e, dtype=float))
        out = np.zeros_like(e_arr)
        delta = 10.0 * self.eta_floor
        live = (e_arr >= self.l1 - delta) & (e_arr <= self.l2 + delta)
        if live.any():
            todo = [float(v) for v in e_arr[live]]
            missing = [
                v for v in todo if self._key(v, self.eta_floor) not in self._mfc_cache
            ]
            for chunk in _chunks(missing, 1024):
                self._solve_batch(chunk, self.eta_floor)
            vals = np.array(
                [
                    self._mfc_cache[self._key(v, self.eta_floor)].imag / math.pi
                    for v in todo
                ]
            )
            out[live] = vals
        return out if np.ndim(e) else float(out[0])

    def _ensure_cumulative(self):
        if self._cumulative is None:
            self._cumulative = _CumulativeDensity(self)
        return self._cumulative

    def n_fc(self, e):
        """Integrated density on (-inf, e], clamped to [0, 1], monotone."""
        return self._ensure_cumulative().value(e)

    def classical_locations(self, n_size: int) -> np.ndarray:
        """Quantile locations gamma_a with n_fc(gamma_a) = a/N; gamma_N = L2."""
        if n_size < 1:
            raise ValueError("n_size must be >= 1")
        cum = self._ensure_cumulative()
        gammas = np.empty(n_size)
        for a in range(1, n_size):
            gammas[a - 1] = cum.quantile(a / n_size)
        gammas[n_size - 1] = self.l2
        return gammas

    # -- kernel moments and diagnostics --------------------------------------

    def r_moment(self, point: SpectralPoint, n: int) -> complex:
        """R_n(z) = int dmu/(lam v - z - m(z))^n, adaptive accuracy."""
        if not 1 <= n <= 4:
            raise ValueError("moment order must be in 1..4")
        key = (self._key(point.e, point.eta), n)
        hit = self._rn_cache.get(key)
        if hit is not None:
            return hit
        m = self.mfc(point.e, point.eta)
        if n == 1:
            val = m
        else:
            val = integrate_kernel(self.mu, self.lam, point.z + m, n)
        with self._lock:
            self._rn_cache.setdefault(key, complex(val))
        return complex(val)

    def stability_alpha(self, point: SpectralPoint) -> float:
        """alpha(z) = |1 - R_2(z)|, the stability margin of the fixed point."""
        return abs(1.0 - self.r_moment(point, 2))

    def kappa(self, e: float) -> float:
        return min(abs(e - self.l1), abs(e - self.l2))

    def edge_exponent_fit(
        self, upper: bool, kappa_min: float, kappa_max: float, points: int
    ):
        """Log-log slope of the density against edge distance, with fit r^2."""
        if points < 8:
            raise ValueError("need at least 8 fit points")
        if not (10 * self.eta_floor <= kappa_min < kappa_max <= 0.1 * (self.l2 - self.l1)):
            raise ValueError("kappa window outside the admissible range")
        kappas = np.geomspace(kappa_min, kappa_max, points)
        e_vals = self.l2 - kappas if upper else self.l1 + kappas
        rho = np.asarray(self.density(e_vals))
        if np.any(rho < 1e-12):
            raise DegenerateFit("density vanished inside the fit window")
        lx = np.log(kappas)
        ly = np.log(rho)
        slope, intercept = np.polyfit(lx, ly, 1)
        pred = slope * lx + intercept
        ss_res = float(np.sum((ly - pred) ** 2))
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return float(slope), r2

    def im_mfc_profile_check(self, grid) -> list[dict]:
        """Profile ratios of Im m against the sqrt(kappa+eta) / eta branches."""
        rows = []
        for pt in grid:
            m = self.mfc(pt.e, pt.eta)
            kap = self.kappa(pt.e)
            inside = self.l1 <= pt.e <= self.l2
            root = math.sqrt(kap + pt.eta)
            ratio = m.imag / root if inside else m.imag * root / pt.eta
            rows.append(
                {
                    "e": pt.e,
                    "eta": pt.eta,
                    "im_mfc": m.imag,
                    "kappa": kap,
                    "inside": inside,
                    "ratio": ratio,
                }
            )
        return rows

    # -- export ---------------------------------------------------------------

    def export_dict(self, grid=None) -> dict:
        """Serializable snapshot; `grid` is an iterable of SpectralPoint."""
        if grid is not None:
            entries = [(pt.e, pt.eta, self.mfc(pt.e, pt.eta)) for pt in grid]
        else:
            with self._lock:
                entries = sorted(
                    (e, eta, v) for (e, eta), v in self._mfc_cache.items()
                )
        return {
            "measure": measure_to_dict(self.mu),
            "lambda": self.lam,
            "l1": self.l1,
            "l2": self.l2,
            "tau1": self.tau1,
            "tau2": self.tau2,
            "edge_class": self.edge_class,
            "eta_floor": self.eta_floor,
            "lambda_thresholds": list(self.lambda_thresholds)
            if self.lambda_thresholds
            else None,
            "near_threshold": {
                "lower": self.support_info.lower.near_threshold,
                "upper": self.support_info.upper.near_threshold,
            },
            "grid": [
                {"e": e, "eta": eta, "re": v.real, "im": v.imag}
                for e, eta, v in entries
            ],
        }


def _chunks(seq, size):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


class _CumulativeDensity:
    """Monotone interpolant of the running integral of the density.

    Fixed refinement grid: edge zones get a sqrt substitution (square-root
    edges) or plain fine grids (power edges); the middle is a uniform
    composite-Simpson grid.  Values are rescaled so n_fc(L2) = 1 exactly.
    """

    def __init__(self, sol: FreeConvolutionSolution):
        from scipy.interpolate import PchipInterpolator

        l1, l2 = sol.l1, sol.l2
        width = l2 - l1
        w_edge = min(0.1 * width, 0.5)
        e_nodes = []
        cum_parts = []

        def edge_zone(upper: bool):
            info = sol.support_info.upper if upper else sol.support_info.lower
            edge = l2 if upper else l1
            if info.kind == "sqrt":
                t = np.linspace(0.0, math.sqrt(w_edge), 97)
                e = edge - t * t if upper else edge + t * t
                rho = np.asarray(sol.density(e))
                integ = 2.0 * t * rho
                c = cumulative_simpson(integ, x=t, initial=0.0)
            else:
                e = (
                    np.linspace(l2 - w_edge, l2, 129)[::-1]
                    if upper
                    else np.linspace(l1, l1 + w_edge, 129)
                )
                if upper:
                    e = edge - np.linspace(0.0, w_edge, 129)
                rho = np.asarray(sol.density(e))
                c = cumulative_simpson(rho, x=np.abs(e - edge), initial=0.0)
            return e, c

        # lower edge: nodes ascending from l1, cumulative from l1
        e_lo, c_lo = edge_zone(upper=False)
        # middle zone
        e_mid = np.linspace(l1 + w_edge, l2 - w_edge, 1025)
        rho_mid = np.asarray(sol.density(e_mid))
        c_mid = cumulative_simpson(rho_mid, x=e_mid, initial=0.0)
        # upper edge: computed from l2 inward, flip to ascending
        e_hi, c_hi = edge_zone(upper=True)
        mass_hi = c_hi[-1]
        e_hi_asc = e_hi[::-1]
        c_hi_asc = mass_hi - c_hi[::-1]

        nodes = np.concatenate((e_lo, e_mid[1:], e_hi_asc[1:]))
        cum = np.concatenate(
            (
                c_lo,
                c_lo[-1] + c_mid[1:],
                c_lo[-1] + c_mid[-1] + c_hi_asc[1:],
            )
        )
        cum = np.maximum.accumulate(cum)
        self.total_mass = float(cum[-1])
        cum /= cum[-1]
        keep = np.concatenate(([True], np.diff(nodes) > 0))
        self.l1, self.l2 = l1, l2
        self._interp = PchipInterpolator(nodes[keep], cum[keep])
        self._nodes = nodes[keep]
        self._cum = cum[keep]

    def value(self, e):
        e_arr = np.atleast_1d(np.asarray(e, dtype=float))
        out = np.clip(self._interp(np.clip(e_arr, self.l1, self.l2)), 0.0, 1.0)
        out[e_arr <= self.l1] = 0.0
        out[e_arr >= self.l2] = 1.0
        return out if np.ndim(e) else float(out[0])

    def quantile(self, q: float) -> float:
        if not 0.0 < q < 1.0:
            raise ValueError("quantile must be inside (0, 1)")
        i = int(np.searchsorted(self._cum, q))
        i = min(max(i, 1), len(self._nodes) - 1)
        lo, hi = self._nodes[i - 1], self._nodes[i]
        if self._cum[i - 1] == q:
            return float(lo)
        return float(
            brentq(lambda x: self._interp(x) - q, lo, hi, xtol=1e-14, maxiter=200)
        )


# --- module-level conveniences ------------------------------------------------


def solve_free_convolution(mu: Measure, lam: float) -> FreeConvolutionSolution:
    return FreeConvolutionSolution(mu, lam)


def density_fc(sol: FreeConvolutionSolution, e):
    return sol.density(e)


def n_fc(sol: FreeConvolutionSolution, e):
    return sol.n_fc(e)


def classical_locations(sol: FreeConvolutionSolution, n_size: int):
    return sol.classical_locations(n_size)


def r_moment(sol: FreeConvolutionSolution, point: SpectralPoint, n: int) -> complex:
    return sol.r_moment(point, n)


def stability_alpha(sol: FreeConvolutionSolution, point: SpectralPoint) -> float:
    return sol.stability_alpha(point)


def edge_exponent_fit(sol, upper, kappa_min, kappa_max, points):
    return sol.edge_exponent_fit(upper, kappa_min, kappa_max, points)


def im_mfc_profile_check(sol, grid):
    return sol.im_mfc_profile_check(grid)


def save_solution(sol: FreeConvolutionSolution, path, grid=None):
    with open(path, "w") as fh:
        json.dump(sol.export_dict(grid=grid), fh, indent=1)


def load_solution_dict(path) -> dict:
    with open(path) as fh:
        obj = json.load(fh)
    # round-trip the measure to validate it
    measure_from_dict(obj["measure"])
    return obj
