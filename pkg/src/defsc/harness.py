"""Declarative Monte Carlo experiments with predicted-envelope comparisons.

An ExperimentSpec names a statistic family (kind), an ensemble template
(sizes, couplings, measure), a spectral grid and a trial count.  Running it
produces a Report of per-trial rows plus per-cell aggregates and ratios
against calibrated envelopes.  Identical specs produce byte-identical row
files regardless of worker count: trials draw from per-trial substreams,
all shared solver state is precomputed or idempotent, and BLAS pools are
pinned while trials run.
"""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ConfigError, DefscError, InsufficientPoints, UnknownKind
from .fluctuation import zeta0, zeta_tilde
from .freeconv import FreeConvolutionSolution, SpectralPoint
from .measure import Measure, measure_from_dict, measure_to_dict
from .rmt import (
    EnsembleConfig,
    counting,
    delocalization_stat,
    empirical_stieltjes,
    green_matrix,
    integrated_counting,
    operator_norm,
    realize,
)

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "Report",
    "load_spec",
    "spec_from_dict",
    "predicted_bound",
    "run_experiment",
    "scaling_fit",
    "emit_report",
    "load_report",
    "list_kinds",
]

KINDS = (
    "LocalLaw",
    "OffDiagonalLaw",
    "Delocalization",
    "Rigidity",
    "DensityOfStates",
    "Spacing",
    "IntegratedDOS",
    "OperatorNorm",
    "ZetaDecomposition",
    "EdgeExponent",
    "FreeConvOnly",
)

# Kinds that diagonalize matrices (everything except the deterministic two).
_SAMPLING_KINDS = tuple(k for k in KINDS if k not in ("EdgeExponent", "FreeConvOnly"))
_VECTOR_KINDS = ("OffDiagonalLaw", "Delocalization")

#: Default calibration (c_cal, log_power) per kind, replacing the
#: unspecified log-factor constants in the predicted envelopes.
DEFAULT_CALIBRATION = {
    "LocalLaw": (1.0, 3.0),
    "OffDiagonalLaw": (1.0, 3.0),
    "Delocalization": (10.0, 0.5),
    "Rigidity": (10.0, 1.0),
    "DensityOfStates": (10.0, 3.0),
    "Spacing": (10.0, 2.0),
    "IntegratedDOS": (10.0, 1.0),
    "OperatorNorm": (10.0, 1.0),
    "ZetaDecomposition": (1.0, 0.0),
}

ROW_SUCCESS_MIN = 0.99


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    measure: Measure
    lambdas: tuple
    sizes: tuple
    trials: int
    seed: int = 0
    z_points: tuple = ()  # ((e, eta) ...) resolved; per-size when eta scales with N
    z_grid_raw: dict | None = None
    quantiles: tuple = (0.05, 0.5, 0.95)
    matrix_kind: str = "complex"
    entry_law: str = "gaussian"
    calibration: tuple | None = None  # (c_cal, log_power) override
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output_dir: str | None = None

    def z_points_for(self, n_size: int) -> tuple:
        """Grid points for one matrix size (resolves N-scaled eta floors)."""
        if self.z_grid_raw and "eta_min_times_n" in self.z_grid_raw:
            raw = dict(self.z_grid_raw)
            raw["eta_min"] = raw.pop("eta_min_times_n") / n_size
            return tuple(_resolve_grid(raw))
        return self.z_points

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ensemble": {
                "measure": measure_to_dict(self.measure),
                "lambdas": list(self.lambdas),
                "sizes": list(self.sizes),
                "matrix_kind": self.matrix_kind,
                "entry_law": self.entry_law,
                "seed": self.seed,
            },
            "z_grid": self.z_grid_raw
            if self.z_grid_raw is not None
            else {"points": [list(p) for p in self.z_points]},
            "trials": self.trials,
            "quantiles": list(self.quantiles),
            "calibration": list(self.calibration) if self.calibration else None,
            "tolerances": dict(self.tolerances),
            "params": dict(self.params),
            "output_dir": self.output_dir,
        }


def _require_keys(obj: dict, allowed: set, required: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)} in {where}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"missing field(s) {sorted(missing)} in {where}")


def _resolve_grid(grid: dict) -> list:
    if "points" in grid:
        _require_keys(grid, {"points"}, {"points"}, "z_grid")
        pts = [(float(e), float(t)) for e, t in grid["points"]]
        if any(t <= 0 for _, t in pts):
            raise ConfigError("z_grid eta values must be positive")
        return pts
    allowed = {
        "e_values",
        "e_min",
        "e_max",
        "e_count",
        "eta_values",
        "eta_max",
        "eta_min",
        "eta_min_times_n",
        "eta_ratio",
    }
    _require_keys(grid, allowed, set(), "z_grid")
    if "e_values" in grid:
        es = [float(e) for e in grid["e_values"]]
    else:
        try:
            es = list(
                np.linspace(
                    float(grid["e_min"]), float(grid["e_max"]), int(grid["e_count"])
                )
            )
        except KeyError as exc:
            raise ConfigError(f"z_grid needs e_values or e_min/e_max/e_count: {exc}")
    if "eta_values" in grid:
        etas = [float(t) for t in grid["eta_values"]]
    else:
        try:
            top = float(grid["eta_max"])
            floor = float(grid["eta_min"])
        except KeyError as exc:
            raise ConfigError(f"z_grid needs eta_values or eta_max/eta_min: {exc}")
        ratio = float(grid.get("eta_ratio", 1.2))
        if ratio <= 1.0 or top <= 0 or floor <= 0 or floor > top:
            raise ConfigError("invalid eta ladder parameters")
        etas = []
        h = top
        while h > floor * (1.0 + 1e-12):
            etas.append(h)
            h /= ratio
        etas.append(floor)
    if any(t <= 0 for t in etas):
        raise ConfigError("eta values must be positive")
    return [(e, t) for e in es for t in etas]


def spec_from_dict(obj: dict) -> ExperimentSpec:
    """Strict parser: unknown fields anywhere are errors."""
    _require_keys(
        obj,
        {
            "kind",
            "ensemble",
            "z_grid",
            "trials",
            "quantiles",
            "calibration",
            "tolerances",
            "params",
            "output_dir",
        },
        {"kind", "ensemble", "trials"},
        "experiment spec",
    )
    kind = obj["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; valid: {', '.join(KINDS)}")
    ens = obj["ensemble"]
    _require_keys(
        ens,
        {"measure", "lambdas", "sizes", "matrix_kind", "entry_law", "seed"},
        {"measure", "lambdas", "sizes"},
        "ensemble",
    )
    try:
        measure = measure_from_dict(ens["measure"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad measure: {exc}")
    lambdas = tuple(float(x) for x in ens["lambdas"])
    sizes = tuple(int(n) for n in ens["sizes"])
    if not sizes or not lambdas:
        raise ConfigError("sizes and lambdas must be nonempty")
    if any(n < 1 for n in sizes):
        raise ConfigError("sizes must be >= 1")
    if any(l < 0 for l in lambdas):
        raise ConfigError("lambdas must be >= 0")
    trials = int(obj["trials"])
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    grid_raw = obj.get("z_grid")
    z_points = ()
    if grid_raw is not None and "eta_min_times_n" not in grid_raw:
        z_points = tuple(_resolve_grid(grid_raw))
    elif grid_raw is not None:
        if "eta_min" in grid_raw:
            raise ConfigError("give eta_min or eta_min_times_n, not both")
        probe = dict(grid_raw)
        probe["eta_min"] = probe.pop("eta_min_times_n") / sizes[0]
        _resolve_grid(probe)
    calib = obj.get("calibration")
    if calib is not None:
        calib = (float(calib[0]), float(calib[1]))
    quantiles = tuple(float(q) for q in obj.get("quantiles", (0.05, 0.5, 0.95)))
    tolerances = dict(obj.get("tolerances") or {})
    params = dict(obj.get("params") or {})
    return ExperimentSpec(
        kind=kind,
        measure=measure,
        lambdas=lambdas,
        sizes=sizes,
        trials=trials,
        seed=int(ens.get("seed", 0)),
        z_points=z_points,
        z_grid_raw=grid_raw,
        quantiles=quantiles,
        matrix_kind=ens.get("matrix_kind", "complex"),
        entry_law=ens.get("entry_law", "gaussian"),
        calibration=calib,
        tolerances=tolerances,
        params=params,
        output_dir=obj.get("output_dir"),
    )


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read spec {path}: {exc}")
    return spec_from_dict(obj)


# --- predicted envelopes ------------------------------------------------------


def predicted_bound(kind: str, params: dict, c_cal: float | None = None,
                    log_power: float | None = None) -> float:
    """Calibrated envelope for one statistic cell.

    Log factors of unspecified constant order are replaced by
    c_cal * (log N)^log_power; defaults come from DEFAULT_CALIBRATION.
    """
    if kind not in DEFAULT_CALIBRATION:
        raise UnknownKind(f"no predicted envelope for kind {kind!r}")
    c0, p0 = DEFAULT_CALIBRATION[kind]
    c = c0 if c_cal is None else c_cal
    p = p0 if log_power is None else log_power
    n = params["n"]
    logfac = c * math.log(n) ** p
    if kind in ("LocalLaw", "ZetaDecomposition"):
        lam, kappa, eta = params["lambda"], params["kappa"], params["eta"]
        wigner_term = 1.0 / (n * eta)
        if kind == "ZetaDecomposition":
            return logfac * wigner_term
        v_term = min(
            math.sqrt(lam) * n ** -0.25,
            lam / (math.sqrt(kappa + eta) * math.sqrt(n)),
        )
        return logfac * (v_term + wigner_term)
    if kind == "OffDiagonalLaw":
        eta = params["eta"]
        im_mfc = params.get("im_mfc", 1.0)
        return logfac * (math.sqrt(im_mfc / (n * eta)) + 1.0 / (n * eta))
    if kind == "Delocalization":
        return logfac / math.sqrt(n)
    if kind == "Rigidity":
        lam = params["lambda"]
        a_hat = min(params["alpha_index"], n - params["alpha_index"])
        a_hat = max(a_hat, 1)
        small = 1.0 if a_hat <= logfac * (1.0 + lam**1.5 * n**0.25) else 0.0
        return logfac * (
            n ** (-2.0 / 3.0) * (a_hat ** (-1.0 / 3.0) + small)
            + lam**2 * n ** (-1.0 / 3.0) * a_hat ** (-2.0 / 3.0)
            + lam / math.sqrt(n)
        )
    if kind == "DensityOfStates":
        lam, kappa = params["lambda"], params["kappa"]
        width = params["e2"] - params["e1"]
        return logfac * (
            1.0 / n + lam * width / (math.sqrt(kappa + width) * math.sqrt(n))
        )
    if kind == "Spacing":
        return logfac / n
    if kind == "OperatorNorm":
        lam = params["lambda"]
        return logfac * (lam / math.sqrt(n) + n ** (-2.0 / 3.0))
    if kind == "IntegratedDOS":
        lam = params["lambda"]
        kappa = params.get("kappa", 0.0)
        return logfac * (
            1.0 / n
            + lam**1.5 / n**0.75
            + lam / n ** (5.0 / 6.0)
            + lam * math.sqrt(kappa) / math.sqrt(n)
        )
    raise UnknownKind(f"no predicted envelope for kind {kind!r}")


# --- report -------------------------------------------------------------------


@dataclass
class Report:
    spec: dict
    columns: list
    rows: list
    aggregates: list
    passes: dict
    row_success: float
    seed: int
    wall_clock: float

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "columns": self.columns,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "passes": self.passes,
            "row_success": self.row_success,
            "seed": self.seed,
            "wall_clock": self.wall_clock,
        }


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("DEFSC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DEFSC_THREADS must be an integer, got {env!r}")
    return 1


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> Report:
    """Execute the experiment; deterministic for a fixed spec.

    Trials are the parallel unit.  The free-convolution solution per
    (measure, lambda) is built once and its grid values precomputed, so
    worker threads only read shared state (cache inserts are idempotent).
    BLAS pools are pinned to one thread while trials run, which keeps
    per-trial arithmetic independent of the worker count.
    """
    t0 = time.time()
    threads = _resolve_threads(threads)
    sols = {lam: FreeConvolutionSolution(spec.measure, lam) for lam in spec.lambdas}

    runner = _KIND_RUNNERS[spec.kind]
    tasks = runner.build_tasks(spec)
    # Precompute every m_fc the trial workers will read.
    runner.prepare(spec, sols)

    results = [None] * len(tasks)

    def work(idx_task):
        idx, task = idx_task
        try:
            rows = runner.run_task(spec, sols, task)
        except DefscError as exc:
            rows = [
                {
                    **runner.task_id(task),
                    "status": "failed",
                    "error": f"{type(exc).__name__}: {exc}",
                }
            ]
        return idx, rows

    if spec.kind in _SAMPLING_KINDS and threads > 1:
        with threadpool_limits(limits=1):
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for idx, rows in pool.map(work, enumerate(tasks)):
                    results[idx] = rows
    else:
        with threadpool_limits(limits=1):
            for idx_task in enumerate(tasks):
                idx, rows = work(idx_task)
                results[idx] = rows

    rows = [r for chunk in results for r in chunk]
    columns = runner.columns(spec)
    for r in rows:
        r.setdefault("status", "ok")
        r.setdefault("error", "")
        for c in columns:
            r.setdefault(c, "")
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    row_success = n_ok / len(rows) if rows else 1.0
    aggregates = _aggregate(rows, runner.cell_key(), runner.stat_columns(spec), spec.quantiles)
    passes = runner.passes(spec, rows, aggregates)
    passes["row_success"] = row_success >= float(
        spec.tolerances.get("row_success_min", ROW_SUCCESS_MIN)
    )
    return Report(
        spec=spec.to_dict(),
        columns=columns,
        rows=rows,
        aggregates=aggregates,
        passes=passes,
        row_success=row_success,
        seed=spec.seed,
        wall_clock=time.time() - t0,
    )


def _aggregate(rows, cell_key, stat_cols, quantiles):
    cells = {}
    for r in rows:
        if r.get("status") != "ok":
            continue
        key = tuple(r.get(k, "") for k in cell_key)
        cells.setdefault(key, []).append(r)
    out = []
    for key in sorted(cells, key=lambda k: tuple(str(x) for x in k)):
        group = cells[key]
        agg = dict(zip(cell_key, key))
        agg["count"] = len(group)
        for col in stat_cols:
            vals = np.sort(
                np.array([float(r[col]) for r in group if r.get(col) != ""])
            )
            if vals.size == 0:
                continue
            for q in quantiles:
                agg[f"{col}_q{int(round(q * 100)):02d}"] = float(
                    np.quantile(vals, q)
                )
        out.append(agg)
    return out


def scaling_fit(report: Report, x_axis: str, statistic: str):
    """Least-squares slope of log(median statistic) against log x.

    x_axis is "n" or "eta"; groups rows by that column, takes the median of
    the statistic per group, and fits the log-log line.
    """
    if x_axis not in ("n", "eta"):
        raise ValueError("x_axis must be 'n' or 'eta'")
    groups = {}
    for r in report.rows:
        if r.get("status") != "ok" or r.get(statistic, "") == "" or r.get(x_axis, "") == "":
            continue
        groups.setdefault(float(r[x_axis]), []).append(float(r[statistic]))
    if len(groups) < 3:
        raise InsufficientPoints(
            f"need >= 3 distinct {x_axis} values, got {len(groups)}"
        )
    xs = np.array(sorted(groups))
    med = np.array([np.median(np.sort(np.array(groups[x]))) for x in xs])
    if np.any(med <= 0):
        raise ValueError("statistic medians must be positive for a log-log fit")
    lx, ly = np.log(xs), np.log(med)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


# --- kind runners ---------------------------------------------------------------


class _Runner:
    """One experiment kind: task layout, row evaluation, pass rules."""

    kind = ""
    want_vectors = False
    id_cols = ("n", "lam", "trial")

    def build_tasks(self, spec):
        return [
            (n, lam, t)
            for n in spec.sizes
            for lam in spec.lambdas
            for t in range(spec.trials)
        ]

    def task_id(self, task):
        n, lam, t = task
        return {"n": n, "lam": lam, "trial": t}

    def prepare(self, spec, sols):
        for lam, sol in sols.items():
            for n in spec.sizes:
                pts = spec.z_points_for(n)
                if pts:
                    es = sorted({e for e, _ in pts})
                    etas = sorted({t for _, t in pts})
                    sol.mfc_grid(es, etas)

    def cell_key(self):
        return ["n", "lam"]

    def stat_columns(self, spec):
        return ["stat", "ratio"]

    def columns(self, spec):
        base = ["status", "error", "seed"]
        return list(self.id_cols) + self.row_columns(spec) + base

    def row_columns(self, spec):
        return ["stat", "bound", "ratio"]

    def calib(self, spec):
        if spec.calibration is not None:
            return spec.calibration
        return DEFAULT_CALIBRATION.get(self.kind, (1.0, 0.0))

    def passes(self, spec, rows, aggregates):
        max_ratio = float(spec.tolerances.get("ratio_q95_max", 1.0))
        ok = True
        for agg in aggregates:
            q95 = agg.get("ratio_q95")
            if q95 is not None and q95 > max_ratio:
                ok = False
        return {"ratio_q95": ok}

    def config(self, spec, n, lam, trial):
        return EnsembleConfig(
            n_size=n,
            lam=lam,
            mu=spec.measure,
            kind=spec.matrix_kind,
            entry_law=spec.entry_law,
            seed=spec.seed,
            trial_index=trial,
        )


class _GridStatRunner(_Runner):
    """Per-z statistics over sampled spectra (LocalLaw and friends)."""

    def cell_key(self):
        return ["n", "lam", "e", "eta"]

    def row_columns(self, spec):
        return ["e", "eta", "kappa", "in_domain", "stat", "bound", "ratio"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg, want_vectors=self.want_vectors)
        c, p = self.calib(spec)
        rows = []
        for e, eta in spec.z_points_for(n):
            pt = SpectralPoint(e, eta)
            kappa = sol.kappa(e)
            stat = self.statistic(spec, sol, data, pt)
            params = {"n": n, "lambda": lam, "kappa": kappa, "eta": eta,
                      "im_mfc": sol.mfc(e, eta).imag}
            bound = predicted_bound(self.kind, params, c, p)
            rows.append(
                {
                    **self.task_id(task),
                    "e": e,
                    "eta": eta,
                    "kappa": kappa,
                    "in_domain": pt.in_domain(3.0 + max(spec.lambdas), n),
                    "stat": stat,
                    "bound": bound,
                    "ratio": stat / bound if bound > 0 else math.inf,
                    "seed": spec.seed,
                }
            )
        return rows


class _LocalLawRunner(_GridStatRunner):
    kind = "LocalLaw"

    def statistic(self, spec, sol, data, pt):
        return abs(empirical_stieltjes(data, pt) - sol.mfc(pt.e, pt.eta))


class _OffDiagonalRunner(_GridStatRunner):
    kind = "OffDiagonalLaw"
    want_vectors = True

    def statistic(self, spec, sol, data, pt):
        g = green_matrix(data, pt)
        np.fill_diagonal(g, 0.0)
        return float(np.max(np.abs(g)))


class _ZetaRunner(_GridStatRunner):
    kind = "ZetaDecomposition"

    def row_columns(self, spec):
        return [
            "e",
            "eta",
            "kappa",
            "in_domain",
            "raw",
            "stat",
            "zeta0_abs",
            "zeta_tilde_abs",
            "zeta_gap",
            "bound",
            "ratio",
        ]

    def stat_columns(self, spec):
        return ["raw", "stat", "ratio", "zeta_gap"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg)
        c, p = self.calib(spec)
        rows = []
        for e, eta in spec.z_points_for(n):
            pt = SpectralPoint(e, eta)
            m_emp = empirical_stieltjes(data, pt)
            m_fc = sol.mfc(e, eta)
            z0, _flag = zeta0(data.potential, sol, pt)
            zt = zeta_tilde(data.potential, sol, pt)
            raw = abs(m_emp - m_fc)
            corrected = abs(m_emp - m_fc - z0)
            bound = predicted_bound(
                "ZetaDecomposition",
                {"n": n, "lambda": lam, "kappa": sol.kappa(e), "eta": eta},
                c,
                p,
            )
            rows.append(
                {
                    **self.task_id(task),
                    "e": e,
                    "eta": eta,
                    "kappa": sol.kappa(e),
                    "in_domain": pt.in_domain(3.0 + max(spec.lambdas), n),
                    "raw": raw,
                    "stat": corrected,
                    "zeta0_abs": abs(z0),
                    "zeta_tilde_abs": abs(zt),
                    "zeta_gap": abs(z0 - zt),
                    "bound": bound,
                    "ratio": corrected / bound,
                    "seed": spec.seed,
                }
            )
        return rows


class _DelocalizationRunner(_Runner):
    kind = "Delocalization"
    want_vectors = True

    def row_columns(self, spec):
        return ["stat", "scaled", "bound", "ratio"]

    def stat_columns(self, spec):
        return ["stat", "scaled", "ratio"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg, want_vectors=True)
        c, p = self.calib(spec)
        stat = delocalization_stat(data)
        bound = predicted_bound("Delocalization", {"n": n, "lambda": lam}, c, p)
        return [
            {
                **self.task_id(task),
                "stat": stat,
                "scaled": stat * math.sqrt(n),
                "bound": bound,
                "ratio": stat / bound,
                "seed": spec.seed,
            }
        ]


class _RigidityRunner(_Runner):
    kind = "Rigidity"

    def row_columns(self, spec):
        return ["bulk_median_dev", "stat", "worst_alpha_ratio", "bound", "ratio"]

    def stat_columns(self, spec):
        return ["stat", "ratio", "worst_alpha_ratio"]

    def prepare(self, spec, sols):
        for lam, sol in sols.items():
            for n in spec.sizes:
                sol.classical_locations(n)

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg)
        gammas = sol.classical_locations(n)
        dev = np.abs(data.eigenvalues - gammas)
        c, p = self.calib(spec)
        bulk = slice(n // 4, n - n // 4)
        bulk_med = float(np.median(dev[bulk]))
        bound_bulk = predicted_bound(
            "Rigidity", {"n": n, "lambda": lam, "alpha_index": n // 2}, c, p
        )
        ratios = [
            dev[a - 1]
            / predicted_bound("Rigidity", {"n": n, "lambda": lam, "alpha_index": a}, c, p)
            for a in range(1, n + 1)
        ]
        return [
            {
                **self.task_id(task),
                "bulk_median_dev": bulk_med,
                "stat": bulk_med,
                "worst_alpha_ratio": float(np.max(ratios)),
                "bound": bound_bulk,
                "ratio": bulk_med / bound_bulk,
                "seed": spec.seed,
            }
        ]


class _DensityOfStatesRunner(_Runner):
    kind = "DensityOfStates"

    def cell_key(self):
        return ["n", "lam", "width"]

    def row_columns(self, spec):
        return ["e1", "e2", "width", "kappa", "stat", "expected", "bound", "ratio"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg)
        c, p = self.calib(spec)
        widths = spec.params.get("windows", [0.05, 0.1, 0.2])
        center = spec.params.get("center", 0.5 * (sol.l1 + sol.l2))
        rows = []
        for w in widths:
            e1, e2 = center - w / 2.0, center + w / 2.0
            kappa = min(sol.kappa(e1), sol.kappa(e2))
            expected = sol.n_fc(e2) - sol.n_fc(e1)
            stat = abs(counting(data, e1, e2) - expected)
            bound = predicted_bound(
                "DensityOfStates",
                {"n": n, "lambda": lam, "kappa": kappa, "e1": e1, "e2": e2},
                c,
                p,
            )
            rows.append(
                {
                    **self.task_id(task),
                    "e1": e1,
                    "e2": e2,
                    "width": w,
                    "kappa": kappa,
                    "stat": stat,
                    "expected": expected,
                    "bound": bound,
                    "ratio": stat / bound,
                    "seed": spec.seed,
                }
            )
        return rows


class _SpacingRunner(_Runner):
    kind = "Spacing"

    def row_columns(self, spec):
        return ["pairs", "within_fraction", "stat", "bound", "ratio"]

    def stat_columns(self, spec):
        return ["stat", "within_fraction", "ratio"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg)
        c, p = self.calib(spec)
        bound = predicted_bound("Spacing", {"n": n, "lambda": lam}, c, p)
        gap_min = int(spec.params.get("gap_min", 32))
        # ceil: the literal floor(sqrt(N)) can make the window empty at N=1000
        gap_max = int(spec.params.get("gap_max", math.ceil(math.sqrt(n))))
        n_pairs = int(spec.params.get("pairs", 64))
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence(entropy=spec.seed, spawn_key=(trial, 2))
            )
        )
        lo, hi = n // 4, n - n // 4
        i_idx = rng.integers(lo, hi, size=n_pairs)
        gaps = rng.integers(gap_min, max(gap_min + 1, gap_max + 1), size=n_pairs)
        j_idx = np.minimum(i_idx + gaps, n - 1)
        mu = data.eigenvalues
        rho = np.asarray(sol.density(mu[i_idx]))
        devs = np.abs(
            np.abs(mu[j_idx] - mu[i_idx]) - (j_idx - i_idx) / (n * rho)
        )
        within = float(np.mean(devs <= bound))
        med = float(np.median(devs))
        return [
            {
                **self.task_id(task),
                "pairs": n_pairs,
                "within_fraction": within,
                "stat": med,
                "bound": bound,
                "ratio": med / bound,
                "seed": spec.seed,
            }
        ]

    def passes(self, spec, rows, aggregates):
        frac_min = float(spec.tolerances.get("within_fraction_min", 0.9))
        fracs = [float(r["within_fraction"]) for r in rows if r["status"] == "ok"]
        return {"within_fraction": bool(fracs) and float(np.median(np.sort(np.array(fracs)))) >= frac_min}


class _IntegratedDOSRunner(_Runner):
    kind = "IntegratedDOS"

    def row_columns(self, spec):
        return ["stat", "worst_e", "bound", "ratio"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg)
        c, p = self.calib(spec)
        es = np.linspace(sol.l1 - 0.5, sol.l2 + 0.5, int(spec.params.get("e_count", 81)))
        worst = 0.0
        worst_e = float(es[0])
        worst_ratio = 0.0
        for e in es:
            dev = abs(integrated_counting(data, float(e)) - sol.n_fc(float(e)))
            bound = predicted_bound(
                "IntegratedDOS",
                {"n": n, "lambda": lam, "kappa": sol.kappa(float(e))},
                c,
                p,
            )
            if dev > worst:
                worst, worst_e = dev, float(e)
            worst_ratio = max(worst_ratio, dev / bound)
        bound_flat = predicted_bound("IntegratedDOS", {"n": n, "lambda": lam, "kappa": 0.0}, c, p)
        return [
            {
                **self.task_id(task),
                "stat": worst,
                "worst_e": worst_e,
                "bound": bound_flat,
                "ratio": worst_ratio,
                "seed": spec.seed,
            }
        ]


class _OperatorNormRunner(_Runner):
    kind = "OperatorNorm"

    def row_columns(self, spec):
        return ["stat", "support_edge", "excess", "bound", "ratio"]

    def stat_columns(self, spec):
        return ["stat", "excess", "ratio"]

    def run_task(self, spec, sols, task):
        n, lam, trial = task
        sol = sols[lam]
        cfg = self.config(spec, n, lam, trial)
        data = realize(cfg)
        c, p = self.calib(spec)
        edge = max(abs(sol.l1), sol.l2)
        stat = operator_norm(data)
        excess = stat - edge
        bound = predicted_bound("OperatorNorm", {"n": n, "lambda": lam}, c, p)
        return [
            {
                **self.task_id(task),
                "stat": stat,
                "support_edge": edge,
                "excess": excess,
                "bound": bound,
                "ratio": excess / bound,
                "seed": spec.seed,
            }
        ]

    def passes(self, spec, rows, aggregates):
        frac_min = float(spec.tolerances.get("within_fraction_min", 0.95))
        oks = [float(r["excess"]) <= float(r["bound"]) for r in rows if r["status"] == "ok"]
        return {"norm_within_bound": bool(oks) and float(np.mean(oks)) >= frac_min}


class _EdgeExponentRunner(_Runner):
    kind = "EdgeExponent"
    id_cols = ("n", "lam", "trial", "edge")

    def build_tasks(self, spec):
        return [(0, lam, 0) for lam in spec.lambdas]

    def prepare(self, spec, sols):
        pass

    def cell_key(self):
        return ["lam", "edge"]

    def row_columns(self, spec):
        return ["slope", "r2", "edge_kind", "exponent", "l1", "l2"]

    def stat_columns(self, spec):
        return ["slope", "r2"]

    def run_task(self, spec, sols, task):
        _, lam, _ = task
        sol = sols[lam]
        kmin = float(spec.params.get("kappa_min", 1e-4))
        kmax = float(spec.params.get("kappa_max", 1e-2))
        pts = int(spec.params.get("points", 16))
        rows = []
        for upper in (False, True):
            info = sol.support_info.upper if upper else sol.support_info.lower
            slope, r2 = sol.edge_exponent_fit(upper, kmin, kmax, pts)
            rows.append(
                {
                    "n": 0,
                    "lam": lam,
                    "trial": 0,
                    "edge": "upper" if upper else "lower",
                    "slope": slope,
                    "r2": r2,
                    "edge_kind": info.kind,
                    "exponent": info.exponent,
                    "l1": sol.l1,
                    "l2": sol.l2,
                    "seed": spec.seed,
                }
            )
        return rows

    def passes(self, spec, rows, aggregates):
        tol = float(spec.tolerances.get("slope_rel_tol", 0.25))
        ok = True
        for r in rows:
            if r["status"] != "ok":
                continue
            target = r["exponent"]
            if abs(r["slope"] - target) > tol * max(target, 0.5):
                ok = False
        return {"slopes_match_exponents": ok}


class _FreeConvOnlyRunner(_Runner):
    kind = "FreeConvOnly"
    id_cols = ("n", "lam", "trial", "e", "eta")

    def build_tasks(self, spec):
        return [(0, lam, 0) for lam in spec.lambdas]

    def cell_key(self):
        return ["lam"]

    def row_columns(self, spec):
        return ["re_m", "im_m", "residual", "kappa", "l1", "l2", "edge_class"]

    def stat_columns(self, spec):
        return ["residual"]

    def run_task(self, spec, sols, task):
        _, lam, _ = task
        sol = sols[lam]
        pts = spec.z_points_for(max(spec.sizes))
        es = sorted({e for e, _ in pts})
        etas = sorted({t for _, t in pts})
        sol.mfc_grid(es, etas)
        rows = []
        for e, eta in pts:
            m = sol.mfc(e, eta)
            z = complex(e, eta)
            xc, wc = sol._kern.xc, sol._kern.wc
            residual = abs(m - np.dot(wc, 1.0 / (sol.lam * xc - z - m)))
            rows.append(
                {
                    "n": 0,
                    "lam": lam,
                    "trial": 0,
                    "e": e,
                    "eta": eta,
                    "re_m": m.real,
                    "im_m": m.imag,
                    "residual": float(residual),
                    "kappa": sol.kappa(e),
                    "l1": sol.l1,
                    "l2": sol.l2,
                    "edge_class": sol.edge_class,
                    "seed": spec.seed,
                }
            )
        return rows

    def passes(self, spec, rows, aggregates):
        tol = float(spec.tolerances.get("residual_max", 1e-11))
        worst = max(
            (float(r["residual"]) for r in rows if r["status"] == "ok"), default=0.0
        )
        return {"residual_max": worst <= tol}


_KIND_RUNNERS = {
    r.kind: r
    for r in (
        _LocalLawRunner(),
        _OffDiagonalRunner(),
        _DelocalizationRunner(),
        _RigidityRunner(),
        _DensityOfStatesRunner(),
        _SpacingRunner(),
        _IntegratedDOSRunner(),
        _OperatorNormRunner(),
        _ZetaRunner(),
        _EdgeExponentRunner(),
        _FreeConvOnlyRunner(),
    )
}

_KIND_DESCRIPTIONS = {
    "LocalLaw": "per-z |m - m_fc| vs min{sqrt(lam) N^-1/4, lam/(sqrt(kappa+eta) sqrt(N))} + 1/(N eta)",
    "OffDiagonalLaw": "max off-diagonal |G_ij(z)| vs sqrt(Im m_fc/(N eta)) + 1/(N eta)",
    "Delocalization": "sqrt(N) * max_i,a |u_a(i)| vs a log-factor band (complete delocalization)",
    "Rigidity": "|mu_a - gamma_a| vs N^-2/3 [ahat^-1/3 + small-ahat] + lam^2 N^-1/3 ahat^-2/3 + lam N^-1/2",
    "DensityOfStates": "window counts |n(E1,E2) - n_fc| vs 1/N + lam w/(sqrt(kappa+w) sqrt(N))",
    "Spacing": "| |mu_i - mu_j| - |i-j|/(N rho_fc(mu_i)) | vs a (log N)^p/N band, bulk pairs",
    "IntegratedDOS": "sup_E |n(E) - n_fc(E)| vs 1/N + lam^3/2 N^-3/4 + lam N^-5/6 + lam sqrt(kappa)/sqrt(N)",
    "OperatorNorm": "max|mu| - max(|L1|, L2) vs lam/sqrt(N) + N^-2/3",
    "ZetaDecomposition": "|m - m_fc - zeta0| vs 1/(N eta); zeta0 strips the potential fluctuation",
    "EdgeExponent": "log-log density slope at the edges vs the square-root / Jacobi exponent",
    "FreeConvOnly": "solver residuals and support endpoints on a z grid, no sampling",
}


def list_kinds() -> list[tuple[str, str]]:
    """Kind names with what each one checks and against which envelope."""
    return [(k, _KIND_DESCRIPTIONS[k]) for k in KINDS]


# --- emission -------------------------------------------------------------------


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, (np.floating,)):
        return repr(float(val))
    if isinstance(val, (np.integer,)):
        return str(int(val))
    return str(val)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.TimeoutExpired):
        pass
    return "unknown"


def emit_report(report: Report, out_dir, fmt: str = "csv") -> list:
    """Write rows, aggregates, and a manifest; returns the file list.

    CSV column order follows report.columns; floats use shortest
    round-trip repr, so reading them back is exact.  The JSON report is a
    faithful superset of the CSVs.
    """
    if fmt not in ("csv", "json", "both"):
        raise ConfigError(f"unknown report format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    if fmt in ("csv", "both"):
        with open(path("rows.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.columns)
            for r in report.rows:
                writer.writerow([_fmt(r.get(c, "")) for c in report.columns])
        agg_cols = sorted({k for a in report.aggregates for k in a})
        with open(path("aggregates.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(agg_cols)
            for a in report.aggregates:
                writer.writerow([_fmt(a.get(c, "")) for c in agg_cols])
    if fmt in ("json", "both"):
        with open(path("report.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    manifest = {
        "spec": report.spec,
        "seed": report.seed,
        "version": __version__,
        "git_describe": _git_describe(),
        "row_success": report.row_success,
        "passes": report.passes,
        "wall_clock": report.wall_clock,
        "files": [os.path.basename(p) for p in written],
    }
    with open(path("manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return written


def load_report(out_dir) -> dict:
    """Read back an emitted JSON report."""
    p = os.path.join(out_dir, "report.json")
    try:
        with open(p) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"no report.json under {out_dir}: {exc}")
