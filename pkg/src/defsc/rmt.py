"""Sampling and spectral statistics of the deformed ensemble H = lam*V + W.

W is a Wigner matrix (complex Hermitian or real symmetric, Gaussian or
Rademacher entries at variance 1/N), V a diagonal of iid draws from the
potential measure.  Every trial is reproducible from (seed, trial_index):
the potential and the Wigner part are drawn from independent counter-based
substreams, so V and W never share randomness and trials can run in any
order or in parallel.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EigenFailure,
    MissingVectors,
    SingularResolvent,
    SupportViolation,
)
from .freeconv import SpectralPoint
from .measure import Measure, measure_from_dict, measure_to_dict, sample

__all__ = [
    "EnsembleConfig",
    "SpectralData",
    "substream",
    "sample_wigner",
    "sample_potential",
    "assemble",
    "spectrum",
    "realize",
    "empirical_stieltjes",
    "counting",
    "integrated_counting",
    "delocalization_stat",
    "green_entries",
    "green_matrix",
    "resolvent_identity_check",
    "operator_norm",
    "dump_spectrum_csv",
    "load_spectrum_csv",
]

_ROLE_IDS = {"potential": 0, "wigner": 1}

SPECTRUM_CSV_HEADER = ["alpha", "mu_alpha", "v_alpha_sorted_by_index"]


@dataclass(frozen=True)
class EnsembleConfig:
    """Everything needed to regenerate one trial bit-for-bit."""

    n_size: int
    lam: float
    mu: Measure
    kind: str = "complex"  # "complex" (Hermitian) | "real" (symmetric)
    entry_law: str = "gaussian"  # "gaussian" | "rademacher"
    seed: int = 0
    trial_index: int = 0

    def __post_init__(self):
        if self.n_size < 1:
            raise ValueError("n_size must be >= 1")
        if self.kind not in ("complex", "real"):
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        if self.entry_law not in ("gaussian", "rademacher"):
            raise ValueError(f"unknown entry law {self.entry_law!r}")

    def with_trial(self, trial_index: int) -> "EnsembleConfig":
        return replace(self, trial_index=trial_index)


def substream(seed: int, trial_index: int, role: str) -> np.random.Generator:
    """Independent counter-based stream for (seed, trial, role)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial_index, _ROLE_IDS[role]))
    return np.random.Generator(np.random.Philox(ss))


def sample_wigner(n_size: int, kind: str, entry_law: str, rng: np.random.Generator):
    """Wigner matrix at variance 1/N; real-symmetric diagonals get 2/N."""
    if n_size < 1:
        raise ValueError("n_size must be >= 1")
    n = n_size
    if kind == "complex":
        if entry_law == "gaussian":
            a = rng.standard_normal((n, n))
            b = rng.standard_normal((n, n))
            diag = rng.standard_normal(n)
        else:
            a = rng.integers(0, 2, size=(n, n)) * 2.0 - 1.0
            b = rng.integers(0, 2, size=(n, n)) * 2.0 - 1.0
            diag = rng.integers(0, 2, size=n) * 2.0 - 1.0
        w = np.triu(a + 1j * b, 1) / np.sqrt(2.0 * n)
        w = w + w.conj().T
        w[np.diag_indices(n)] = diag / np.sqrt(n)
        return w
    if entry_law == "gaussian":
        a = rng.standard_normal((n, n))
        diag = rng.standard_normal(n) * np.sqrt(2.0)
    else:
        a = rng.integers(0, 2, size=(n, n)) * 2.0 - 1.0
        diag = (rng.integers(0, 2, size=n) * 2.0 - 1.0) * np.sqrt(2.0)
    w = np.triu(a, 1) / np.sqrt(n)
    w = w + w.T
    w[np.diag_indices(n)] = diag / np.sqrt(n)
    return w


def sample_potential(config: EnsembleConfig) -> np.ndarray:
    rng = substream(config.seed, config.trial_index, "potential")
    return np.asarray(sample(config.mu, rng, config.n_size), dtype=float)


def assemble(lam: float, v, w) -> np.ndarray:
    """H = lam * diag(v) + W, after validating shapes and potential support."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or v.shape[0] != w.shape[0]:
        raise DimensionMismatch(f"v has length {v.shape[0]}, W has shape {w.shape}")
    if np.any(np.abs(v) > 1.0 + 1e-12):
        raise SupportViolation("potential entries must lie in [-1, 1]")
    h = w.astype(complex if np.iscomplexobj(w) else float, copy=True)
    h[np.diag_indices(v.shape[0])] += lam * v
    return h


@dataclass
class SpectralData:
    """Sorted spectrum of one realized matrix, plus its potential draw."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    potential: np.ndarray | None
    config: EnsembleConfig | None

    @property
    def n_size(self) -> int:
        return self.eigenvalues.shape[0]


def spectrum(h, want_vectors: bool, potential=None, config=None) -> SpectralData:
    """Dense Hermitian eigendecomposition with sorted eigenvalues."""
    h = np.asarray(h)
    if np.max(np.abs(h - h.conj().T)) > 1e-12:
        raise ValueError("matrix is not Hermitian within 1e-12")
    try:
        if want_vectors:
            vals, vecs = np.linalg.eigh(h)
        else:
            vals = np.linalg.eigvalsh(h)
            vecs = None
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    return SpectralData(
        eigenvalues=np.asarray(vals, dtype=float),
        eigenvectors=vecs,
        potential=None if potential is None else np.asarray(potential, dtype=float),
        config=config,
    )


def realize(config: EnsembleConfig, want_vectors: bool = False) -> SpectralData:
    """Sample V and W from their substreams, assemble, and diagonalize."""
    v = sample_potential(config)
    rng_w = substream(config.seed, config.trial_index, "wigner")
    w = sample_wigner(config.n_size, config.kind, config.entry_law, rng_w)
    h = assemble(config.lam, v, w)
    return spectrum(h, want_vectors, potential=v, config=config)


# --- statistics --------------------------------------------------------------


def empirical_stieltjes(data: SpectralData, point: SpectralPoint) -> complex:
    """m(z) = N^-1 sum 1/(mu_a - z)."""
    return complex(np.mean(1.0 / (data.eigenvalues - point.z)))


def counting(data: SpectralData, e1: float, e2: float) -> float:
    """Normalized eigenvalue count on the half-open window (e1, e2]."""
    if not e1 < e2:
        raise ValueError("need e1 < e2")
    mu = data.eigenvalues
    return float(np.count_nonzero((mu > e1) & (mu <= e2))) / data.n_size


def integrated_counting(data: SpectralData, e: float) -> float:
    """N^-1 #{a : mu_a <= e}."""
    return float(np.count_nonzero(data.eigenvalues <= e)) / data.n_size


def delocalization_stat(data: SpectralData) -> float:
    """Largest eigenvector component, max over vectors and coordinates."""
    if data.eigenvectors is None:
        raise MissingVectors("spectrum was computed without eigenvectors")
    return float(np.max(np.abs(data.eigenvectors)))


def green_matrix(data: SpectralData, point: SpectralPoint) -> np.ndarray:
    """Full resolvent G(z) from the eigendecomposition."""
    if data.eigenvectors is None:
        raise MissingVectors("spectrum was computed without eigenvectors")
    u = data.eigenvectors
    scale = 1.0 / (data.eigenvalues - point.z)
    return (u * scale[None, :]) @ u.conj().T


def green_entries(data: SpectralData, point: SpectralPoint, pairs) -> list[complex]:
    """G_ij(z) = sum_a u_a(i) conj(u_a(j)) / (mu_a - z) for requested (i, j)."""
    if data.eigenvectors is None:
        raise MissingVectors("spectrum was computed without eigenvectors")
    u = data.eigenvectors
    scale = 1.0 / (data.eigenvalues - point.z)
    out = []
    for i, j in pairs:
        out.append(complex(np.sum(u[i, :] * np.conj(u[j, :]) * scale)))
    return out


def resolvent_identity_check(h, point: SpectralPoint, k: int) -> float:
    """Max deviation of G_ij = G^(k)_ij + G_ik G_kj / G_kk over i, j != k.

    Both resolvents come from direct dense inversion, so this is an
    algebraic identity check independent of the eigensolver.
    """
    if point.eta == 0:
        raise SingularResolvent("eta must be positive")
    h = np.asarray(h)
    n = h.shape[0]
    z = point.z
    g = np.linalg.inv(h - z * np.eye(n))
    idx = [i for i in range(n) if i != k]
    minor = h[np.ix_(idx, idx)]
    gk = np.linalg.inv(minor - z * np.eye(n - 1))
    lhs = g[np.ix_(idx, idx)]
    rhs = gk + np.outer(g[idx, k], g[k, idx]) / g[k, k]
    return float(np.max(np.abs(lhs - rhs)))


def operator_norm(data: SpectralData) -> float:
    return float(max(abs(data.eigenvalues[0]), abs(data.eigenvalues[-1])))


# --- persistence -------------------------------------------------------------


def dump_spectrum_csv(data: SpectralData, path) -> None:
    """One CSV per trial plus a sidecar metadata file with the exact config."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SPECTRUM_CSV_HEADER)
        pot = data.potential if data.potential is not None else [""] * data.n_size
        for a, (mu_a, v_a) in enumerate(zip(data.eigenvalues, pot), start=1):
            writer.writerow([a, repr(float(mu_a)), "" if v_a == "" else repr(float(v_a))])
    if data.config is not None:
        meta = {
            "n_size": data.config.n_size,
            "lambda": data.config.lam,
            "measure": measure_to_dict(data.config.mu),
            "kind": data.config.kind,
            "entry_law": data.config.entry_law,
            "seed": int(data.config.seed),
            "trial_index": int(data.config.trial_index),
        }
        with open(path.with_suffix(".meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1)


def load_spectrum_csv(path) -> SpectralData:
    path = Path(path)
    eigenvalues = []
    potential = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SPECTRUM_CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        for row in reader:
            eigenvalues.append(float(row[1]))
            potential.append(float(row[2]) if row[2] else np.nan)
    config = None
    meta_path = path.with_suffix(".meta.json")
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
        config = EnsembleConfig(
            n_size=meta["n_size"],
            lam=meta["lambda"],
            mu=measure_from_dict(meta["measure"]),
            kind=meta["kind"],
            entry_law=meta["entry_law"],
            seed=meta["seed"],
            trial_index=meta["trial_index"],
        )
    return SpectralData(
        eigenvalues=np.asarray(eigenvalues),
        eigenvectors=None,
        potential=np.asarray(potential),
        config=config,
    )
