"""Free convolution solver: closed-form oracles, endpoints, density, diagnostics."""

import json
import math

import numpy as np
import pytest

from defsc import measure as M
from defsc.errors import (
    DegenerateFit,
    MultiIntervalUnsupported,
    NegativeLambda,
    NoConvergence,
)
from defsc.freeconv import (
    FreeConvolutionSolution,
    SpectralPoint,
    load_solution_dict,
    save_solution,
    solve_mfc,
    support_endpoints,
)


def m_sc(z: complex) -> complex:
    """Stieltjes transform of the radius-2 semicircle, Im >= 0 branch."""
    s = np.sqrt(complex(z) ** 2 - 4.0)
    if s.imag < 0:
        s = -s
    return (-z + s) / 2.0


def sc_cdf(e: float) -> float:
    """CDF of the radius-2 semicircle."""
    e = min(max(e, -2.0), 2.0)
    return 0.5 + e * math.sqrt(4 - e * e) / (4 * math.pi) + math.asin(e / 2) / math.pi


def two_atom_cubic_roots(lam: float, z: complex):
    """Roots of m (z+m)^2 - m lam^2 + (z+m) = 0 via the companion matrix."""
    coeffs = [1.0, 2 * z, z * z - lam * lam + 1.0, z]
    return np.roots(coeffs)


class TestSolveOracles:
    def test_shifted_semicircle_point(self, delta1):
        m = solve_mfc(delta1, 0.7, SpectralPoint(0.7, 2.0))
        assert abs(m - 1j * (math.sqrt(2.0) - 1.0)) < 1e-12

    def test_pure_semicircle_point(self, uniform_mu):
        m = solve_mfc(uniform_mu, 0.0, SpectralPoint(0.0, 1.0))
        assert abs(m - 1j * (math.sqrt(5.0) - 1.0) / 2.0) < 1e-12

    def test_two_atom_cubic_point(self, two_atom):
        z = 1j
        m = solve_mfc(two_atom, 0.5, SpectralPoint(0.0, 1.0))
        roots = two_atom_cubic_roots(0.5, z)
        upper = [r for r in roots if r.imag > 0]
        assert min(abs(m - r) for r in upper) < 1e-12

    def test_negative_lambda_rejected(self, uniform_mu):
        with pytest.raises(NegativeLambda):
            solve_mfc(uniform_mu, -0.1, SpectralPoint(0.0, 1.0))

    def test_eta_must_be_positive(self):
        with pytest.raises(ValueError):
            SpectralPoint(0.0, 0.0)

    def test_warm_start_agrees_with_cold(self, uniform_mu):
        pt = SpectralPoint(0.4, 0.05)
        cold = solve_mfc(uniform_mu, 0.5, pt)
        warm = solve_mfc(uniform_mu, 0.5, pt, warm_start=cold + 1e-4j)
        assert abs(cold - warm) < 1e-11

    def test_residual_promise(self, uniform_mu, jacobi22):
        for mu, lam in ((uniform_mu, 1.0), (jacobi22, 2.0)):
            for e, eta in ((0.0, 1e-4), (2.2, 1e-5), (-3.0, 0.3)):
                m = solve_mfc(mu, lam, SpectralPoint(e, eta))
                res = abs(m - M.integrate_kernel(mu, lam, complex(e, eta) + m, 1))
                assert res <= 1e-12
                assert m.imag >= 0


class TestDeltaShiftIdentity:
    def test_grid_identity(self, solution_cache):
        sol = solution_cache("delta1", 0.7)
        es = np.linspace(-4, 4, 40)
        etas = np.geomspace(1e-4, 2.0, 40)
        grid = sol.mfc_grid(es, etas)
        expect = np.array([[m_sc(e - 0.7 + 1j * t) for t in etas] for e in es])
        assert np.max(np.abs(grid - expect)) <= 1e-10


class TestSupportEndpoints:
    def test_delta_endpoints(self, delta1):
        info = support_endpoints(delta1, 0.7)
        assert info.l1 == pytest.approx(-1.3, abs=1e-10)
        assert info.l2 == pytest.approx(2.7, abs=1e-10)
        assert info.tau1 == pytest.approx(-0.3, abs=1e-10)
        assert info.tau2 == pytest.approx(1.7, abs=1e-10)
        assert info.edge_class == "SquareRootBoth"

    def test_uniform_large_lambda_square_root(self, uniform_mu):
        info = support_endpoints(uniform_mu, 2.0)
        assert info.edge_class == "SquareRootBoth"
        assert info.lambda_thresholds is None

    def test_jacobi22_above_threshold(self, jacobi22):
        info = support_endpoints(jacobi22, 2.0)
        # Beta-function closed forms: lam2^2 = (15/16) int (1+v)^2 dv = 5/2,
        # tau2 = (15/16) int (1+v)^2 (1-v) dv = 5/4
        lam1, lam2 = info.lambda_thresholds
        assert lam2 == pytest.approx(math.sqrt(2.5), abs=1e-12)
        assert lam1 == pytest.approx(math.sqrt(2.5), abs=1e-12)
        assert info.tau2 == pytest.approx(1.25, abs=1e-12)
        assert info.l2 == pytest.approx(2.0 + 1.25 / 2.0, abs=1e-10)
        assert info.edge_class == "PowerBoth"
        assert info.upper.exponent == 2.0

    def test_jacobi22_below_threshold(self, jacobi22):
        info = support_endpoints(jacobi22, 1.0)
        assert info.edge_class == "SquareRootBoth"

    def test_atomic_supercritical_rejected(self, two_atom):
        with pytest.raises(MultiIntervalUnsupported):
            support_endpoints(two_atom, 1.5)

    def test_small_lambda_expansion(self, uniform_mu):
        # |L2 - 2 sqrt(1+lam^2)| <= 5 lam^3 for small lam (consistency check
        # with an order-of-magnitude constant, not an asserted sharp one)
        for lam in (0.05, 0.1):
            info = support_endpoints(uniform_mu, lam)
            assert abs(info.l2 - 2.0 * math.sqrt(1 + lam * lam)) <= 5.0 * lam**3
            assert info.l1 == pytest.approx(-info.l2, abs=1e-9)

    def test_centered_support_straddles_zero(self, solution_cache):
        for name, lam in (("uniform", 0.5), ("jacobi11", 1.0), ("two_atom", 0.9)):
            sol = solution_cache(name, lam)
            assert sol.l1 < 0.0 < sol.l2


class TestDensity:
    def test_delta_peak_value(self, solution_cache):
        sol = solution_cache("delta1", 0.7)
        assert sol.density(0.7) == pytest.approx(1.0 / math.pi, abs=1e-4)

    def test_outside_support_zero(self, solution_cache):
        sol = solution_cache("delta1", 0.7)
        assert sol.density(3.5) == 0.0
        assert sol.density(-2.0) == 0.0

    def test_mass_one(self, solution_cache):
        sol = solution_cache("uniform", 1.0)
        assert abs(sol._ensure_cumulative().total_mass - 1.0) <= 1e-6

    def test_semicircle_profile(self, solution_cache):
        sol = solution_cache("uniform", 0.0)
        for e in (-1.5, -0.4, 0.0, 1.0, 1.9):
            expect = math.sqrt(4 - e * e) / (2 * math.pi)
            assert sol.density(e) == pytest.approx(expect, abs=1e-5)


class TestIntegratedDensity:
    def test_bounds(self, solution_cache):
        sol = solution_cache("uniform", 1.0)
        assert sol.n_fc(sol.l1 - 0.1) == 0.0
        assert sol.n_fc(sol.l2 + 0.1) == 1.0
        assert abs(sol.n_fc(sol.l2) - 1.0) <= 1e-6
        assert abs(sol.n_fc(sol.l1)) <= 1e-6

    def test_delta_median(self, solution_cache):
        sol = solution_cache("delta1", 0.7)
        assert sol.n_fc(0.7) == pytest.approx(0.5, abs=1e-6)

    def test_semicircle_cdf_oracle(self, solution_cache):
        sol = solution_cache("uniform", 0.0)
        # oracle: closed-form semicircle CDF, includes the spec's spot value
        assert sc_cdf(1.0) == pytest.approx(0.5 + math.sqrt(3) / (4 * math.pi) + 1 / 6, abs=1e-12)
        for e in (-1.0, 0.0, 0.5, 1.0, 1.7):
            assert sol.n_fc(e) == pytest.approx(sc_cdf(e), abs=1e-6)

    def test_monotone(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        es = np.linspace(sol.l1, sol.l2, 500)
        vals = np.array([sol.n_fc(float(e)) for e in es])
        assert np.all(np.diff(vals) >= 0.0)


class TestClassicalLocations:
    def test_full_mass_quantile_convention(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        g1 = sol.classical_locations(1)
        assert g1[0] == sol.l2

    def test_delta_median_quantile(self, solution_cache):
        sol = solution_cache("delta1", 0.7)
        g = sol.classical_locations(2)
        assert g[0] == pytest.approx(0.7, abs=1e-8)
        assert g[1] == sol.l2

    def test_semicircle_quartile_oracle(self, solution_cache):
        from scipy.optimize import brentq

        sol = solution_cache("uniform", 0.0)
        g = sol.classical_locations(4)
        # oracle: invert the closed-form semicircle CDF
        g1 = brentq(lambda x: sc_cdf(x) - 0.25, -2.0, 0.0, xtol=1e-13)
        assert g[0] == pytest.approx(g1, abs=1e-6)
        assert g[1] == pytest.approx(0.0, abs=1e-8)
        assert g[2] == pytest.approx(-g[0], abs=1e-8)

    def test_strictly_increasing_and_quantile_accuracy(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        g = sol.classical_locations(100)
        assert np.all(np.diff(g) > 0.0)
        for a in (1, 25, 50, 75, 99):
            assert abs(sol.n_fc(float(g[a - 1])) - a / 100) <= 1e-9

    def test_symmetric_antisymmetry(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        n = 100
        g = sol.classical_locations(n)
        for a in range(1, n):
            assert g[a - 1] == pytest.approx(-g[n - a - 1], abs=1e-8)


class TestMoments:
    def test_r1_is_mfc(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        for e, eta in ((0.0, 0.5), (1.2, 0.01), (-2.5, 1e-3)):
            pt = SpectralPoint(e, eta)
            assert abs(sol.r_moment(pt, 1) - sol.mfc(e, eta)) <= 1e-11

    def test_delta_r2_arithmetic(self, solution_cache):
        sol = solution_cache("delta1", 0.7)
        pt = SpectralPoint(0.7, 2.0)
        m = sol.mfc(0.7, 2.0)
        expect = 1.0 / (0.7 - pt.z - m) ** 2
        assert abs(expect.real - (-0.171573)) < 1e-6  # direct complex arithmetic
        assert abs(sol.r_moment(pt, 2) - expect) <= 1e-11

    def test_trivial_eta_bound(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        pt = SpectralPoint(0.0, 1.0e6)
        assert abs(sol.r_moment(pt, 2)) <= 1.1e-12


class TestStabilityAlpha:
    def test_edge_scaling_semicircle(self, solution_cache):
        # alpha = |1 - m_sc^2| ~ sqrt(kappa + eta) at the edge E=2
        sol = solution_cache("delta1", 0.0)
        eta = 1e-4
        alpha = sol.stability_alpha(SpectralPoint(2.0, eta))
        ratio = alpha / math.sqrt(eta)
        assert 0.25 <= ratio <= 4.0

    def test_large_eta_limit(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        alpha = sol.stability_alpha(SpectralPoint(0.0, 1.0e6))
        assert abs(alpha - 1.0) <= 1e-5

    def test_bulk_value_semicircle(self, solution_cache):
        # R2 = m_sc^2 for the pure semicircle
        sol = solution_cache("delta1", 0.0)
        pt = SpectralPoint(0.0, 0.01)
        msc = m_sc(0.01j)
        assert abs(sol.r_moment(pt, 2) - msc * msc) <= 1e-10
        assert 0.5 < sol.stability_alpha(pt) < 2.5

    def test_band_over_kappa_grid(self, solution_cache):
        # single factor-10 band for alpha / sqrt(kappa+eta) across the grid
        eta = 1e-4
        for lam in (0.5, 1.0):
            sol = solution_cache("uniform", lam)
            for kap in np.geomspace(1e-3, 1.0, 12):
                e = sol.l2 - kap
                ratio = sol.stability_alpha(SpectralPoint(e, eta)) / math.sqrt(kap + eta)
                assert 0.1 <= ratio <= 10.0


class TestHerglotzAndSymmetry:
    def test_imaginary_part_positive(self, solution_cache):
        sol = solution_cache("jacobi11", 0.8)
        es = np.linspace(-3.5, 3.5, 25)
        for eta in (1e-6, 1e-3, 0.5):
            grid = sol.mfc_grid(es, [eta])
            assert np.all(grid.imag > 0.0)

    def test_no_branch_jumps_along_energy(self, solution_cache):
        sol = solution_cache("uniform", 1.0)
        es = np.linspace(-3.0, 3.0, 301)
        vals = sol.mfc_grid(es, [1e-3])[:, 0]
        jumps = np.abs(np.diff(vals))
        # continuity: no isolated jump an order of magnitude above neighbors
        med = np.median(jumps)
        assert np.max(jumps) <= 30 * max(med, 1e-6)

    def test_reflection_symmetry(self, solution_cache):
        sol = solution_cache("uniform", 0.7)
        for e, eta in ((0.9, 0.01), (1.7, 1e-4), (2.5, 0.3)):
            a = sol.mfc(e, eta)
            b = sol.mfc(-e, eta)
            assert abs(b - (-np.conj(a))) <= 1e-10
        assert sol.l1 == pytest.approx(-sol.l2, abs=1e-9)

    def test_stieltjes_tail(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        m = sol.mfc(0.0, 1e6)
        assert abs(m * 1j * 1e6 - (-1.0) * 1j * 1j) <= 1e-5  # i*eta*m -> 1


class TestEdgeExponentFit:
    def test_uniform_square_root(self, solution_cache):
        sol = solution_cache("uniform", 1.0)
        slope, r2 = sol.edge_exponent_fit(True, 1e-4, 1e-2, 12)
        assert 0.45 <= slope <= 0.55
        assert r2 > 0.99

    def test_pure_semicircle_slope(self, solution_cache):
        sol = solution_cache("delta1", 0.0)
        slope, _ = sol.edge_exponent_fit(True, 1e-4, 1e-2, 12)
        assert 0.48 <= slope <= 0.52

    def test_jacobi22_supercritical_exponent(self, solution_cache):
        sol = solution_cache("jacobi22", 2.0)
        slope, _ = sol.edge_exponent_fit(True, 1e-3, 5e-2, 12)
        assert 1.8 <= slope <= 2.2

    def test_window_validation(self, solution_cache):
        sol = solution_cache("uniform", 1.0)
        with pytest.raises(ValueError):
            sol.edge_exponent_fit(True, 1e-9, 1e-2, 12)
        with pytest.raises(ValueError):
            sol.edge_exponent_fit(True, 1e-3, 1e-2, 4)

    def test_degenerate_outside(self, solution_cache):
        sol = solution_cache("delta1", 0.0)
        # fitting "above" the upper edge from the outside: density is zero
        with pytest.raises(DegenerateFit):
            sol.edge_exponent_fit(False, 1e-4, 1e-2, 8)


class TestProfileCheck:
    def test_inside_outside_branches(self, solution_cache):
        sol = solution_cache("delta1", 0.0)
        rows = sol.im_mfc_profile_check(
            [SpectralPoint(0.0, 0.01), SpectralPoint(3.0, 1e-3), SpectralPoint(0.0, 1e6)]
        )
        # center of the semicircle: Im m_sc(0.01i) ~ 0.995, kappa = 2
        assert rows[0]["inside"]
        assert rows[0]["ratio"] == pytest.approx(0.995 / math.sqrt(2.01), abs=2e-3)
        # outside: ratio bounded by a constant band
        assert not rows[1]["inside"]
        assert 0.1 <= rows[1]["ratio"] <= 10.0
        # far field: Im m * eta -> 1
        assert rows[2]["im_mfc"] * 1e6 == pytest.approx(1.0, abs=1e-5)

    def test_stability_floor_square_root_vs_power(self, solution_cache):
        # sqrt class: |lam*v - z - m| stays bounded below at the edge for
        # v = +/-1; power class: it collapses at the upper edge
        sol_sq = solution_cache("uniform", 1.0)
        z = complex(sol_sq.l2, 1e-6)
        m = sol_sq.mfc(sol_sq.l2, 1e-6)
        floor_sq = min(abs(sol_sq.lam * v - z - m) for v in (-1.0, 1.0))
        assert floor_sq > 0.05
        sol_pw = solution_cache("jacobi22", 2.0)
        z = complex(sol_pw.l2, 1e-6)
        m = sol_pw.mfc(sol_pw.l2, 1e-6)
        floor_pw = min(abs(sol_pw.lam * v - z - m) for v in (-1.0, 1.0))
        assert floor_pw < 0.05


class TestCacheAndExport:
    def test_cache_quantization_hit(self, solution_cache):
        sol = solution_cache("uniform", 0.5)
        a = sol.mfc(0.123456, 0.25)
        b = sol.mfc(0.123456 + 1e-14, 0.25)
        assert a == b  # quantized key, identical cached value

    def test_concurrent_reads_consistent(self, solution_cache):
        from concurrent.futures import ThreadPoolExecutor

        sol = solution_cache("uniform", 0.5)
        pts = [(0.01 * k, 0.05) for k in range(40)]

        def worker(p):
            return sol.mfc(*p)

        with ThreadPoolExecutor(max_workers=4) as pool:
            res1 = list(pool.map(worker, pts))
        res2 = [sol.mfc(*p) for p in pts]
        assert res1 == res2

    def test_export_roundtrip(self, tmp_path, solution_cache):
        sol = solution_cache("delta1", 0.7)
        grid = [SpectralPoint(e, t) for e in (0.0, 0.7) for t in (0.01, 1.0)]
        path = tmp_path / "sol.json"
        save_solution(sol, path, grid=grid)
        obj = load_solution_dict(path)
        assert obj["lambda"] == 0.7
        assert obj["l2"] == pytest.approx(2.7, abs=1e-9)
        assert obj["edge_class"] == "SquareRootBoth"
        assert len(obj["grid"]) == 4
        for row in obj["grid"]:
            m = sol.mfc(row["e"], row["eta"])
            assert row["re"] == pytest.approx(m.real, abs=1e-12)
            assert row["im"] == pytest.approx(m.imag, abs=1e-12)
