"""Measure layer: construction, density, quadrature, kernel integrals, sampling."""

import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from defsc import measure as M
from defsc.errors import NoDensity, NonIntegrable, NonPositiveDensity, PoleOnSupport


def quad_oracle(f, a=-1.0, b=1.0, points=None):
    """Adaptive-quadrature oracle, independent of the package integrators."""
    val, err = quad(f, a, b, limit=400, points=points, epsabs=1e-13, epsrel=1e-13)
    return val


class TestConstruction:
    def test_uniform_is_normalized(self):
        mu = M.uniform()
        assert mu.z_norm == pytest.approx(2.0, abs=1e-14)
        assert M.density(mu, 0.0) == pytest.approx(0.5, abs=1e-14)

    def test_jacobi11_normalization_against_quadrature(self):
        # oracle: int (1-v^2) dv = 4/3
        z = quad_oracle(lambda v: (1 + v) * (1 - v))
        mu = M.make_jacobi(1, 1, [1])
        assert mu.z_norm == pytest.approx(z, abs=1e-12)
        assert M.density(mu, 0.0) == pytest.approx(1.0 / z, abs=1e-12)

    def test_jacobi22_density_at_zero(self):
        z = quad_oracle(lambda v: (1 - v * v) ** 2)
        mu = M.make_jacobi(2, 2, [1])
        assert z == pytest.approx(16.0 / 15.0, abs=1e-13)
        assert M.density(mu, 0.0) == pytest.approx(15.0 / 16.0, abs=1e-12)

    def test_non_integrable_exponent(self):
        with pytest.raises(NonIntegrable):
            M.make_jacobi(0, -2, [1])
        with pytest.raises(NonIntegrable):
            M.make_jacobi(-1.0, 0, [1])

    def test_non_positive_polynomial(self):
        with pytest.raises(NonPositiveDensity):
            M.make_jacobi(0, 0, [0.1, -10.0])

    def test_total_mass_and_mean_invariants(self):
        for mu in (M.uniform(), M.make_jacobi(1, 1, [1]), M.make_jacobi(0.5, 1.5, [1, 0.2])):
            nodes = M.quadrature_nodes(mu, 64)
            assert abs(sum(w for _, w in nodes) - 1.0) < 1e-10
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mu = M.make_jacobi(2, 1, [1])
        # oracle: moment ratio int v (1+v)^2 (1-v) dv / int (1+v)^2 (1-v) dv
        num = quad_oracle(lambda v: v * (1 + v) ** 2 * (1 - v))
        den = quad_oracle(lambda v: (1 + v) ** 2 * (1 - v))
        assert M.mean(mu) == pytest.approx(num / den, abs=1e-10)
        assert num / den == pytest.approx(0.2, abs=1e-13)

    def test_noncentered_warns(self):
        with pytest.warns(UserWarning, match="not centered"):
            M.make_jacobi(2, 1, [1])

    def test_atomic_validation(self):
        assert M.mean(M.delta(1.0)) == 1.0
        assert M.mean(M.uniform()) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(ValueError):
            M.make_atomic([(0.0, 0.5), (0.5, 0.6)])
        with pytest.raises(ValueError):
            M.make_atomic([(0.5, 0.5), (0.0, 0.5)])
        with pytest.raises(ValueError):
            M.make_atomic([(1.5, 1.0)])
        with pytest.raises(NoDensity):
            M.density(M.delta(1.0), 0.0)

    def test_density_outside_support(self):
        assert M.density(M.uniform(), 1.5) == 0.0
        assert M.density(M.uniform(), -2.0) == 0.0


class TestQuadrature:
    def test_two_point_uniform_is_legendre(self):
        nodes = M.quadrature_nodes(M.uniform(), 2)
        xs = sorted(x for x, _ in nodes)
        assert xs[0] == pytest.approx(-1 / math.sqrt(3), abs=1e-14)
        assert xs[1] == pytest.approx(1 / math.sqrt(3), abs=1e-14)
        assert all(w == pytest.approx(0.5, abs=1e-14) for _, w in nodes)
        # verified by integrating v^2 to 1/3
        assert sum(w * x * x for x, w in nodes) == pytest.approx(1 / 3, abs=1e-14)

    def test_polynomial_exactness_v4(self):
        nodes = M.quadrature_nodes(M.uniform(), 16)
        assert sum(w * x**4 for x, w in nodes) == pytest.approx(0.2, abs=1e-14)

    def test_normalization_32_nodes(self):
        nodes = M.quadrature_nodes(M.make_jacobi(1, 1, [1]), 32)
        assert sum(w for _, w in nodes) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("alpha,beta,d", [(0, 0, [1]), (1, 1, [1]), (0.5, 2.5, [1, 0.1, 0.3])])
    def test_gauss_jacobi_exactness_vs_oracle(self, alpha, beta, d):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mu = M.make_jacobi(alpha, beta, d)
        deg_d = len(d) - 1
        for n in (3, 7, 12, 20):
            nodes = M.quadrature_nodes(mu, n)
            for k in range(0, 2 * n - deg_d):
                oracle = quad_oracle(
                    lambda v: v**k * float(M.density(mu, v))
                )
                got = sum(w * x**k for x, w in nodes)
                assert got == pytest.approx(oracle, abs=1e-12), (n, k)

    def test_rejects_atomic_and_bad_n(self):
        with pytest.raises(NoDensity):
            M.quadrature_nodes(M.delta(0.5), 4)
        with pytest.raises(ValueError):
            M.quadrature_nodes(M.uniform(), 0)


class TestKernelIntegral:
    def test_single_atom(self):
        val = M.integrate_kernel(M.delta(1.0), 0.5, 2.0, 1)
        assert val == pytest.approx(1.0 / (0.5 - 2.0), abs=1e-15)

    def test_uniform_log_antiderivative(self):
        # oracle: (1/2) ln((tau-1)/(tau+1)) sign-adjusted = -(1/2) ln 2 at tau=3
        val = M.integrate_kernel(M.uniform(), 1.0, 3.0, 1)
        assert val.real == pytest.approx(0.5 * math.log(2.0 / 4.0), abs=1e-13)
        assert val.imag == 0.0

    def test_uniform_second_order(self):
        val = M.integrate_kernel(M.uniform(), 1.0, 3.0, 2)
        assert val.real == pytest.approx(1.0 / 8.0, abs=1e-13)

    def test_lambda_zero_closed_form(self):
        tau = 1.7 - 0.3j
        for n in (1, 2, 3):
            got = M.integrate_kernel(M.uniform(), 0.0, tau, n)
            assert got == pytest.approx((-tau) ** (-n), abs=1e-14)

    def test_far_field_mass_probe(self):
        # at tau = -1e6 the kernel is uniformly ~ -1/tau, so the integral
        # recovers the total mass
        for mu in (M.uniform(), M.make_jacobi(1, 1, [1]), M.make_jacobi(2, 2, [1])):
            val = M.integrate_kernel(mu, 0.0, -1.0e6, 1)
            assert abs((-(-1.0e6)) * val - 1.0) < 1e-10

    def test_near_axis_pole_against_closed_form(self):
        # uniform density: antiderivative of 1/(v - tau) is log(v - tau)
        a, eta = 0.3, 1e-7
        tau = a + 1j * eta
        got = M.integrate_kernel(M.uniform(), 1.0, tau, 1)
        re = 0.25 * math.log(((1 - a) ** 2 + eta**2) / ((1 + a) ** 2 + eta**2))
        im = 0.5 * (math.atan((1 - a) / eta) - math.atan((-1 - a) / eta))
        assert got.real == pytest.approx(re, abs=2e-12)
        assert got.imag == pytest.approx(im, abs=2e-12)

    def test_pole_on_support_errors(self):
        with pytest.raises(PoleOnSupport):
            M.integrate_kernel(M.uniform(), 1.0, 0.2, 1)
        with pytest.raises(PoleOnSupport):
            M.integrate_kernel(M.delta(0.5), 1.0, 0.5, 2)
        with pytest.raises(PoleOnSupport):
            M.integrate_kernel(M.uniform(), 0.0, 0.0, 1)
        # real tau strictly outside the segment is fine
        M.integrate_kernel(M.uniform(), 1.0, 1.0 + 1e-9, 1)

    def test_atomic_is_exact_finite_sum(self):
        mu = M.make_atomic([(-0.7, 0.25), (0.1, 0.5), (0.9, 0.25)])
        locs = np.array([-0.7, 0.1, 0.9])
        wts = np.array([0.25, 0.5, 0.25])
        tau = 1.3 + 0.2j
        for n in (1, 2, 3, 4):
            expect = complex(np.sum(wts / (0.8 * locs - tau) ** n))
            assert M.integrate_kernel(mu, 0.8, tau, n) == expect  # bitwise

    def test_order_validation(self):
        with pytest.raises(ValueError):
            M.integrate_kernel(M.uniform(), 1.0, 3.0, 5)


class TestSampling:
    def test_delta_samples_constant(self):
        rng = np.random.default_rng(0)
        assert list(M.sample(M.delta(1.0), rng, 3)) == [1.0, 1.0, 1.0]

    def test_uniform_mean_band(self):
        rng = np.random.default_rng(123)
        s = M.sample(M.uniform(), rng, 100_000)
        assert abs(s.mean()) < 4.0 / math.sqrt(12 * 100_000)

    def test_two_atom_binomial_band(self):
        rng = np.random.default_rng(7)
        s = M.sample(M.symmetric_two_atom(), rng, 100_000)
        frac = np.mean(s > 0)
        assert abs(frac - 0.5) < 4.0 * 0.5 / math.sqrt(100_000)

    @pytest.mark.parametrize("name,maker,cdf", [
        ("uniform", lambda: M.uniform(), lambda x: (x + 1) / 2),
        (
            "jacobi11",
            lambda: M.make_jacobi(1, 1, [1]),
            lambda x: 0.5 + 0.75 * (x - x**3 / 3),
        ),
        (
            "arcsine",
            lambda: M.make_jacobi(-0.5, -0.5, [1]),
            lambda x: (2 / np.pi) * np.arcsin(np.sqrt((1 + x) / 2)),
        ),
    ])
    def test_ks_statistic_over_seeds(self, name, maker, cdf):
        # KS <= 1.95/sqrt(count) at 1e5 draws in >= 99% of seeds;
        # closed-form CDFs serve as the oracle
        mu = maker()
        count, n_seeds = 100_000, 25
        bound = 1.95 / math.sqrt(count)
        fails = 0
        for seed in range(n_seeds):
            s = np.sort(M.sample(mu, np.random.default_rng(seed), count))
            u = cdf(s)
            k = np.arange(1, count + 1) / count
            ks = max(np.max(np.abs(k - u)), np.max(np.abs(u - (k - 1.0 / count))))
            if ks > bound:
                fails += 1
        assert fails <= max(1, int(0.01 * n_seeds))

    def test_determinism_given_stream_state(self):
        a = M.sample(M.uniform(), np.random.default_rng(42), 100)
        b = M.sample(M.uniform(), np.random.default_rng(42), 100)
        assert np.array_equal(a, b)


class TestSerialization:
    def test_jacobi_roundtrip(self):
        mu = M.make_jacobi(0.5, 1.5, [1.0, 0.25])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            back = M.loads(M.dumps(mu))
        assert back == mu

    def test_atomic_roundtrip(self):
        mu = M.make_atomic([(-1.0, 0.5), (1.0, 0.5)])
        assert M.loads(M.dumps(mu)) == mu

    def test_format_shape(self):
        obj = json.loads(M.dumps(M.uniform()))
        assert obj == {"kind": "jacobi", "alpha": 0.0, "beta": 0.0, "d": [1.0]}
        obj = json.loads(M.dumps(M.delta(1.0)))
        assert obj == {"kind": "atomic", "atoms": [[1.0, 1.0]]}

    @given(
        locs=st.lists(
            st.decimals(
                min_value=-1, max_value=1, places=12, allow_nan=False, allow_infinity=False
            ).map(float),
            min_size=1,
            max_size=5,
            unique=True,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_atomic_roundtrip_exact_decimals(self, locs):
        locs = sorted(set(locs))
        w = 1.0 / len(locs)
        weights = [w] * len(locs)
        weights[-1] = 1.0 - w * (len(locs) - 1)
        if any(x <= 0 for x in weights):
            return
        mu = M.make_atomic(list(zip(locs, weights)))
        assert M.loads(M.dumps(mu)) == mu
