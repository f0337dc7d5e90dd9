import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize, special

from spiked_langevin.errors import DomainError, InvalidParameter, OverflowGuardError
from spiked_langevin.spectral import (Discrete, QuadratureRule, Semicircle, bessel_mgf,
                                      inverse_square_moment, load_discrete_csv, mgf,
                                      semicircle_cdf, semicircle_quadrature, semicircle_quantiles,
                                      stieltjes, write_discrete_csv)


def semicircle_moment(k, s=1.0):
    # sqrt(s^2 - x^2) = (x + s)^(1/2) (s - x)^(1/2), handled by the algebraic weight
    val, _ = integrate.quad(lambda x: x ** k, -s, s, weight="alg", wvar=(0.5, 0.5), epsabs=1e-13, epsrel=1e-13)
    return 2.0 / (math.pi * s * s) * val


def cdf_by_integration(x):
    return integrate.quad(lambda y: 2 / math.pi * math.sqrt(1 - y * y), -1.0, x, epsabs=1e-14)[0]


class TestQuadrature:
    def test_weights_normalized(self):
        r = semicircle_quadrature(1.0, 64)
        assert abs(r.weights.sum() - 1.0) < 1e-12

    def test_first_moment_vanishes(self):
        r = semicircle_quadrature(1.0, 64)
        assert abs(r.weights @ r.nodes) < 1e-12

    def test_second_moment(self):
        r = semicircle_quadrature(1.0, 64)
        assert abs(r.weights @ r.nodes ** 2 - 0.25) < 1e-12

    @pytest.mark.parametrize("m", [32, 64, 200])
    @pytest.mark.parametrize("k", range(9))
    def test_moments_match_adaptive_integration(self, m, k):
        r = semicircle_quadrature(1.0, m)
        assert abs(r.weights @ r.nodes ** k - semicircle_moment(k)) < 1e-10

    def test_scaled_support_moments(self):
        r = semicircle_quadrature(2.5, 40)
        for k in (2, 4, 6):
            assert r.weights @ r.nodes ** k == pytest.approx(semicircle_moment(k, 2.5), rel=1e-12)

    def test_nodes_strictly_inside(self):
        r = semicircle_quadrature(1.5, 101)
        assert np.all(np.abs(r.nodes) < 1.5)

    @pytest.mark.parametrize("bad", [(0.0, 10), (-1.0, 10), (1.0, 0), (1.0, 2.5)])
    def test_invalid(self, bad):
        with pytest.raises(InvalidParameter):
            semicircle_quadrature(*bad)

    def test_rule_rejects_unnormalized_weights(self):
        with pytest.raises(InvalidParameter):
            QuadratureRule(np.array([0.0, 1.0]), np.array([0.5, 0.6]), 2)

    def test_rule_arrays_are_read_only(self):
        r = semicircle_quadrature(1.0, 8)
        with pytest.raises(ValueError):
            r.nodes[0] = 3.0


class TestMgf:
    def test_at_zero(self):
        assert mgf(Semicircle(1.0), 0.0) == 1.0

    @pytest.mark.parametrize("w,expected", [(1.0, 1.1303182), (2.0, 1.5906369)])
    def test_reference_values(self, w, expected):
        assert abs(mgf(Semicircle(1.0), w) - expected) < 1e-6

    @pytest.mark.parametrize("x", [0.1, 1.0, 7.5, 40.0, 300.0])
    def test_bessel_series_matches_scipy(self, x):
        assert bessel_mgf(x) == pytest.approx(2 * special.iv(1, x) / x, rel=1e-13)

    def test_rule_and_series_agree(self):
        r = semicircle_quadrature(1.0, 200)
        for w in (-3.0, 0.5, 4.0):
            assert mgf(r, w) == pytest.approx(mgf(Semicircle(1.0), w), rel=1e-14)

    @given(st.floats(-50, 50), st.floats(0.1, 5))
    def test_bounds(self, w, s):
        val = mgf(Semicircle(s), w)
        assert math.exp(-s * abs(w)) * (1 - 1e-12) <= val <= math.exp(s * abs(w)) * (1 + 1e-12)

    def test_even_in_w(self):
        assert mgf(Semicircle(1.3), -2.2) == pytest.approx(mgf(Semicircle(1.3), 2.2), rel=1e-15)

    def test_overflow_guard(self):
        with pytest.raises(OverflowGuardError):
            mgf(Semicircle(1.0), 800.0)
        with pytest.raises(OverflowGuardError):
            mgf(Discrete([2.0], [1.0]), -400.0)

    def test_discrete_is_finite_sum(self):
        d = Discrete([-1.0, 2.0], [0.25, 0.75])
        assert mgf(d, 0.3) == pytest.approx(0.25 * math.exp(-0.3) + 0.75 * math.exp(0.6), rel=1e-15)


class TestStieltjes:
    def test_edge_limit(self):
        assert stieltjes(Semicircle(1.0), 1.0 + 1e-12) == pytest.approx(2.0, abs=1e-5)

    def test_at_lambda_tilde(self):
        assert stieltjes(Semicircle(1.0), 1.25) == pytest.approx(1.0, abs=1e-15)

    def test_odd_reflection(self):
        assert stieltjes(Semicircle(1.0), -3.0) == pytest.approx(-stieltjes(Semicircle(1.0), 3.0))

    def test_inside_support_raises(self):
        with pytest.raises(DomainError):
            stieltjes(Semicircle(1.0), 0.3)
        with pytest.raises(DomainError):
            stieltjes(Discrete([0.0, 1.0], [0.5, 0.5]), 0.5)

    def test_large_z(self):
        z = 1e6
        assert abs(z * stieltjes(Semicircle(1.0), z) - 1.0) < 1e-5

    @given(st.floats(1.0001, 50), st.floats(1e-3, 10))
    def test_strictly_decreasing(self, z, dz):
        mu = Semicircle(1.0)
        assert stieltjes(mu, z + dz) < stieltjes(mu, z)

    def test_matches_quadrature(self):
        r = semicircle_quadrature(1.0, 400)
        assert stieltjes(r, 3.0) == pytest.approx(stieltjes(Semicircle(1.0), 3.0), rel=1e-12)


class TestInverseSquareMoment:
    def test_at_lambda_tilde(self):
        assert inverse_square_moment(Semicircle(1.0), 1.25) == pytest.approx(4.0 / 3.0, rel=1e-14)

    def test_finite_difference_at_10(self):
        mu, z, h = Semicircle(1.0), 10.0, 1e-4
        fd = -(stieltjes(mu, z + h) - stieltjes(mu, z - h)) / (2 * h)
        assert abs(inverse_square_moment(mu, z) - fd) < 1e-8

    @given(st.floats(1.05, 20), st.floats(0.2, 3))
    def test_is_negative_derivative(self, zr, s):
        mu = Semicircle(s)
        z = zr * s
        h = 1e-5 * z
        fd = -(stieltjes(mu, z + h) - stieltjes(mu, z - h)) / (2 * h)
        assert abs(inverse_square_moment(mu, z) - fd) < 1e-7 * max(1.0, abs(fd))

    def test_single_atom(self):
        assert inverse_square_moment(Discrete([0.0], [1.0]), 2.0) == 0.25

    @pytest.mark.parametrize("lam", [0.6, 1.0, 2.0, 3.5])
    def test_closed_form_at_outlier(self, lam):
        z = lam + 1 / (4 * lam)
        assert inverse_square_moment(Semicircle(1.0), z) == pytest.approx(
            1 / (lam ** 2 * (1 - 1 / (4 * lam ** 2))), rel=1e-12)


class TestQuantiles:
    def test_single(self):
        assert semicircle_quantiles(1.0, 1).tolist() == [0.0]

    def test_pair(self):
        q = semicircle_quantiles(1.0, 2)
        assert q[0] == pytest.approx(-q[1], abs=1e-14)
        oracle = optimize.brentq(lambda x: cdf_by_integration(x) - 0.75, 0.0, 1.0, xtol=1e-14)
        assert abs(q[1] - oracle) < 1e-10
        assert abs(q[1] - 0.4040) < 1e-3
        assert semicircle_cdf(q[1]) == pytest.approx(0.75, abs=1e-11)

    def test_edges(self):
        q = semicircle_quantiles(1.0, 1000)
        assert 0.99 < q.max() < 1.0
        assert -1.0 < q.min() < -0.99

    @pytest.mark.parametrize("N", [7, 50, 333])
    def test_empirical_cdf(self, N):
        q = semicircle_quantiles(1.0, N)
        grid = np.linspace(-1, 1, 2001)
        ecdf = np.searchsorted(q, grid, side="right") / N
        assert np.max(np.abs(ecdf - semicircle_cdf(grid))) <= 1.0 / N + 1e-12

    def test_sorted(self):
        q = semicircle_quantiles(2.0, 501)
        assert np.all(np.diff(q) > 0)

    def test_invalid(self):
        with pytest.raises(InvalidParameter):
            semicircle_quantiles(1.0, 0)


class TestDiscrete:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidParameter):
            Discrete([0.0, 1.0], [0.5, 0.4])

    def test_non_finite_atom(self):
        with pytest.raises(InvalidParameter):
            Discrete([math.inf], [1.0])

    def test_csv_round_trip(self, tmp_path):
        d = Discrete([-0.7, 0.1, 0.9], [0.2, 0.5, 0.3])
        p = tmp_path / "m.csv"
        write_discrete_csv(d, p)
        assert p.read_text().splitlines()[0] == "sigma,weight"
        back = load_discrete_csv(p)
        assert np.array_equal(back.atoms, d.atoms) and np.array_equal(back.weights, d.weights)

    def test_csv_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("atom,w\n0,1\n")
        with pytest.raises(InvalidParameter):
            load_discrete_csv(p)
