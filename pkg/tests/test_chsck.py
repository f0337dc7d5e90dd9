import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid

from spiked_langevin.asymptotics import g_closed_form
from spiked_langevin.chsck import (Moments, compute_phi, correlation_ratio, evaluate_K_offdiag,
                                   picard_initial_guess, picard_step, recover_RK, solve_F, solve_fast,
                                   solve_g_volterra, solve_picard, solve_picard_general)
from spiked_langevin.errors import (ConvergenceError, GridMismatch, InvalidParameter, OverflowGuardError,
                                    PositivityError)
from spiked_langevin.sde import TimeGrid
from spiked_langevin.spectral import Discrete, bessel_mgf, semicircle_quadrature

ZERO_RULE = Discrete([0.0], [1.0]).rule()


class TestMoments:
    def test_from_params(self):
        m = Moments.from_params(4.0, 0.5)
        assert (m.E_u2, m.E_Y0u, m.E_Y02) == (4.0, 1.0, 1.0)

    @pytest.mark.parametrize("args", [(0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (1.0, 1.5, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameter):
            Moments(*args)


class TestVolterra:
    def test_initial_value(self, moments_ref, rule200):
        g = solve_g_volterra(moments_ref, rule200, TimeGrid(1.0, 1e-2))
        assert g[0] == moments_ref.E_Y0u

    @pytest.mark.parametrize("t", [1.0, 2.0, 5.0])
    def test_single_atom_exponential(self, moments_ref, t):
        grid = TimeGrid(5.0, 1e-3)
        g = solve_g_volterra(moments_ref, ZERO_RULE, grid)
        assert g[grid.index(t)] == pytest.approx(0.5 * math.exp(t), rel=1e-5)

    def test_against_closed_form(self, moments_ref, rule200):
        grid = TimeGrid(5.0, 1e-3)
        g = solve_g_volterra(moments_ref, rule200, grid)
        ref = g_closed_form(grid.times, 1.0, 1.0, 0.5)
        assert np.max(np.abs(g / ref - 1)) < 1e-4

    def test_second_order_in_dt(self, moments_ref, rule200):
        ref = g_closed_form(2.0, 1.0, 1.0, 0.5)
        errs = [abs(solve_g_volterra(moments_ref, rule200, TimeGrid(2.0, dt))[-1] - ref) for dt in (4e-2, 2e-2, 1e-2)]
        slope = np.polyfit(np.log([4e-2, 2e-2, 1e-2]), np.log(errs), 1)[0]
        assert slope > 1.8


class TestPhiAndF:
    def test_phi_at_zero(self, moments_ref, rule200):
        grid = TimeGrid(1.0, 1e-2)
        phi = compute_phi(solve_g_volterra(moments_ref, rule200, grid), moments_ref, rule200, grid)
        assert phi[0] == pytest.approx(2.0, abs=1e-14)

    def test_phi_without_signal(self, rule200):
        m = Moments.from_params(1.0, 0.0)
        grid = TimeGrid(2.0, 1e-2)
        g = solve_g_volterra(m, rule200, grid)
        assert np.all(g == 0)
        phi = compute_phi(g, m, rule200, grid)
        assert np.allclose(phi, [2 * bessel_mgf(2 * t) for t in grid.times], rtol=1e-12)

    def test_phi_single_atom(self, moments_ref):
        grid = TimeGrid(1.0, 1e-3)
        phi = compute_phi(solve_g_volterra(moments_ref, ZERO_RULE, grid), moments_ref, ZERO_RULE, grid)
        A = 0.5 * (math.e - 1)
        assert abs(phi[-1] - (2 + 2 * A + 2 * A * A)) < 1e-4
        assert abs(phi[-1] - 5.1945) < 1e-4

    def test_phi_grid_mismatch(self, moments_ref, rule200):
        with pytest.raises(GridMismatch):
            compute_phi(np.zeros(5), moments_ref, rule200, TimeGrid(1.0, 0.1))

    def test_F_initial_and_h0(self, moments_ref, rule200):
        grid = TimeGrid(1.0, 1e-2)
        phi = compute_phi(solve_g_volterra(moments_ref, rule200, grid), moments_ref, rule200, grid)
        F, h = solve_F(phi, rule200, grid, 10.0)
        assert F[0] == 1.0 and h[0] == pytest.approx(1.0, abs=1e-14)

    def test_gradient_flow_scalar(self):
        m = Moments.from_params(1.0, 0.0)
        grid = TimeGrid(2.0, 1e-3)
        phi = compute_phi(solve_g_volterra(m, ZERO_RULE, grid), m, ZERO_RULE, grid)
        F, h = solve_F(phi, ZERO_RULE, grid, math.inf)
        assert np.allclose(F, 1 + 2 * grid.times, atol=1e-12) and np.allclose(h, 1.0, atol=1e-12)
        R, K = recover_RK(np.zeros_like(F), F, h)
        assert abs(K[grid.index(1.0)] - 1 / 3) < 1e-6

    def test_gradient_flow_is_integral_of_phi(self, moments_ref, rule200):
        grid = TimeGrid(3.0, 1e-3)
        phi = compute_phi(solve_g_volterra(moments_ref, rule200, grid), moments_ref, rule200, grid)
        F, h = solve_F(phi, rule200, grid, math.inf)
        assert np.max(np.abs(F - (1 + cumulative_trapezoid(phi, grid.times, initial=0.0))) / F) < 1e-8
        assert np.allclose(h, phi / 2, rtol=1e-14)

    def test_recover_requires_positive_F(self):
        with pytest.raises(PositivityError):
            recover_RK(np.ones(3), np.array([1.0, 0.0, 1.0]), np.ones(3))


@pytest.fixture(scope="module")
def sol():
    return solve_fast(Moments.from_params(1.0, 0.5), semicircle_quadrature(1.0, 200), TimeGrid(5.0, 1e-3), 10.0)


@pytest.fixture(scope="module")
def run():
    m = Moments.from_params(1.0, 0.5)
    rule = semicircle_quadrature(1.0, 200)
    grid = TimeGrid(5.0, 2e-3)
    return m, rule, grid, solve_picard_general("quadratic", m, rule, grid, 10.0, tol=1e-8)


class TestFastSolution:
    def test_initial_values(self, sol):
        assert sol.R[0] == pytest.approx(0.5) and sol.K_diag[0] == pytest.approx(1.0)
        assert sol.g[0] == 0.5 and sol.F[0] == 1.0 and sol.h[0] == pytest.approx(1.0)
        assert sol.corr_ratio[0] == pytest.approx(0.25)

    def test_F_positive_nondecreasing(self, sol):
        assert np.all(sol.F > 0) and np.all(np.diff(sol.F) >= 0)

    def test_h_is_half_derivative_of_F(self, sol):
        dF = np.gradient(sol.F, sol.grid.dt)
        assert np.max(np.abs(dF[1:-1] / 2 - sol.h[1:-1]) / sol.h[1:-1]) < 1e-5

    def test_ratio_consistent(self, sol):
        assert np.allclose(correlation_ratio(sol), sol.R ** 2 / (1.0 * sol.K_diag), rtol=1e-12)

    def test_zero_overlap_start(self, rule200):
        sol = solve_fast(Moments.from_params(1.5, 0.0), rule200, TimeGrid(5.0, 1e-2), 2.0)
        assert np.all(sol.corr_ratio == 0) and np.all(sol.g == 0)

    @settings(max_examples=12, deadline=None)
    @given(st.floats(0.2, 3.0), st.sampled_from([0.3, 1.0, 5.0, math.inf]), st.floats(0.0, 1.0))
    def test_ratio_in_unit_interval(self, lam, beta, rho):
        sol = solve_fast(Moments.from_params(lam, rho), semicircle_quadrature(1.0, 64), TimeGrid(10.0, 1e-2), beta)
        assert np.all(sol.corr_ratio >= 0) and np.all(sol.corr_ratio <= 1 + 1e-12)

    def test_auto_shift_matches_unshifted(self, rule200):
        # the rescaled equations are a different second-order discretization of the same limits
        m = Moments.from_params(2.0, 0.5)
        gaps = []
        for dt in (1e-2, 5e-3):
            grid = TimeGrid(150.0, dt)
            a = solve_fast(m, rule200, grid, 10.0, shift=0.0)
            b = solve_fast(m, rule200, grid, 10.0)
            assert b.shift > 0 and a.shift == 0
            gaps.append(max(np.max(np.abs(a.R / b.R - 1)), np.max(np.abs(a.K_diag / b.K_diag - 1))))
        assert gaps[0] < 5e-4
        assert 3.0 < gaps[0] / gaps[1] < 5.0

    def test_overflow_guard(self, rule200):
        with pytest.raises(OverflowGuardError):
            solve_fast(Moments.from_params(2.0, 0.5), rule200, TimeGrid(200.0, 1e-2), 10.0, shift=0.0)

    def test_long_horizon_with_rescaling(self, rule200):
        sol = solve_fast(Moments.from_params(2.0, 0.5), rule200, TimeGrid(400.0, 2e-2), 10.0)
        assert np.all(np.isfinite(sol.R)) and np.all(np.isfinite(sol.K_diag))


class TestPicard:
    def test_one_step_from_zero_exact_at_origin(self, moments_ref, rule200):
        grid = TimeGrid(1.0, 1e-2)
        z = np.zeros(grid.n_steps + 1)
        R, K = picard_step("quadratic", z, z, moments_ref, rule200, grid, 10.0)
        assert R[0] == moments_ref.E_Y0u and K[0] == moments_ref.E_Y02

    def test_iteration_budget(self, run):
        assert run[3].iterations <= 40

    def test_geometric_decay(self, run):
        res = np.array(run[3].residuals)
        ratios = res[1:] / res[:-1]
        assert np.all(ratios[2:] < 0.9)

    def test_h_bounds(self, run):
        r = run[3]
        assert 0 <= r.H_min <= r.H_max <= 1 and r.int_DH_max <= 1

    def test_agrees_with_fast_route(self, run):
        m, rule, grid, r = run
        fast = solve_fast(m, rule, grid, 10.0)
        assert max(np.abs(fast.R - r.R).max(), np.abs(fast.K_diag - r.K_diag).max()) < 1e-3

    def test_unpacks(self, run):
        R, K, it = run[3]
        assert R.shape == K.shape and it == run[3].iterations

    def test_plain_iteration_same_fixed_point(self, moments_ref, rule200):
        grid = TimeGrid(2.0, 1e-2)
        a = solve_picard_general("quadratic", moments_ref, rule200, grid, 2.0, tol=1e-11, relaxation=1.0)
        b = solve_picard_general("quadratic", moments_ref, rule200, grid, 2.0, tol=1e-11)
        assert np.allclose(a.R, b.R, atol=1e-9) and np.allclose(a.K_diag, b.K_diag, atol=1e-9)

    def test_general_confinement(self, moments_ref, rule200):
        grid = TimeGrid(3.0, 1e-2)
        r = solve_picard_general(lambda x: x * x, moments_ref, rule200, grid, 2.0)
        assert np.all(r.K_diag > 0) and r.H_max <= 1 and r.int_DH_max <= 1
        Rq, Kq, _ = solve_picard_general("quadratic", moments_ref, rule200, grid, 2.0)
        assert not np.allclose(Kq, r.K_diag)

    def test_negative_fprime_rejected(self, moments_ref, rule200):
        with pytest.raises(InvalidParameter):
            solve_picard_general(lambda x: -1.0 - x, moments_ref, rule200, TimeGrid(1.0, 0.1), 2.0)

    def test_no_convergence_reports_residual(self, moments_ref, rule200):
        with pytest.raises(ConvergenceError) as info:
            solve_picard_general("quadratic", moments_ref, rule200, TimeGrid(2.0, 1e-2), 2.0, max_iter=2)
        assert info.value.residual > 0 and info.value.iterations == 2

    def test_bad_initial_guess(self, moments_ref, rule200):
        with pytest.raises(GridMismatch):
            solve_picard_general("quadratic", moments_ref, rule200, TimeGrid(1.0, 0.1), 2.0,
                                 initial=(np.zeros(3), np.zeros(3)))

    def test_solution_object(self, moments_ref, rule200):
        sol = solve_picard(moments_ref, rule200, TimeGrid(2.0, 1e-2), 2.0)
        assert sol.route == "picard" and sol.diagnostics["iterations"] >= 1
        assert np.allclose(correlation_ratio(sol), sol.corr_ratio)

    def test_initial_guess_is_no_interaction(self, moments_ref, rule200):
        grid = TimeGrid(1.0, 0.5)
        R0, K0 = picard_initial_guess(moments_ref, rule200, grid)
        assert R0[-1] == pytest.approx(0.5 * bessel_mgf(1.0), rel=1e-12)
        assert K0[-1] == pytest.approx(bessel_mgf(2.0), rel=1e-12)


class TestOffDiagonal:
    def test_diagonal_and_symmetry(self, moments_ref, rule200):
        # at the discrete fixed point the two-time map reproduces its own diagonal
        grid = TimeGrid(3.0, 2e-3)
        sol = solve_picard(moments_ref, rule200, grid, 2.0, tol=1e-10)
        t, K = evaluate_K_offdiag(sol.R, sol.K_diag, moments_ref, rule200, grid, 2.0, subsample=100)
        assert np.array_equal(K, K.T)
        assert np.max(np.abs(np.diag(K) - sol.K_diag[::100])) < 1e-6
        assert t.size == 16

    def test_diagonal_from_fast_route(self, moments_ref, rule200):
        # fed the other discretization, the diagonal agrees to its O(dt^2) error
        grid = TimeGrid(3.0, 2e-3)
        sol = solve_fast(moments_ref, rule200, grid, 2.0)
        _, K = evaluate_K_offdiag(sol.R, sol.K_diag, moments_ref, rule200, grid, 2.0, subsample=100)
        assert np.max(np.abs(np.diag(K) - sol.K_diag[::100])) < 1e-5

    def test_scalar_oracle(self):
        m = Moments.from_params(1.0, 0.0)
        grid = TimeGrid(2.0, 1e-3)
        sol = solve_fast(m, ZERO_RULE, grid, math.inf)
        t, K = evaluate_K_offdiag(sol.R, sol.K_diag, m, ZERO_RULE, grid, math.inf, subsample=500)
        i, j = list(t).index(1.0), list(t).index(0.5)
        assert abs(K[i, j] - ((1 + 2 * 1.0) * (1 + 2 * 0.5)) ** -0.5) < 1e-5
        assert np.max(np.abs(K - np.outer((1 + 2 * t) ** -0.5, (1 + 2 * t) ** -0.5))) < 1e-5

    def test_positive_semidefinite(self, moments_ref, rule200):
        grid = TimeGrid(2.0, 2e-3)
        sol = solve_fast(moments_ref, rule200, grid, 1.0)
        _, K = evaluate_K_offdiag(sol.R, sol.K_diag, moments_ref, rule200, grid, 1.0, subsample=50)
        assert np.linalg.eigvalsh(K).min() > -1e-8 * np.abs(K).max()

    def test_grid_mismatch(self, moments_ref, rule200):
        with pytest.raises(GridMismatch):
            evaluate_K_offdiag(np.zeros(3), np.zeros(3), moments_ref, rule200, TimeGrid(1.0, 0.1), 1.0, 2)
