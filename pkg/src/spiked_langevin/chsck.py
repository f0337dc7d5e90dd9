"""Deterministic N -> infinity limits of the overlap R(t) and autocorrelation K(t, s).

Two independent routes are implemented.

Fast route (``f(x) = x^2/2`` only): with ``E(t) = exp(int_0^t K)``, ``g = E R``,
``F = E^2`` and ``h = E^2 K``, one has a linear Volterra equation for ``g``

    g(t) = E[Y0 u] M(t) + E[u^2] int_0^t g(s) M(t - s) ds,    M(w) = E[exp(w sigma)],

and ``F' = 2 h`` solves

    F'(t) = 2 beta^{-1} int_0^t F(s) M(2(t - s)) ds + Phi(t),

with ``Phi`` built from ``g``. Then ``R = g / sqrt(F)`` and ``K = h / F``.

General route: relaxed Picard iteration of the closed (R, K) system on the
diagonal ``t = s`` for any non-negative Lipschitz ``f'``.

Every sigma-expectation is a finite sum over the atoms of a
:class:`~spiked_langevin.spectral.QuadratureRule`; every time convolution
against ``exp(c (t - s))`` is carried by one accumulator per atom, so a full
solve costs O(n_steps * m).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import brentq

from .errors import (ConvergenceError, GridMismatch, InvalidParameter, OverflowGuardError,
                     PositivityError)
from .model import resolve_confinement
from .sde import TimeGrid
from .spectral import EXP_BUDGET, QuadratureRule

RESCALE_THRESHOLD = 300.0
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
DEFAULT_RELAXATION = 0.6


@dataclass(frozen=True)
class Moments:
    """Second moments of the limiting law of ``(u, Y0)``."""

    E_u2: float
    E_Y0u: float
    E_Y02: float = 1.0

    def __post_init__(self):
        if not self.E_u2 > 0:
            raise InvalidParameter(f"E[u^2] must be positive, got {self.E_u2!r}")
        if not self.E_Y02 > 0:
            raise InvalidParameter(f"E[Y0^2] must be positive, got {self.E_Y02!r}")
        if self.E_Y0u ** 2 > self.E_u2 * self.E_Y02 * (1 + 1e-12):
            raise InvalidParameter("moments violate Cauchy-Schwarz: E[Y0 u]^2 > E[u^2] E[Y0^2]")

    @classmethod
    def from_params(cls, lam: float, rho: float) -> "Moments":
        return cls(E_u2=lam, E_Y0u=math.sqrt(lam) * rho, E_Y02=1.0)


@dataclass(frozen=True, eq=False)
class ChsckSolution:
    """Limits on a time grid.

    ``g``, ``F``, ``h`` and ``Phi`` are stored rescaled by ``exp(-shift t)``
    (``g``) and ``exp(-2 shift t)`` (``F``, ``h``, ``Phi``); ``shift`` is 0
    unless the run would overflow. ``R``, ``K_diag`` and ``corr_ratio`` are
    scale free. Picard solutions leave the transformed arrays unset.
    """

    grid: TimeGrid
    R: np.ndarray
    K_diag: np.ndarray
    corr_ratio: np.ndarray
    rule: QuadratureRule
    moments: Moments
    beta: float
    route: str
    g: Optional[np.ndarray] = None
    F: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    Phi: Optional[np.ndarray] = None
    shift: float = 0.0
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# product-integration weights for int_{t_k}^{t_k+h} y(s) exp(c (t_k + h - s)) ds


def _phi1(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    series = 1 + x / 2 + x**2 / 6 + x**3 / 24 + x**4 / 120 + x**5 / 720
    return np.where(small, series, np.expm1(xs) / xs)


def _phi2(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    xs = np.where(small, 1.0, x)
    series = 0.5 + x / 6 + x**2 / 24 + x**3 / 120 + x**4 / 720 + x**5 / 5040
    return np.where(small, series, (np.expm1(xs) - xs) / xs**2)


class _ExpConvolution:
    """Running ``C_j(t) = int_0^t y(s) exp(c_j (t - s)) ds`` with y linear between nodes."""

    def __init__(self, rates, h):
        x = np.asarray(rates, dtype=float) * h
        self.decay = np.exp(x)
        p1, p2 = _phi1(x), _phi2(x)
        self.w_old = h * (p1 - p2)
        self.w_new = h * p2

    def advance(self, C, y_old):
        """Everything of the next value except the ``w_new * y_new`` term."""
        return self.decay * C + self.w_old * y_old


# ---------------------------------------------------------------------------
# growth rates of the rule-discretized system, used for overflow control


def _rule_stieltjes(rule, z):
    return float(rule.weights @ (1.0 / (z - rule.nodes)))


def rule_growth_rates(rule: QuadratureRule, moments: Moments, beta_inv: float) -> tuple[float, float]:
    """Exponential rates of ``g`` and ``F`` for the discretized measure.

    The rate of ``g`` is the root of ``E[u^2] S(z) = 1`` above the top atom;
    the rate of ``F`` is the largest of twice that, the noise root of
    ``z = beta^{-1} S(z/2)``, and twice the top atom.
    """
    top = float(rule.nodes.max())
    b = moments.E_u2
    eps = 1e-12 * max(1.0, abs(top))
    rate_g = brentq(lambda z: b * _rule_stieltjes(rule, z) - 1.0, top + eps, top + b + 1.0, xtol=1e-14)
    rate_F = max(2 * rate_g, 2 * top)
    if beta_inv > 0:
        s = brentq(lambda z: z - beta_inv * _rule_stieltjes(rule, z / 2), 2 * top + 2 * eps,
                   2 * top + 2 * beta_inv + 2.0, xtol=1e-14)
        rate_F = max(rate_F, s)
    return rate_g, rate_F


def _beta_inv(beta) -> float:
    if beta is None or math.isinf(beta):
        return 0.0
    if not beta > 0:
        raise InvalidParameter(f"beta must be positive or inf, got {beta!r}")
    return 1.0 / beta


def _resolve_shift(shift, rule, moments, grid, beta_inv) -> float:
    rate_g, rate_F = rule_growth_rates(rule, moments, beta_inv)
    if shift is None or shift == "auto":
        shift = 0.5 * rate_F if 0.5 * rate_F * grid.t_end > RESCALE_THRESHOLD else 0.0
    shift = float(shift)
    top = float(rule.nodes.max())
    # only growing exponentials can overflow; decaying ones underflow harmlessly to 0
    worst = max(2 * (top - shift), rate_F - 2 * shift, 0.0)
    if worst * grid.t_end > EXP_BUDGET:
        raise OverflowGuardError(f"exponent {worst * grid.t_end:.1f} exceeds {EXP_BUDGET} "
                                 f"(shift = {shift:g}); shorten t_end or rescale")
    return shift


# ---------------------------------------------------------------------------
# fast route


def solve_g_volterra(moments: Moments, rule: QuadratureRule, grid: TimeGrid, shift=0.0) -> np.ndarray:
    """Solve ``g = E[Y0 u] M + E[u^2] (g * M)`` by implicit product trapezoid stepping.

    Returns ``exp(-shift t) g(t)`` on the grid.
    """
    a, b = moments.E_Y0u, moments.E_u2
    x = rule.nodes - shift
    w = rule.weights
    n, h = grid.n_steps, grid.dt
    conv = _ExpConvolution(x, h)
    diag = 1.0 - b * float(w @ conv.w_new)
    g = np.empty(n + 1)
    g[0] = a
    B = np.zeros_like(x)
    for k in range(n):
        t = (k + 1) * h
        B_pre = conv.advance(B, g[k])
        g[k + 1] = (a * float(w @ np.exp(x * t)) + b * float(w @ B_pre)) / diag
        B = B_pre + conv.w_new * g[k + 1]
    return g


def _g_accumulators(g, rule, grid, shift):
    """``B_j(t_k) = int_0^t g(s) exp((sigma_j - shift)(t - s)) ds`` for every k, as rows."""
    x = rule.nodes - shift
    conv = _ExpConvolution(x, grid.dt)
    out = np.empty((grid.n_steps + 1, x.size))
    B = np.zeros_like(x)
    out[0] = B
    for k in range(grid.n_steps):
        B = conv.advance(B, g[k]) + conv.w_new * g[k + 1]
        out[k + 1] = B
    return out


def compute_phi(g, moments: Moments, rule: QuadratureRule, grid: TimeGrid, shift=0.0) -> np.ndarray:
    """Forcing term of the ``F`` equation, rescaled by ``exp(-2 shift t)``.

    The double integral over ``(s1, s2)`` factorizes atom by atom into the
    square of the ``g``-accumulator.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.n_steps + 1,):
        raise GridMismatch(f"g has shape {g.shape}, grid has {grid.n_steps + 1} points")
    a, b, c = moments.E_Y0u, moments.E_u2, moments.E_Y02
    x = rule.nodes - shift
    w = rule.weights
    t = grid.times[:, None]
    B = _g_accumulators(g, rule, grid, shift)
    E1 = np.exp(x * t)
    return 2 * c * (E1 * E1) @ w + 4 * a * (E1 * B) @ w + 2 * b * (B * B) @ w


def solve_F(Phi, rule: QuadratureRule, grid: TimeGrid, beta, shift=0.0) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``F' = 2 beta^{-1} int F(s) M(2(t-s)) ds + Phi`` from ``F(0) = 1``.

    Implicit trapezoid in time (the scalar implicit equation is linear and is
    solved exactly) with product-integrated memory. Returns ``(F, h)`` where
    ``h = F'/2`` is read off the right-hand side, both rescaled by
    ``exp(-2 shift t)``.
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.shape != (grid.n_steps + 1,):
        raise GridMismatch(f"Phi has shape {Phi.shape}, grid has {grid.n_steps + 1} points")
    binv = _beta_inv(beta)
    n, h = grid.n_steps, grid.dt
    w = rule.weights
    conv = _ExpConvolution(2 * (rule.nodes - shift), h)
    gamma = 2 * binv * float(w @ conv.w_new) - 2 * shift
    F = np.empty(n + 1)
    dF = np.empty(n + 1)
    F[0] = 1.0
    dF[0] = Phi[0] - 2 * shift
    D = np.zeros_like(w)
    for k in range(n):
        D_pre = conv.advance(D, F[k])
        alpha = 2 * binv * float(w @ D_pre)
        F[k + 1] = (F[k] + 0.5 * h * (dF[k] + alpha + Phi[k + 1])) / (1.0 - 0.5 * h * gamma)
        dF[k + 1] = alpha + Phi[k + 1] + gamma * F[k + 1]
        D = D_pre + conv.w_new * F[k + 1]
    return F, 0.5 * (dF + 2 * shift * F)


def recover_RK(g, F, h) -> tuple[np.ndarray, np.ndarray]:
    """``R = g / sqrt(F)`` and ``K = h / F`` (invariant under the common rescaling)."""
    F = np.asarray(F, dtype=float)
    if np.any(~(F > 0)):
        k = int(np.argmax(~(F > 0)))
        raise PositivityError(f"F is not positive at grid index {k} (F = {F[k]!r}); integration failed")
    return np.asarray(g) / np.sqrt(F), np.asarray(h) / F


def solve_fast(moments: Moments, rule: QuadratureRule, grid: TimeGrid, beta, shift="auto") -> ChsckSolution:
    """Full (g, F, h) solve followed by recovery of ``R`` and ``K``."""
    t0 = time.perf_counter()
    binv = _beta_inv(beta)
    c = _resolve_shift(shift, rule, moments, grid, binv)
    g = solve_g_volterra(moments, rule, grid, c)
    Phi = compute_phi(g, moments, rule, grid, c)
    F, h = solve_F(Phi, rule, grid, beta, c)
    R, K = recover_RK(g, F, h)
    corr = g * g / (moments.E_u2 * h)
    return ChsckSolution(grid, R, K, corr, rule, moments, beta, "fast", g=g, F=F, h=h, Phi=Phi, shift=c,
                         diagnostics={"runtime_s": time.perf_counter() - t0, "shift": c})


def correlation_ratio(sol: ChsckSolution) -> np.ndarray:
    """``g^2 / (lambda h) = R^2 / (lambda K(t, t))`` on the grid."""
    lam = sol.moments.E_u2
    if sol.g is not None:
        if np.any(sol.h <= 0):
            raise PositivityError("h must be positive")
        return sol.g ** 2 / (lam * sol.h)
    if np.any(sol.K_diag <= 0):
        raise PositivityError("K must be positive")
    return sol.R ** 2 / (lam * sol.K_diag)


# ---------------------------------------------------------------------------
# general route: Picard iteration on the diagonal


@dataclass(frozen=True, eq=False)
class PicardResult:
    R: np.ndarray
    K_diag: np.ndarray
    iterations: int
    residuals: list
    H_min: float
    H_max: float
    int_DH_max: float

    def __iter__(self):
        # unpacks as (R, K_diag, iterations)
        return iter((self.R, self.K_diag, self.iterations))


def _eval_fprime(fp, K):
    out = np.asarray(fp(K), dtype=float)
    if out.shape != K.shape:
        out = np.array([fp(float(v)) for v in K])
    return out


@dataclass
class _Sweep:
    R: np.ndarray
    K: np.ndarray
    H0: np.ndarray
    Lam: np.ndarray
    H_min: float
    H_max: float
    int_DH_max: float
    P: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    kept: Optional[np.ndarray] = None


def _picard_sweep(fp, R, K, moments, rule, grid, beta_inv, keep_every=None) -> _Sweep:
    """One application of the (R, K) map, with trapezoidal quadrature in time.

    With ``H_s^t = exp(-int_s^t f'(K))`` the per-atom accumulators are
    ``P_j(t) = int_0^t H_s^t R(s) e^{sigma_j (t-s)} ds`` and
    ``Q_j(t) = int_0^t (H_s^t)^2 e^{2 sigma_j (t-s)} ds``.
    """
    a, b, c = moments.E_Y0u, moments.E_u2, moments.E_Y02
    sig, w = rule.nodes, rule.weights
    n, h = grid.n_steps, grid.dt
    fpK = _eval_fprime(fp, K)
    if np.any(fpK < 0):
        raise InvalidParameter("f' must be non-negative along the iterate")
    Lam = np.concatenate(([0.0], np.cumsum(0.5 * h * (fpK[1:] + fpK[:-1]))))
    H0 = np.exp(-Lam)
    Hstep = np.exp(-np.diff(Lam))
    e1 = np.exp(sig * h)
    e2 = e1 * e1
    R_new = np.empty(n + 1)
    K_new = np.empty(n + 1)
    R_new[0] = a
    K_new[0] = c
    P = np.zeros_like(sig)
    Q = np.zeros_like(sig)
    kept_idx = np.arange(0, n + 1, keep_every) if keep_every else None
    P_keep = np.zeros((kept_idx.size, sig.size)) if keep_every else None
    Q_keep = np.zeros_like(P_keep) if keep_every else None
    for k in range(n):
        t = (k + 1) * h
        d1 = e1 * Hstep[k]
        d2 = e2 * Hstep[k] ** 2
        P = d1 * P + 0.5 * h * (d1 * R[k] + R[k + 1])
        Q = d2 * Q + 0.5 * h * (d2 + 1.0)
        Et = np.exp(sig * t)
        H = H0[k + 1]
        R_new[k + 1] = H * a * float(w @ Et) + b * float(w @ P)
        K_new[k + 1] = (beta_inv * float(w @ Q) + H * H * c * float(w @ (Et * Et))
                        + 2 * a * H * float(w @ (Et * P)) + b * float(w @ (P * P)))
        if keep_every and (k + 1) % keep_every == 0:
            P_keep[(k + 1) // keep_every] = P
            Q_keep[(k + 1) // keep_every] = Q
    # H_s^t over all evaluated pairs lies in [exp(-Lam_max), 1]; DH >= 0 because f' >= 0,
    # so int_0^t |DH_u^t| du telescopes to 1 - H_0^t
    H_min = float(np.exp(-(Lam[-1] - Lam[0])))
    H_max = float(max(H0.max(), Hstep.max() if n else 1.0))
    int_DH = float((1.0 - H0).max())
    return _Sweep(R_new, K_new, H0, Lam, H_min, H_max, int_DH, P_keep, Q_keep, kept_idx)


def picard_step(fprime, R, K, moments: Moments, rule: QuadratureRule, grid: TimeGrid, beta):
    """One unrelaxed application of the (R, K) map; returns the new ``(R, K_diag)``."""
    sw = _picard_sweep(resolve_confinement(fprime), np.asarray(R, dtype=float), np.asarray(K, dtype=float),
                       moments, rule, grid, _beta_inv(beta))
    return sw.R, sw.K


def picard_initial_guess(moments: Moments, rule: QuadratureRule, grid: TimeGrid):
    t = grid.times[:, None]
    E = np.exp(rule.nodes * t)
    return moments.E_Y0u * (E @ rule.weights), moments.E_Y02 * ((E * E) @ rule.weights)


def solve_picard_general(fprime, moments: Moments, rule: QuadratureRule, grid: TimeGrid, beta,
                         tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                         initial=None, relaxation: float = DEFAULT_RELAXATION) -> PicardResult:
    """Picard iteration of the (R, K) fixed-point maps restricted to the diagonal.

    Starts from the no-interaction terms ``R_0 = E[Y0 u] M(t)``,
    ``K_0 = E[Y0^2] M(2t)`` unless ``initial`` is given. Each step moves the
    iterate a fraction ``relaxation`` of the way to its image; 1 is the plain
    iteration. The K-map is decreasing in K (more confinement, less mass), so
    the plain iteration overshoots into a slowly damped two-cycle; any
    relaxation below 1 keeps the same fixed point and removes it.

    The residual is the sup-norm of ``map(R, K) - (R, K)``; iteration stops
    once it drops below ``tol``.
    """
    if not tol > 0:
        raise InvalidParameter("tol must be positive")
    if not 0.0 < relaxation <= 1.0:
        raise InvalidParameter(f"relaxation must lie in (0, 1], got {relaxation!r}")
    fp = resolve_confinement(fprime)
    binv = _beta_inv(beta)
    top = float(np.abs(rule.nodes).max())
    if 2 * top * grid.t_end > EXP_BUDGET:
        raise OverflowGuardError(f"2 max|sigma| t_end = {2 * top * grid.t_end:.1f} exceeds {EXP_BUDGET}")
    R, K = picard_initial_guess(moments, rule, grid) if initial is None else initial
    R = np.array(R, dtype=float)
    K = np.array(K, dtype=float)
    if R.shape != (grid.n_steps + 1,) or K.shape != R.shape:
        raise GridMismatch("initial guess does not match the time grid")
    residuals = []
    H_min, H_max, int_DH = 1.0, 0.0, 0.0
    for it in range(1, max_iter + 1):
        sw = _picard_sweep(fp, R, K, moments, rule, grid, binv)
        if not (0.0 <= sw.H_min and sw.H_max <= 1.0 + 1e-15 and sw.int_DH_max <= 1.0 + 1e-15):
            raise AssertionError(f"H bounds violated at iteration {it}: "
                                 f"H in [{sw.H_min}, {sw.H_max}], int|DH| = {sw.int_DH_max}")
        H_min, H_max = min(H_min, sw.H_min), max(H_max, sw.H_max)
        int_DH = max(int_DH, sw.int_DH_max)
        if not (np.all(np.isfinite(sw.R)) and np.all(np.isfinite(sw.K))):
            raise ConvergenceError(f"Picard iterate became non-finite at iteration {it}",
                                   residual=float("inf"), iterations=it)
        res = max(float(np.abs(sw.R - R).max()), float(np.abs(sw.K - K).max()))
        residuals.append(res)
        if res < tol:
            return PicardResult(sw.R, sw.K, it, residuals, H_min, H_max, int_DH)
        R = R + relaxation * (sw.R - R)
        K = K + relaxation * (sw.K - K)
    raise ConvergenceError(f"Picard iteration did not reach tol = {tol:g} in {max_iter} iterations "
                           f"(final residual {residuals[-1]:.3e})", residual=residuals[-1], iterations=max_iter)


def solve_picard(moments: Moments, rule: QuadratureRule, grid: TimeGrid, beta, fprime="quadratic",
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 relaxation: float = DEFAULT_RELAXATION) -> ChsckSolution:
    t0 = time.perf_counter()
    res = solve_picard_general(fprime, moments, rule, grid, beta, tol, max_iter, relaxation=relaxation)
    if np.any(res.K_diag <= 0):
        raise PositivityError("Picard solution has non-positive K")
    corr = res.R ** 2 / (moments.E_u2 * res.K_diag)
    diag = {"runtime_s": time.perf_counter() - t0, "iterations": res.iterations,
            "final_residual": res.residuals[-1], "residuals": res.residuals,
            "H_min": res.H_min, "H_max": res.H_max, "int_DH_max": res.int_DH_max, "relaxation": relaxation}
    return ChsckSolution(grid, res.R, res.K_diag, corr, rule, moments, beta, "picard", diagnostics=diag)


def evaluate_K_offdiag(R, K_diag, moments: Moments, rule: QuadratureRule, grid: TimeGrid, beta,
                       subsample: int, fprime="quadratic") -> tuple[np.ndarray, np.ndarray]:
    """Two-time autocorrelation ``K(t_i, t_j)`` on every ``subsample``-th grid point.

    Uses the solved diagonal inside the ``H`` factors and ``R`` inside the
    memory terms, so the map is explicit. Returns ``(times, K)`` with ``K``
    symmetric by construction.
    """
    R = np.asarray(R, dtype=float)
    K_diag = np.asarray(K_diag, dtype=float)
    if R.shape != (grid.n_steps + 1,) or K_diag.shape != R.shape:
        raise GridMismatch("R and K_diag must live on the grid")
    if int(subsample) != subsample or subsample < 1:
        raise InvalidParameter(f"subsample must be an integer >= 1, got {subsample!r}")
    subsample = int(subsample)
    a, b, c = moments.E_Y0u, moments.E_u2, moments.E_Y02
    binv = _beta_inv(beta)
    sw = _picard_sweep(resolve_confinement(fprime), R, K_diag, moments, rule, grid, binv, keep_every=subsample)
    idx = sw.kept
    t = grid.times[idx]
    w = rule.weights
    E = np.exp(np.outer(t, rule.nodes))
    H0 = sw.H0[idx]
    Lam = sw.Lam[idx]
    P, Q = sw.P, sw.Q
    cross = (E * w) @ P.T                       # [i, j] = sum_j w e^{sigma t_i} P(t_j)
    Kmat = (c * np.outer(H0, H0) * ((E * w) @ E.T)
            + a * (H0[:, None] * cross + (H0[:, None] * cross).T)
            + b * (P * w) @ P.T)
    if binv:
        # noise term, valid for t_i >= t_j: H_{t_j}^{t_i} sum w e^{sigma (t_i - t_j)} Q(t_j)
        noise = (E * w) @ (Q / E).T
        decay = np.exp(-np.clip(Lam[:, None] - Lam[None, :], 0.0, None))
        Kmat = Kmat + binv * decay * noise
    lower = np.tril(Kmat)
    return t, lower + np.tril(lower, -1).T
