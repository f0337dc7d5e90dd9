"""Closed-form large-time objects: growth rates, regimes and the limiting correlation.

With ``lam_t = lambda + sigma_star^2 / (4 lambda)`` the signal part ``g`` grows
like ``exp(lam_t t)`` and the noise part of ``h`` like ``exp(s_beta t)``,
where ``s_beta`` is the largest root of ``z = beta^{-1} S(z/2)`` (or
``2 sigma_star`` when that equation has no root outside the bulk). Which of
``2 lam_t`` and ``s_beta`` is larger decides whether the diffusion ends up
correlated with the spike.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (ConsistencyError, CriticalPointError, InvalidParameter, OverflowGuardError,
                     RegimeError)
from .spectral import EXP_BUDGET, Semicircle, inverse_square_moment, semicircle_quadrature, stieltjes

BRANCH_CUT_ORDER = 400
S_BETA_TOL = 1e-12
S_BETA_AGREEMENT = 1e-9
CRITICAL_RTOL = 1e-12


class Regime(str, enum.Enum):
    BELOW_BBP = "below_bbp"
    ZERO_INIT = "zero_init"
    SUBCRITICAL_NOISE = "subcritical_noise"
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"


@dataclass(frozen=True)
class PhasePoint:
    """One classified parameter point. ``limit_corr`` is None on the critical boundary."""

    lam: float
    beta: float
    sigma_star: float
    rho: float
    lambda_tilde: float
    s_beta: float
    regime: Regime
    limit_corr: Optional[float]

    def as_row(self) -> dict:
        return {
            "lambda": self.lam,
            "beta": self.beta,
            "sigma_star": self.sigma_star,
            "rho": self.rho,
            "lambda_tilde": self.lambda_tilde,
            "s_beta": self.s_beta,
            "regime": self.regime.value,
            "limit_corr": self.limit_corr,
        }


def _check_positive(name, x, allow_inf=False):
    if allow_inf and x == math.inf:
        return
    if not (x > 0 and math.isfinite(x)):
        raise InvalidParameter(f"{name} must be positive, got {x!r}")


def _beta_inv(beta: float) -> float:
    _check_positive("beta", beta, allow_inf=True)
    return 0.0 if math.isinf(beta) else 1.0 / beta


def lambda_tilde(lam: float, sigma_star: float = 1.0) -> float:
    """Location of the outlier eigenvalue, ``lambda + sigma_star^2 / (4 lambda)``."""
    _check_positive("lambda", lam)
    _check_positive("sigma_star", sigma_star)
    return lam + sigma_star ** 2 / (4.0 * lam)


def s_beta_closed_form(beta: float, sigma_star: float = 1.0) -> float:
    """``2 / sqrt(beta (2 - beta sigma_star^2))``; the noise root when ``beta sigma_star^2 < 1``."""
    _check_positive("beta", beta)
    _check_positive("sigma_star", sigma_star)
    if beta * sigma_star ** 2 >= 1.0:
        return 2.0 * sigma_star
    return 2.0 / math.sqrt(beta * (2.0 - beta * sigma_star ** 2))


def s_beta(beta: float, sigma_star: float = 1.0) -> float:
    """Noise growth rate: the largest real root of ``z = beta^{-1} S(z / 2)``, else ``2 sigma_star``.

    The root is bracketed in ``(2 sigma_star, 2 sigma_star + 2 / (beta sigma_star)]``,
    found by bisection and checked against :func:`s_beta_closed_form`.
    ``beta = inf`` (gradient flow) gives ``2 sigma_star``.
    """
    _check_positive("sigma_star", sigma_star)
    if beta == math.inf:
        return 2.0 * sigma_star
    _check_positive("beta", beta)
    if beta * sigma_star ** 2 >= 1.0:
        return 2.0 * sigma_star
    mu = Semicircle(sigma_star)
    binv = 1.0 / beta

    def phi(z):
        return z - binv * stieltjes(mu, z / 2.0)

    lo = 2.0 * sigma_star
    hi = 2.0 * sigma_star + 2.0 / (beta * sigma_star)
    # phi(edge) = 2 sigma (1 - 1/(beta sigma^2)) < 0 and phi(hi) > 0 on this branch
    if phi(hi) <= 0:
        raise ConsistencyError(f"s_beta bracket does not contain the root (beta={beta}, sigma_star={sigma_star})")
    while hi - lo > S_BETA_TOL * hi:
        mid = 0.5 * (lo + hi)
        if mid <= 2.0 * sigma_star or phi(mid) < 0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    closed = s_beta_closed_form(beta, sigma_star)
    if abs(root - closed) > S_BETA_AGREEMENT:
        raise ConsistencyError(f"s_beta: bisection {root!r} and closed form {closed!r} disagree")
    return root


def noise_threshold_beta(lam: float, sigma_star: float = 1.0) -> Optional[float]:
    """The ``beta`` at which ``2 lambda_tilde = s_beta``, or None if the noise never wins.

    ``s_beta = 2 lambda_tilde`` reduces to ``sigma^2 beta^2 - 2 beta + lambda_tilde^{-2} = 0``
    on the branch ``beta sigma^2 < 1``; the smaller root is the one on that branch.
    """
    lt = lambda_tilde(lam, sigma_star)
    s2 = sigma_star ** 2
    if lt <= sigma_star:
        return None
    return (1.0 - math.sqrt(1.0 - s2 / lt ** 2)) / s2


def _is_critical(two_lt: float, sb: float) -> bool:
    return abs(two_lt - sb) <= CRITICAL_RTOL * max(two_lt, sb)


def _supercritical_value(lam, beta_inv, sigma_star):
    lt = lambda_tilde(lam, sigma_star)
    return (1.0 - beta_inv / (2.0 * lam * lt)) * (1.0 - sigma_star ** 2 / (4.0 * lam ** 2))


def classify(lam: float, beta: float, sigma_star: float = 1.0, rho: float = 0.5) -> PhasePoint:
    if not 0.0 <= rho <= 1.0:
        raise InvalidParameter(f"rho must lie in [0, 1], got {rho!r}")
    lt = lambda_tilde(lam, sigma_star)
    sb = s_beta(beta, sigma_star)
    if lam <= sigma_star / 2.0:
        regime = Regime.BELOW_BBP
    elif rho == 0.0:
        regime = Regime.ZERO_INIT
    elif _is_critical(2.0 * lt, sb):
        regime = Regime.CRITICAL
    elif 2.0 * lt < sb:
        regime = Regime.SUBCRITICAL_NOISE
    else:
        regime = Regime.SUPERCRITICAL
    corr = None
    if regime is Regime.SUPERCRITICAL:
        corr = _supercritical_value(lam, _beta_inv(beta), sigma_star)
    elif regime is not Regime.CRITICAL:
        corr = 0.0
    return PhasePoint(float(lam), float(beta), float(sigma_star), float(rho), lt, sb, regime, corr)


def limiting_correlation(point: PhasePoint) -> float:
    """``lim R^2 / (lambda K)``: zero unless supercritical, undefined at criticality."""
    if point.regime is Regime.CRITICAL:
        raise CriticalPointError(f"limit undefined at 2*lambda_tilde = s_beta "
                                 f"(lambda={point.lam}, beta={point.beta})")
    if point.regime is not Regime.SUPERCRITICAL:
        return 0.0
    return _supercritical_value(point.lam, _beta_inv(point.beta), point.sigma_star)


def g_closed_form(t, lam: float, sigma_star: float = 1.0, rho: float = 0.5, order: int = BRANCH_CUT_ORDER):
    """Explicit signal term ``g(t)`` for the semicircle law.

    An outlier term ``(1 - sigma^2 / 4 lambda^2)_+ exp(lambda_tilde t)`` plus a
    branch-cut integral over the bulk. The integral is written as a semicircle
    expectation of ``exp(x t) / (lambda_tilde - x)`` and evaluated with the
    Chebyshev-U rule of ``order`` nodes. Accepts scalar or array ``t``.
    """
    lt = lambda_tilde(lam, sigma_star)
    if not 0.0 <= rho <= 1.0:
        raise InvalidParameter(f"rho must lie in [0, 1], got {rho!r}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidParameter("t must be non-negative")
    if t_arr.size and float(t_arr.max()) * lt > EXP_BUDGET:
        raise OverflowGuardError(f"lambda_tilde * t = {float(t_arr.max()) * lt:.1f} exceeds {EXP_BUDGET}")
    rule = semicircle_quadrature(sigma_star, order)
    x = rule.nodes
    outlier = max(1.0 - sigma_star ** 2 / (4.0 * lam ** 2), 0.0) * np.exp(lt * t_arr)
    # (1 / 2 pi lam) * int e^{xt} sqrt(s^2 - x^2) / (lt - x) dx = (s^2 / 4 lam) * E_sc[e^{xt} / (lt - x)]
    bulk = sigma_star ** 2 / (4.0 * lam) * (np.exp(np.multiply.outer(t_arr, x)) @ (rule.weights / (lt - x)))
    out = math.sqrt(lam) * rho * (outlier + bulk)
    return float(out) if out.ndim == 0 else out


def g_growth_prefactor(lam: float, sigma_star: float = 1.0, rho: float = 0.5) -> float:
    """``lim exp(-lambda_tilde t) g(t) = sqrt(lambda) rho (1 - sigma^2 / 4 lambda^2)_+``."""
    _check_positive("lambda", lam)
    _check_positive("sigma_star", sigma_star)
    return math.sqrt(lam) * rho * max(1.0 - sigma_star ** 2 / (4.0 * lam ** 2), 0.0)


def h_growth_prefactor(lam: float, beta: float, sigma_star: float = 1.0, rho: float = 0.5) -> float:
    """``lim exp(-2 lambda_tilde t) h(t)``; defined in the supercritical regime only."""
    point = classify(lam, beta, sigma_star, rho)
    if point.regime is not Regime.SUPERCRITICAL:
        raise RegimeError(f"h growth prefactor needs the supercritical regime, got {point.regime.value}")
    mu = Semicircle(sigma_star)
    lt = point.lambda_tilde
    binv = _beta_inv(beta)
    amplification = 2.0 * lt / (2.0 * lt - binv * stieltjes(mu, lt))
    edge = max(1.0 - sigma_star ** 2 / (4.0 * lam ** 2), 0.0)
    return amplification * inverse_square_moment(mu, lt) * lam ** 2 * rho ** 2 * edge ** 2


def phase_grid(lambdas: Sequence[float], betas: Sequence[float], sigma_star: float = 1.0,
               rho: float = 0.5) -> list[PhasePoint]:
    """Classify every ``(lambda, beta)`` pair; lambda is the outer (row) index."""
    lambdas = [float(v) for v in lambdas]
    betas = [float(v) for v in betas]
    if not lambdas or not betas:
        raise InvalidParameter("phase grid needs at least one lambda and one beta")
    out = []
    for i, lam in enumerate(lambdas):
        for j, beta in enumerate(betas):
            try:
                out.append(classify(lam, beta, sigma_star, rho))
            except InvalidParameter as exc:
                raise InvalidParameter(f"phase grid point ({i}, {j}) lambda={lam}, beta={beta}: {exc}") from exc
    return out


def linspace_axis(lo: float, hi: float, steps: int) -> list[float]:
    """``steps >= 2`` equally spaced values from ``lo`` to ``hi`` inclusive."""
    if int(steps) != steps or steps < 2:
        raise InvalidParameter(f"resolution must be an integer >= 2, got {steps!r}")
    if not (lo > 0 and hi > lo and math.isfinite(hi)):
        raise InvalidParameter(f"range must satisfy 0 < min < max < inf, got [{lo}, {hi}]")
    return np.linspace(lo, hi, int(steps)).tolist()
