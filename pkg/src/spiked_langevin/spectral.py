"""Spectral measures of the noise matrix and the quadrature used to integrate against them.

Two measures are supported: the semicircle law on ``[-sigma_star, sigma_star]`` and
finitely supported (discrete) laws. Every expectation ``E[phi(sigma)]`` used by the
deterministic solvers is discretized through a :class:`QuadratureRule`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DomainError, InvalidParameter, OverflowGuardError

DEFAULT_RULE_ORDER = 200
EXP_BUDGET = 700.0
_QUANTILE_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and probability weights discretizing a spectral measure."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        nodes, weights = _frozen(self.nodes), _frozen(self.weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise InvalidParameter("nodes and weights must be non-empty 1-d arrays of equal length")
        if np.any(weights <= 0):
            raise InvalidParameter("quadrature weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"quadrature weights sum to {weights.sum()!r}, expected 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.nodes.min()), float(self.nodes.max())

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Weighted sum over the last axis of ``values`` (shape ``(..., m)``)."""
        return np.asarray(values) @ self.weights


@dataclass(frozen=True)
class Semicircle:
    """Semicircle law with density ``(2 / (pi s^2)) sqrt(s^2 - x^2)`` on ``[-s, s]``."""

    sigma_star: float = 1.0

    def __post_init__(self):
        if not (self.sigma_star > 0 and math.isfinite(self.sigma_star)):
            raise InvalidParameter(f"sigma_star must be positive and finite, got {self.sigma_star!r}")

    @property
    def support(self) -> tuple[float, float]:
        return -self.sigma_star, self.sigma_star

    def rule(self, order: int = DEFAULT_RULE_ORDER) -> QuadratureRule:
        return semicircle_quadrature(self.sigma_star, order)


@dataclass(frozen=True)
class Discrete:
    """Finitely supported law ``sum_j w_j delta_{atoms_j}``."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms, weights = _frozen(self.atoms), _frozen(self.weights)
        if atoms.ndim != 1 or atoms.shape != weights.shape or atoms.size == 0:
            raise InvalidParameter("atoms and weights must be non-empty 1-d arrays of equal length")
        if not np.all(np.isfinite(atoms)):
            raise InvalidParameter("atoms must be finite")
        if np.any(weights <= 0):
            raise InvalidParameter("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidParameter(f"weights sum to {weights.sum()!r}, expected 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.atoms.min()), float(self.atoms.max())

    def rule(self, order: int | None = None) -> QuadratureRule:
        # the atoms are already an exact rule; ``order`` is accepted for interface parity
        return QuadratureRule(self.atoms, self.weights, order=self.atoms.size)


SpectralMeasure = Union[Semicircle, Discrete]


def semicircle_quadrature(sigma_star: float, m: int) -> QuadratureRule:
    """Gauss-Chebyshev rule of the second kind, rescaled to ``[-sigma_star, sigma_star]``.

    The Chebyshev-U weight function is exactly the semicircle density, so the
    rule integrates polynomials of degree ``<= 2m - 1`` against the law exactly.
    """
    if not sigma_star > 0:
        raise InvalidParameter(f"sigma_star must be positive, got {sigma_star!r}")
    if int(m) != m or m < 1:
        raise InvalidParameter(f"rule order must be an integer >= 1, got {m!r}")
    m = int(m)
    theta = np.arange(1, m + 1) * np.pi / (m + 1)
    nodes = sigma_star * np.cos(theta)
    weights = 2.0 / (m + 1) * np.sin(theta) ** 2
    # renormalize away the last ulp so the probability invariant holds exactly
    weights = weights / weights.sum()
    return QuadratureRule(nodes, weights, order=m)


def _atoms_of(measure) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(measure, QuadratureRule):
        return measure.nodes, measure.weights
    if isinstance(measure, Discrete):
        return measure.atoms, measure.weights
    raise TypeError(f"not a finite measure: {type(measure).__name__}")


def bessel_mgf(x: float) -> float:
    """``2 I_1(x) / x`` by its power series, i.e. ``sum_k (x^2/4)^k / (k! (k+1)!)``."""
    q = 0.25 * x * x
    term = total = 1.0
    k = 0
    while term > 1e-16 * total:
        term *= q / ((k + 1) * (k + 2))
        total += term
        k += 1
    return total


def mgf(measure, w: float) -> float:
    """``E[exp(w sigma)]`` under ``measure`` (a measure or a quadrature rule)."""
    if isinstance(measure, Semicircle):
        if abs(w) * measure.sigma_star > EXP_BUDGET:
            raise OverflowGuardError(f"|w| * sigma_star = {abs(w) * measure.sigma_star:g} exceeds {EXP_BUDGET}")
        return bessel_mgf(measure.sigma_star * w)
    atoms, weights = _atoms_of(measure)
    if abs(w) * np.abs(atoms).max() > EXP_BUDGET:
        raise OverflowGuardError(f"|w| * max|sigma| exceeds {EXP_BUDGET}")
    return float(weights @ np.exp(w * atoms))


def _check_outside(measure, z: float) -> None:
    lo, hi = measure.support
    if lo <= z <= hi:
        raise DomainError(f"z = {z!r} lies inside the support [{lo}, {hi}]")


def stieltjes(measure, z: float) -> float:
    """Stieltjes transform ``E[1 / (z - sigma)]`` for real ``z`` outside the support."""
    _check_outside(measure, z)
    if isinstance(measure, Semicircle):
        s = measure.sigma_star
        if z < 0:
            return -stieltjes(measure, -z)
        return 2.0 / (z + math.sqrt(z * z - s * s))
    atoms, weights = _atoms_of(measure)
    return float(weights @ (1.0 / (z - atoms)))


def inverse_square_moment(measure, z: float) -> float:
    """``E[1 / (z - sigma)^2]``, the negative derivative of the Stieltjes transform."""
    _check_outside(measure, z)
    if isinstance(measure, Semicircle):
        s = measure.sigma_star
        z = abs(z)
        root = math.sqrt(z * z - s * s)
        # rationalized form of (2/s^2)(z/root - 1); no cancellation at large z
        return 2.0 / (root * (z + root))
    atoms, weights = _atoms_of(measure)
    return float(weights @ (1.0 / (z - atoms) ** 2))


def semicircle_cdf(x, sigma_star: float = 1.0):
    u = np.clip(np.asarray(x, dtype=float) / sigma_star, -1.0, 1.0)
    return 0.5 + (u * np.sqrt(1.0 - u * u) + np.arcsin(u)) / np.pi


def semicircle_quantiles(sigma_star: float, N: int) -> np.ndarray:
    """Deterministic spectrum ``F^{-1}((i - 1/2) / N)``, ``i = 1..N``, in increasing order."""
    if int(N) != N or N < 1:
        raise InvalidParameter(f"N must be an integer >= 1, got {N!r}")
    if not sigma_star > 0:
        raise InvalidParameter(f"sigma_star must be positive, got {sigma_star!r}")
    N = int(N)
    targets = (np.arange(1, N + 1) - 0.5) / N
    lo = np.full(N, -float(sigma_star))
    hi = np.full(N, float(sigma_star))
    tol = _QUANTILE_TOL * max(1.0, sigma_star)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = semicircle_cdf(mid, sigma_star) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    q = 0.5 * (lo + hi)
    if N % 2 == 1:
        q[N // 2] = 0.0  # exact median of a symmetric law
    return q


def load_discrete_csv(path) -> Discrete:
    """Read a two-column ``sigma,weight`` CSV into a :class:`Discrete` measure."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["sigma", "weight"]:
            raise InvalidParameter(f"{path}: expected header 'sigma,weight', got {','.join(header)!r}")
        atoms, weights = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InvalidParameter(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            atoms.append(float(row[0]))
            weights.append(float(row[1]))
    return Discrete(np.array(atoms), np.array(weights))


def write_discrete_csv(measure: Discrete, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sigma", "weight"])
        for a, w in zip(measure.atoms, measure.weights):
            writer.writerow([format(a, ".17g"), format(w, ".17g")])


def measure_from_rule_or_measure(obj, order: int = DEFAULT_RULE_ORDER) -> QuadratureRule:
    if isinstance(obj, QuadratureRule):
        return obj
    return obj.rule(order)
