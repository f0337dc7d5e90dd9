"""Finite-N spiked matrix instances, initial conditions and the PCA baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CapacityError, ConvergenceError, InvalidParameter
from .spectral import Discrete, Semicircle, SpectralMeasure, semicircle_quantiles

DENSE_CAP = 8192

# fixed spawn keys so each random ingredient of a replica has its own stream
_STREAM_KEYS = {"G": 0, "V": 1, "init": 2, "noise": 3, "pca": 4, "u": 5}

CONFINEMENTS: dict[str, Callable[[float], float]] = {
    "quadratic": lambda x: x,  # f(x) = x^2 / 2
}


def substream(seed: int, tag: str) -> np.random.Generator:
    """Counter-based (Philox) generator for one named ingredient of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_STREAM_KEYS[tag],))
    return np.random.Generator(np.random.Philox(ss))


def resolve_confinement(confinement) -> Callable[[float], float]:
    if callable(confinement):
        return confinement
    try:
        return CONFINEMENTS[confinement]
    except KeyError:
        raise InvalidParameter(f"unknown confinement {confinement!r}; known: {sorted(CONFINEMENTS)}") from None


@dataclass(frozen=True)
class ModelParams:
    N: int
    lam: float
    rho: float
    beta: float = math.inf
    measure: SpectralMeasure = field(default_factory=Semicircle)
    confinement: str = "quadratic"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InvalidParameter(f"N must be an integer >= 1, got {self.N!r}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidParameter(f"lambda must be positive, got {self.lam!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidParameter(f"rho must lie in [0, 1], got {self.rho!r}")
        if not self.beta > 0:
            raise InvalidParameter(f"beta must be positive or inf, got {self.beta!r}")
        resolve_confinement(self.confinement)

    @property
    def beta_inv(self) -> float:
        return 0.0 if math.isinf(self.beta) else 1.0 / self.beta

    def to_dict(self) -> dict:
        m = self.measure
        if isinstance(m, Semicircle):
            measure = {"kind": "semicircle", "sigma_star": m.sigma_star}
        else:
            measure = {"kind": "discrete", "atoms": m.atoms.tolist(), "weights": m.weights.tolist()}
        return {
            "N": self.N,
            "lambda": self.lam,
            "rho": self.rho,
            "beta": "inf" if math.isinf(self.beta) else self.beta,
            "measure": measure,
            "confinement": self.confinement if isinstance(self.confinement, str) else repr(self.confinement),
        }


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """One draw of the model. ``G``, ``V`` and ``J`` are absent in rotated-only instances."""

    params: ModelParams
    seed: int
    D_diag: np.ndarray
    u: np.ndarray
    V: Optional[np.ndarray] = None
    G: Optional[np.ndarray] = None
    J: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.params.N

    def metadata(self) -> dict:
        d = self.D_diag
        return {
            "seed": self.seed,
            "params": self.params.to_dict(),
            "spectrum": {
                "min": float(d.min()),
                "max": float(d.max()),
                "mean": float(d.mean()),
                "second_moment": float(np.mean(d * d)),
            },
            "has_rotation": self.G is not None,
            "has_J": self.J is not None,
            "u_sq_norm_over_N": float(self.u @ self.u / self.N),
        }


def haar_orthogonal(N: int, seed) -> np.ndarray:
    """Haar-distributed orthogonal matrix from a sign-corrected QR of a Gaussian matrix."""
    if int(N) != N or N < 1:
        raise InvalidParameter(f"N must be an integer >= 1, got {N!r}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "G")
    Z = rng.standard_normal((int(N), int(N)))
    Q, R = np.linalg.qr(Z)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def discrete_spectrum(measure: Discrete, N: int) -> np.ndarray:
    """Atoms repeated ``round(N w_j)`` times, the remainder settled largest-weight-first."""
    counts = np.rint(N * measure.weights).astype(int)
    by_weight = np.argsort(-measure.weights, kind="stable")
    deficit = N - counts.sum()
    i = 0
    while deficit != 0:
        j = by_weight[i % by_weight.size]
        if deficit > 0:
            counts[j] += 1
            deficit -= 1
        elif counts[j] > 0:
            counts[j] -= 1
            deficit += 1
        i += 1
    return np.sort(np.repeat(measure.atoms, counts))


def spectrum(measure: SpectralMeasure, N: int) -> np.ndarray:
    if isinstance(measure, Semicircle):
        return semicircle_quantiles(measure.sigma_star, N)
    return discrete_spectrum(measure, N)


def build_instance(params: ModelParams, seed: int, materialize_J: bool = False,
                   rotated_only: bool = False, dense_cap: int = DENSE_CAP) -> ModelInstance:
    """Draw ``J = V V^T + G^T D G`` (or only its rotated ingredients) reproducibly from ``seed``.

    In rotated-only mode no rotation is sampled: ``u = sqrt(N) G V`` is drawn
    directly from its exact law, i.i.d. ``N(0, lambda)``.
    """
    N = params.N
    D = spectrum(params.measure, N)
    if rotated_only:
        if materialize_J:
            raise InvalidParameter("materialize_J requires the rotation; use rotated_only=False")
        u = math.sqrt(params.lam) * substream(seed, "u").standard_normal(N)
        return ModelInstance(params, int(seed), D, u)
    if materialize_J and N > dense_cap:
        raise CapacityError(f"N = {N} exceeds the dense-J cap of {dense_cap}")
    G = haar_orthogonal(N, substream(seed, "G"))
    V = math.sqrt(params.lam / N) * substream(seed, "V").standard_normal(N)
    u = math.sqrt(N) * (G @ V)
    J = None
    if materialize_J:
        J = np.outer(V, V) + (G.T * D) @ G
        J = 0.5 * (J + J.T)
    return ModelInstance(params, int(seed), D, u, V=V, G=G, J=J)


def init_conditions(params: ModelParams, mode: str, signal: np.ndarray, seed: int) -> np.ndarray:
    """Start vector ``rho * signal / sqrt(lambda) + sqrt(1 - rho^2) * xi``.

    ``signal`` is ``u`` for ``mode='rotated_iid'`` and ``sqrt(N) V`` for
    ``mode='iid'``; both have per-coordinate variance ``lambda`` so the result
    has unit second moment and cross-moment ``sqrt(lambda) rho`` with it.
    """
    if mode not in ("iid", "rotated_iid"):
        raise InvalidParameter(f"unknown initial-condition mode {mode!r}")
    if not 0.0 <= params.rho <= 1.0:
        raise InvalidParameter(f"rho must lie in [0, 1], got {params.rho!r}")
    signal = np.asarray(signal, dtype=float)
    rho = params.rho
    if rho == 1.0:
        return signal / math.sqrt(params.lam)
    xi = substream(seed, "init").standard_normal(signal.size)
    return rho / math.sqrt(params.lam) * signal + math.sqrt(1.0 - rho * rho) * xi


def initial_state(instance: ModelInstance, mode: str, seed: Optional[int] = None) -> np.ndarray:
    """Initial vector in the coordinates matching ``mode`` (X_0 for iid, Y_0 for rotated_iid)."""
    seed = instance.seed if seed is None else seed
    if mode == "iid":
        if instance.V is None:
            raise InvalidParameter("iid initial conditions need the spike V (rotated-only instance given)")
        return init_conditions(instance.params, mode, math.sqrt(instance.N) * instance.V, seed)
    return init_conditions(instance.params, mode, instance.u, seed)


def pca_overlap(instance: ModelInstance, tol: float = 1e-10, max_iters: int = 20000,
                shift=None) -> tuple[float, float]:
    """Top eigenpair of ``J`` by shifted power iteration.

    Returns the top eigenvalue and the squared overlap ``(v^T V)^2 / |V|^2`` of
    its unit eigenvector with the spike. ``J + shift I`` must be positive
    semidefinite so that the top eigenvalue dominates. Since ``V V^T`` is
    positive semidefinite, ``lambda_min(J) >= min(D)``, so ``shift = -min(D)``
    suffices and is the default; ``shift='row_sum'`` uses the looser max-row-sum
    bound on ``|J|`` (same answer, many more iterations near a spectral edge).
    """
    J = instance.J
    if J is None:
        raise InvalidParameter("pca_overlap needs a materialized J")
    if not tol > 0:
        raise InvalidParameter("tol must be positive")
    if shift is None:
        shift = max(0.0, -float(instance.D_diag.min()))
    elif shift == "row_sum":
        shift = float(np.abs(J).sum(axis=1).max())
    N = J.shape[0]
    x = np.ones(N) / math.sqrt(N) + 1e-3 * substream(instance.seed, "pca").standard_normal(N) / math.sqrt(N)
    x /= np.linalg.norm(x)
    Jx = J @ x
    rq = float(x @ Jx)
    for _ in range(max_iters):
        y = Jx + shift * x
        x = y / np.linalg.norm(y)
        Jx = J @ x
        rq_new = float(x @ Jx)
        if abs(rq_new - rq) < tol:
            V = instance.V
            return rq_new, float((x @ V) ** 2 / (V @ V))
        rq = rq_new
    raise ConvergenceError(f"power iteration did not converge in {max_iters} iterations "
                           "(near-degenerate top eigenvalues?)", iterations=max_iters)
