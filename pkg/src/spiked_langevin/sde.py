"""Euler-Maruyama simulation of the finite-N Langevin dynamics.

Two equivalent schemes are provided. ``simulate_direct`` integrates

    dX = J X dt - f'(|X|^2 / N) X dt + beta^{-1/2} dW

with a dense ``J``; ``simulate_rotated`` integrates the same dynamics in the
eigenbasis of the noise, ``Y = G X``, where each step costs O(N):

    dY^i = u^i R dt + (sigma^i - f'(K)) Y^i dt + beta^{-1/2} dB^i.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParameter, SimulationBlowUp
from .model import (ModelInstance, ModelParams, build_instance, initial_state,
                    resolve_confinement, substream)

BLOWUP_THRESHOLD = 1e12
DEFAULT_DT = 1e-3
DEFAULT_OFFDIAG_EVERY = 50
THREADS_ENV = "SPIKED_LANGEVIN_THREADS"
_NOISE_CHUNK = 64


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameter(f"dt must be positive, got {self.dt!r}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise InvalidParameter(f"t_end must be positive, got {self.t_end!r}")
        n = round(self.t_end / self.dt)
        if n < 1:
            raise InvalidParameter(f"t_end = {self.t_end} is shorter than one step dt = {self.dt}")
        if abs(n * self.dt - self.t_end) > 1e-12 * max(1.0, self.t_end):
            raise InvalidParameter(f"t_end = {self.t_end} is not an integer multiple of dt = {self.dt}")

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index(self, t: float) -> int:
        k = round(t / self.dt)
        if not 0 <= k <= self.n_steps or abs(k * self.dt - t) > 1e-9 * max(1.0, t):
            raise InvalidParameter(f"t = {t} is not a grid point")
        return k


@dataclass(frozen=True, eq=False)
class TrajectoryStats:
    grid: TimeGrid
    R: np.ndarray
    K_diag: np.ndarray
    seed: int
    replica_id: int = 0
    u_sq_norm: float = float("nan")  # |u|^2 / N, for the Cauchy-Schwarz bound
    K_offdiag: Optional[np.ndarray] = None
    offdiag_every: Optional[int] = None
    states: Optional[np.ndarray] = None

    @property
    def offdiag_times(self) -> Optional[np.ndarray]:
        if self.K_offdiag is None:
            return None
        return self.grid.times[:: self.offdiag_every]


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    grid: TimeGrid
    mean_R: np.ndarray
    stderr_R: np.ndarray
    mean_K: np.ndarray
    stderr_K: np.ndarray
    n_replicas: int
    seeds: tuple


class _Noise:
    """Standard-normal increments: a supplied array, or a seeded counter-based stream."""

    def __init__(self, N, n_steps, seed, increments=None):
        if increments is not None:
            increments = np.asarray(increments, dtype=float)
            if increments.shape != (n_steps, N):
                raise InvalidParameter(f"increments must have shape {(n_steps, N)}, got {increments.shape}")
        self._given = increments
        self._rng = None if increments is not None else substream(seed, "noise")
        self._N = N
        self._buf = None
        self._start = 0

    def __call__(self, k: int) -> np.ndarray:
        if self._given is not None:
            return self._given[k]
        if self._buf is None or k - self._start >= self._buf.shape[0]:
            self._start = k
            self._buf = self._rng.standard_normal((_NOISE_CHUNK, self._N))
        return self._buf[k - self._start]


def _run(step, Z0, observe, grid, beta_inv, noise, offdiag_every, keep_states, seed, replica_id, u_sq):
    n = grid.n_steps
    dt = grid.dt
    amp = math.sqrt(dt * beta_inv)
    R = np.empty(n + 1)
    K = np.empty(n + 1)
    snaps = [] if offdiag_every else None
    states = np.empty((n + 1, Z0.size)) if keep_states else None
    Z = np.array(Z0, dtype=float)
    for k in range(n + 1):
        r, kk = observe(Z)
        if not kk <= BLOWUP_THRESHOLD:
            raise SimulationBlowUp(f"K^N = {kk:.3g} at step {k} (t = {k * dt:g}); reduce dt",
                                   step=k, replica=replica_id)
        R[k], K[k] = r, kk
        if keep_states:
            states[k] = Z
        if snaps is not None and k % offdiag_every == 0:
            snaps.append(Z.copy())
        if k == n:
            break
        Z = Z + step(Z, r, kk) * dt
        if amp:
            Z += amp * noise(k)
    K_off = None
    if snaps is not None:
        S = np.array(snaps)
        K_off = S @ S.T / Z.size
        K_off = 0.5 * (K_off + K_off.T)
    return TrajectoryStats(grid, R, K, int(seed), replica_id, u_sq, K_off,
                           offdiag_every if snaps is not None else None, states)


def simulate_rotated(params: ModelParams, D_diag, u, Y0, grid: TimeGrid, seed: int,
                     increments=None, offdiag_every: Optional[int] = None,
                     keep_states: bool = False, replica_id: int = 0) -> TrajectoryStats:
    """Euler-Maruyama in rotated coordinates; no matrix is formed.

    ``increments`` optionally supplies the standard-normal noise, shape
    ``(n_steps, N)``; otherwise it is drawn from the seed's noise stream.
    """
    D = np.asarray(D_diag, dtype=float)
    u = np.asarray(u, dtype=float)
    N = u.size
    if D.shape != (N,) or np.shape(Y0) != (N,):
        raise InvalidParameter("D_diag, u and Y0 must all have length N")
    fp = resolve_confinement(params.confinement)

    def observe(Y):
        return float(u @ Y) / N, float(Y @ Y) / N

    def step(Y, r, kk):
        return u * r + (D - fp(kk)) * Y

    noise = _Noise(N, grid.n_steps, seed, increments)
    return _run(step, Y0, observe, grid, params.beta_inv, noise, offdiag_every, keep_states,
                seed, replica_id, float(u @ u) / N)


def simulate_direct(instance: ModelInstance, X0, grid: TimeGrid, beta: float, seed: int,
                    increments=None, offdiag_every: Optional[int] = None,
                    keep_states: bool = False, replica_id: int = 0) -> TrajectoryStats:
    """Euler-Maruyama on the original coordinates with the dense matrix ``J``."""
    J = instance.J
    if J is None:
        raise InvalidParameter("simulate_direct needs a materialized J")
    if not beta > 0:
        raise InvalidParameter(f"beta must be positive or inf, got {beta!r}")
    V = instance.V
    N = instance.N
    sqrtN = math.sqrt(N)
    fp = resolve_confinement(instance.params.confinement)
    beta_inv = 0.0 if math.isinf(beta) else 1.0 / beta

    def observe(X):
        # R^N = (1/N) sum_i sqrt(N) V^i X^i
        return float(V @ X) / sqrtN, float(X @ X) / N

    def step(X, r, kk):
        return J @ X - fp(kk) * X

    noise = _Noise(N, grid.n_steps, seed, increments)
    return _run(step, X0, observe, grid, beta_inv, noise, offdiag_every, keep_states,
                seed, replica_id, float(instance.u @ instance.u) / N)


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise InvalidParameter(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def _one_replica(params, grid, seed, replica_id, coordinate_mode, offdiag_every):
    if coordinate_mode == "rotated":
        inst = build_instance(params, seed, rotated_only=True)
        Y0 = initial_state(inst, "rotated_iid")
        return simulate_rotated(params, inst.D_diag, inst.u, Y0, grid, seed,
                                offdiag_every=offdiag_every, replica_id=replica_id)
    inst = build_instance(params, seed, materialize_J=True)
    X0 = initial_state(inst, "iid")
    return simulate_direct(inst, X0, grid, params.beta, seed,
                           offdiag_every=offdiag_every, replica_id=replica_id)


def run_replicas(params: ModelParams, grid: TimeGrid, n_replicas: int, base_seed: int,
                 coordinate_mode: str = "rotated", offdiag_every: Optional[int] = None,
                 max_workers: Optional[int] = None) -> list[TrajectoryStats]:
    if n_replicas < 1:
        raise InvalidParameter(f"n_replicas must be >= 1, got {n_replicas!r}")
    if coordinate_mode not in ("direct", "rotated"):
        raise InvalidParameter(f"coordinate_mode must be 'direct' or 'rotated', got {coordinate_mode!r}")
    workers = min(n_replicas, max_workers or _thread_count())
    seeds = [base_seed + i for i in range(n_replicas)]

    def job(i):
        try:
            return _one_replica(params, grid, seeds[i], i, coordinate_mode, offdiag_every)
        except SimulationBlowUp as exc:
            raise SimulationBlowUp(f"replica {i} (seed {seeds[i]}): {exc}", step=exc.step, replica=i) from exc

    if workers == 1:
        return [job(i) for i in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(n_replicas)))


def aggregate(trajectories: list[TrajectoryStats]) -> EnsembleStats:
    """Mean and standard error across replicas, reduced in replica order."""
    R = np.array([tr.R for tr in trajectories])
    K = np.array([tr.K_diag for tr in trajectories])
    n = len(trajectories)
    if n > 1:
        se_R = R.std(axis=0, ddof=1) / math.sqrt(n)
        se_K = K.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se_R = np.zeros(R.shape[1])
        se_K = np.zeros(K.shape[1])
    return EnsembleStats(trajectories[0].grid, R.mean(axis=0), se_R, K.mean(axis=0), se_K, n,
                         tuple(tr.seed for tr in trajectories))


def run_ensemble(params: ModelParams, grid: TimeGrid, n_replicas: int, base_seed: int,
                 coordinate_mode: str = "rotated", max_workers: Optional[int] = None) -> EnsembleStats:
    """Independent replicas with seeds ``base_seed + i``, run concurrently and averaged."""
    return aggregate(run_replicas(params, grid, n_replicas, base_seed, coordinate_mode,
                                  max_workers=max_workers))
