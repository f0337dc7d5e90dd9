"""Langevin dynamics for spiked rotationally invariant matrices: finite-N simulation and large-N limits."""

__version__ = "0.1.0"

from .asymptotics import (PhasePoint, Regime, classify, g_closed_form, g_growth_prefactor,
                          h_growth_prefactor, lambda_tilde, limiting_correlation, phase_grid, s_beta)
from .chsck import (ChsckSolution, Moments, correlation_ratio, evaluate_K_offdiag, solve_fast,
                    solve_g_volterra, solve_picard, solve_picard_general)
from .model import ModelInstance, ModelParams, build_instance, haar_orthogonal, initial_state, pca_overlap
from .sde import (EnsembleStats, TimeGrid, TrajectoryStats, aggregate, run_ensemble, run_replicas,
                  simulate_direct, simulate_rotated)
from .spectral import Discrete, QuadratureRule, Semicircle, semicircle_quadrature

__all__ = [
    "ChsckSolution", "Discrete", "EnsembleStats", "ModelInstance", "ModelParams", "Moments",
    "PhasePoint", "QuadratureRule", "Regime", "Semicircle", "TimeGrid", "TrajectoryStats",
    "aggregate", "build_instance", "classify", "correlation_ratio", "evaluate_K_offdiag",
    "g_closed_form", "g_growth_prefactor", "h_growth_prefactor", "haar_orthogonal",
    "initial_state", "lambda_tilde", "limiting_correlation", "pca_overlap", "phase_grid",
    "run_ensemble", "run_replicas", "s_beta", "semicircle_quadrature", "simulate_direct",
    "simulate_rotated", "solve_fast", "solve_g_volterra", "solve_picard", "solve_picard_general",
]
