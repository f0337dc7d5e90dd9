"""Sup-norm gap between the fast route and Picard iteration over a (lambda, beta) grid."""
import argparse
import time

import numpy as np

from spiked_langevin.chsck import Moments, solve_fast, solve_picard_general
from spiked_langevin.sde import TimeGrid
from spiked_langevin.spectral import semicircle_quadrature


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambdas", nargs="+", type=float, default=[0.6, 1.0, 2.0])
    ap.add_argument("--betas", nargs="+", type=float, default=[0.5, 2.0, 10.0])
    ap.add_argument("--t-end", type=float, default=5.0)
    ap.add_argument("--dt", type=float, default=2e-3)
    ap.add_argument("--rule-order", type=int, default=200)
    a = ap.parse_args()
    rule = semicircle_quadrature(1.0, a.rule_order)
    grid = TimeGrid(a.t_end, a.dt)
    print(f"{'lambda':>7} {'beta':>6} {'sup|dR|':>10} {'sup|dK|':>10} {'iters':>6} {'secs':>6}")
    for lam in a.lambdas:
        m = Moments.from_params(lam, 0.5)
        for beta in a.betas:
            t0 = time.perf_counter()
            fast = solve_fast(m, rule, grid, beta)
            pic = solve_picard_general("quadratic", m, rule, grid, beta)
            print(f"{lam:7.2f} {beta:6.2f} {np.abs(fast.R - pic.R).max():10.2e} "
                  f"{np.abs(fast.K_diag - pic.K_diag).max():10.2e} {pic.iterations:6d} {time.perf_counter() - t0:6.2f}")


if __name__ == "__main__":
    main()
