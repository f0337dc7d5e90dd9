"""Report how the Monte Carlo versus limit error changes between two dimensions."""
import argparse
import tempfile

from spiked_langevin.cli import cmd_compare
from spiked_langevin.config import config_from_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", nargs="+", type=int, default=[500, 2000])
    ap.add_argument("--replicas", type=int, default=16)
    ap.add_argument("--t-end", type=float, default=2.0)
    ap.add_argument("--beta", default="10")
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    print(f"{'N':>6} {'sup|dR|':>10} {'sup|dK|':>10} {'se_R':>10} {'se_K':>10}")
    with tempfile.TemporaryDirectory() as tmp:
        for N in a.sizes:
            cfg = config_from_dict({"command": "compare",
                                    "params": {"N": N, "lambda": 1.0, "rho": 0.5, "beta": a.beta},
                                    "grid": {"T": a.t_end, "dt": 2e-3},
                                    "ensemble": {"n_replicas": a.replicas, "base_seed": a.seed},
                                    "output": {"directory": f"{tmp}/{N}"}})
            s = cmd_compare(cfg)["summary"]
            print(f"{N:6d} {s['sup_abs_err_R']:10.5f} {s['sup_abs_err_K']:10.5f} "
                  f"{s['pooled_stderr_R']:10.5f} {s['pooled_stderr_K']:10.5f}")


if __name__ == "__main__":
    main()
