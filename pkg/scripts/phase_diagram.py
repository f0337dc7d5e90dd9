"""Print a text regime map over (lambda, beta) and write it as CSV."""
import argparse
from pathlib import Path

from spiked_langevin.asymptotics import linspace_axis, phase_grid
from spiked_langevin.cli import PHASE_COLUMNS
from spiked_langevin.output import write_rows

SYMBOL = {"below_bbp": ".", "zero_init": "0", "subcritical_noise": "-", "supercritical": "+", "critical": "*"}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambda-range", nargs=3, type=float, default=[0.3, 2.0, 18], metavar=("MIN", "MAX", "STEPS"))
    ap.add_argument("--beta-range", nargs=3, type=float, default=[0.2, 5.0, 25], metavar=("MIN", "MAX", "STEPS"))
    ap.add_argument("--rho", type=float, default=0.5)
    ap.add_argument("--sigma-star", type=float, default=1.0)
    ap.add_argument("--out", default="out/phase_diagram.csv")
    a = ap.parse_args()
    lams = linspace_axis(a.lambda_range[0], a.lambda_range[1], int(a.lambda_range[2]))
    betas = linspace_axis(a.beta_range[0], a.beta_range[1], int(a.beta_range[2]))
    pts = phase_grid(lams, betas, a.sigma_star, a.rho)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out, PHASE_COLUMNS, [p.as_row() for p in pts])
    print(f"rows: lambda {lams[0]:.2f}..{lams[-1]:.2f}, columns: beta {betas[0]:.2f}..{betas[-1]:.2f}")
    for i, lam in enumerate(lams):
        row = pts[i * len(betas):(i + 1) * len(betas)]
        print(f"{lam:5.2f} " + "".join(SYMBOL[p.regime.value] for p in row))
    print("legend: " + ", ".join(f"{v} {k}" for k, v in SYMBOL.items()))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
