"""Per-level shared vs unshared cost curves for the three dictionary regimes.

Writes one CSV per (regime, r) into --out and prints the verdict lines.
"""
import argparse
from fractions import Fraction
from pathlib import Path

from partshare.complexity import params_for_regime, regime_report, write_regime_curve
from partshare.dictionary import RegimeSpec, hump_sizes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--D0", type=int, default=4096)
    ap.add_argument("--q", default="1/4")
    ap.add_argument("--H", type=int, default=6)
    ap.add_argument("--C_r", type=int, default=2)
    ap.add_argument("--r", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--out", type=Path, default=Path("runs/regime_curves"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    q = Fraction(args.q)
    for r in args.r:
        for kind in ("ExponentialGrowth", "ExponentialDecrease", "UserSupplied"):
            sizes = hump_sizes(args.H, q, r) if kind == "UserSupplied" else None
            p = params_for_regime(RegimeSpec(kind, sizes=sizes), args.D0, q, args.H, r, args.C_r)
            rep = regime_report(kind, p)
            write_regime_curve(rep, args.out / f"{kind}_r{r}.csv")
            print(f"r={r} {kind}: {rep.verdicts[0]}")


if __name__ == "__main__":
    main()
