"""Compare DP inference against the brute-force oracle on random small instances."""
import argparse
import time

from partshare.verify import run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.perf_counter()
    results = run_sweep(args.instances, base_seed=args.seed)
    bad = [r for r in results if not r.ok]
    for r in bad:
        print(f"FAIL seed {r.seed}: {'; '.join(r.failures)}")
    print(f"{len(results) - len(bad)}/{len(results)} instances agree, {time.perf_counter() - t0:.1f}s")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
