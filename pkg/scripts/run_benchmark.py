#!/usr/bin/env python3
"""Run the default two-domain benchmark and print median error rates.

Trains the single-head and all-heads teacher variants plus the distilled
student for every seed, evaluates intra-domain (lab to lab) and
cross-domain (lab to field) protocols, and reports per-seed and median
HTERs.  With the default five seeds and 2000 sessions per domain this
takes a couple of minutes on a laptop.
"""

import argparse
import json
import sys
import time

from spoofbench.bench import DEFAULT_SEEDS, DEFAULT_SESSIONS_PER_DOMAIN, benchmark_medians
from spoofbench.evaluate import format_table


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS),
        help=f"benchmark seeds (default: {' '.join(map(str, DEFAULT_SEEDS))})",
    )
    parser.add_argument(
        "--sessions", type=int, default=DEFAULT_SESSIONS_PER_DOMAIN,
        help="sessions per synthetic domain (default: %(default)s)",
    )
    parser.add_argument("--out", help="optional path for the full JSON summary")
    args = parser.parse_args(argv)

    start = time.perf_counter()
    summary = benchmark_medians(seeds=args.seeds, n_sessions=args.sessions)
    elapsed = time.perf_counter() - start

    models = ("teacher-v1", "teacher-v2", "student")
    rows = []
    for seed, per_model in zip(summary["seeds"], summary["per_seed"]):
        for name in models:
            rows.append([
                str(seed),
                name,
                f"{100 * per_model[name]['intra_hter']:.2f}",
                f"{100 * per_model[name]['cross_hter']:.2f}",
            ])
    print(format_table(["seed", "model", "intra HTER%", "cross HTER%"], rows))
    print()
    med_rows = [
        [name,
         f"{100 * summary['medians'][name]['intra_hter']:.2f}",
         f"{100 * summary['medians'][name]['cross_hter']:.2f}"]
        for name in models
    ]
    print(format_table(["model (median)", "intra HTER%", "cross HTER%"], med_rows))
    print(f"\n{len(summary['seeds'])} seeds x {args.sessions} sessions/domain in {elapsed:.0f}s")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"summary written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
