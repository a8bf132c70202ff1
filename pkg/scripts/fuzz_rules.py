#!/usr/bin/env python3
"""Fuzz every registered proof rule and report per-rule statistics.

Each rule is instantiated randomly; whenever all premises pass the
semantic tester, the conclusion must pass as well.  Exit status 1 when
any rule produced a failing conclusion.
"""

import argparse
import sys
import time

from sepstore.fuzz import GENERATORS, fuzz_all


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("-n", type=int, default=200,
                    help="instances per rule (default 200)")
    ap.add_argument("rules", nargs="*", help="rule names (default: all)")
    args = ap.parse_args()

    rules = args.rules or sorted(GENERATORS)
    unknown = [r for r in rules if r not in GENERATORS]
    if unknown:
        ap.error(f"no generator for: {', '.join(unknown)}")

    t0 = time.time()
    results = fuzz_all(seed=args.seed, n=args.n, rules=rules)
    bad = 0
    for res in results:
        status = "ok" if res.ok else "FAIL"
        bad += not res.ok
        print(f"{res.rule:18s} {status:4s} samples={res.samples:4d} "
              f"checked={res.checked:4d} vacuous={res.vacuous:3d} "
              f"errors={res.errors:3d} failures={len(res.failures)}")
        for params, _, conclusion, witness in res.failures[:3]:
            print(f"    counterexample: {witness.to_json()}")
    print(f"{len(results)} rules, {time.time() - t0:.1f}s")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
