"""Print the worst finite-difference gradient error per layer, activation and loss."""

import argparse
import time

from netmeter.nn.gradcheck import standard_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=20)
    args = ap.parse_args()
    t0 = time.perf_counter()
    worst = standard_suite(args.instances)
    for name, err in worst.items():
        flag = "ok" if err < 1e-4 else "FAIL"
        print(f"{name:<24} {err:10.3e}  {flag}")
    print(f"{len(worst)} families x {args.instances} instances in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
