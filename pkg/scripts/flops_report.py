#!/usr/bin/env python3
"""Tabulate the analytic FLOP estimate of the learned metric across point
counts, plus the parameter count of the default architecture.

Usage: python scripts/flops_report.py
"""

from meshfid.model import default_config, init_params, toy_config
from meshfid.stats import estimate_flops


def main() -> int:
    config = default_config()
    print(f"default architecture: {init_params(config).n_scalars():,} parameters")
    print(f"toy architecture:     {init_params(toy_config()).n_scalars():,} parameters")
    print()
    print(f"{'points':>8}  {'GFLOPs (default)':>16}  {'GFLOPs (toy)':>12}")
    for n in (512, 1024, 2048, 4096, 10_000, 20_000):
        print(f"{n:>8}  {estimate_flops(config, n):>16.3f}  {estimate_flops(toy_config(), n):>12.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
