#!/usr/bin/env python3
"""Locate the cache knee that picks the fusion block exponent.

Sweeps the copy-bandwidth probe over buffer sizes and prints the rate
at each, alongside the detected last-level cache size and the block
exponent the fusion planner would use. The drop in the table is the
boundary the block size should stay under.

    python3 scripts/bandwidth_probe.py --max-mib 512
"""

from __future__ import annotations

import argparse

from svsim import default_block_exponent, detect_llc_bytes, measure_copy_bandwidth


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--min-kib", type=int, default=256)
    parser.add_argument("--max-mib", type=int, default=256)
    parser.add_argument("--reps", type=int, default=3)
    args = parser.parse_args()

    llc = detect_llc_bytes()
    print(f"detected LLC {llc >> 20} MiB; "
          f"default block exponent at m=40: {default_block_exponent(llc, 40)}")
    print(f"{'buffer':>10} {'GB_per_s':>9}")
    size = args.min_kib << 10
    while size <= args.max_mib << 20:
        rate = measure_copy_bandwidth(size, repetitions=args.reps, llc_bytes=size // 8)
        label = f"{size >> 20}MiB" if size >= 1 << 20 else f"{size >> 10}KiB"
        print(f"{label:>10} {rate / 1e9:9.2f}")
        size *= 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
