#!/usr/bin/env python3
"""Run a benchmark config and print the fidelity table and trace-distance ratios.

    python scripts/run_benchmark.py configs/full.cfg --jobs 4
"""
import argparse
import logging
import time

from ditomo import benchmark as bm
from ditomo.cli import format_report
from ditomo.config import load_config


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("config")
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--output-dir")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    overrides = {}
    if args.jobs is not None:
        overrides["benchmark.jobs"] = args.jobs
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    config = load_config(args.config, overrides)

    total = len(config.states) * config.runs
    start = time.perf_counter()

    def progress(done, n):
        if done % max(1, n // 50) == 0 or done == n:
            rate = done / (time.perf_counter() - start)
            logging.info("%d/%d runs, %.1f runs/s, eta %.0f s", done, n, rate, (n - done) / rate)

    records, summary = bm.run_benchmark(config, progress)
    paths = bm.write_results(records, summary, config.output_dir)
    print(format_report(records))
    print(f"\n{total} runs in {time.perf_counter() - start:.0f} s; results in {paths['results'].parent}")


if __name__ == "__main__":
    main()
