"""
Run one scenario over a range of seeds in all three modes and collect the
per-axis errors in one CSV. Each (seed, mode) runs in its own process.

    python scripts/seed_sweep.py --config outdoor --seeds 0 10 --out sweep.csv
"""

import argparse
import csv
from concurrent.futures import ProcessPoolExecutor

from fusetrack.cli import resolve_scenario
from fusetrack.harness import MODES, run_pipeline
from fusetrack.sim.world import run_scenario


def _one(args):
    config, seed, mode = args
    scn = resolve_scenario(config).with_seed(seed)
    r = run_pipeline(scn, mode, sim=run_scenario(scn))
    return seed, mode, [float(e) for e in r.errors]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--config", default="outdoor")
    p.add_argument("--seeds", type=int, nargs=2, default=(0, 5), metavar=("START", "STOP"))
    p.add_argument("--out", default="seed_sweep.csv")
    p.add_argument("--jobs", type=int, default=None)
    args = p.parse_args()
    jobs = [(args.config, s, m) for s in range(*args.seeds) for m in MODES]
    with ProcessPoolExecutor(args.jobs) as pool:
        rows = sorted(pool.map(_one, jobs))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "mode", "err_x", "err_y", "err_z"])
        for seed, mode, e in rows:
            w.writerow([seed, mode] + [f"{v:.6f}" for v in e])
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
