"""
fusetrack command line.

    fusetrack --config scenario.json --mode fused --out runs/a [--seed N] [--dump-frames]

--config accepts a JSON path or the name of a built-in scenario
(outdoor, occlusion, depth_doubling, noiseless). Verbosity comes from the
FUSETRACK_LOG environment variable (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import cv2

from .harness import MODES, emit_plots, run_pipeline, write_reports
from .sim.scenario import Scenario, load_scenario
from .sim.world import run_scenario

log = logging.getLogger("fusetrack")

BUILTIN = ("outdoor", "occlusion", "depth_doubling", "noiseless")


def builtin_path(name: str):
    return resources.files("fusetrack.data").joinpath("scenarios", f"{name}.json")


def resolve_scenario(spec: str) -> Scenario:
    if spec in BUILTIN and not Path(spec).exists():
        with resources.as_file(builtin_path(spec)) as p:
            return load_scenario(p)
    return load_scenario(spec)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fusetrack", description="Run the camera/ultrasonic tracking pipeline on a simulated scenario.")
    p.add_argument("--config", required=True, help="scenario JSON file or built-in name")
    p.add_argument("--mode", default="fused", choices=MODES, help="measurement kinds enabled")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--dump-frames", action="store_true", help="write every tracked frame as PNG with the tracked centre")
    return p


def _setup_logging() -> None:
    level = os.environ.get("FUSETRACK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        scn = resolve_scenario(args.config)
        if args.seed is not None:
            scn = scn.with_seed(args.seed)
    except (ValueError, OSError) as exc:
        print(f"fusetrack: config error: {exc}", file=sys.stderr)
        return 2
    try:
        out.mkdir(parents=True, exist_ok=True)
        sink = None
        if args.dump_frames:
            frames_dir = out / "frames"
            frames_dir.mkdir(exist_ok=True)

            def sink(index, image, center, pce):
                bgr = cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
                cv2.drawMarker(bgr, (int(round(center[0])), int(round(center[1]))), (0, 0, 255),
                               cv2.MARKER_CROSS, 12, 2)
                cv2.imwrite(str(frames_dir / f"{index:05d}.png"), bgr)

        sim = run_scenario(scn)
        report = run_pipeline(scn, args.mode, sim=sim, frame_sink=sink)
        write_reports(report, sim, out)
        emit_plots(report, out)
    except Exception as exc:  # surface pipeline failures with their module
        log.debug("run failed", exc_info=True)
        print(f"fusetrack: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    e = report.errors
    print(f"{args.mode}: mean abs error x={e[0]:.4f} y={e[1]:.4f} z={e[2]:.4f} m "
          f"({report.n_frames} frames, {report.runtime_s:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
