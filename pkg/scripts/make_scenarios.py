"""Regenerate the built-in scenario JSON files from fusetrack.sim.presets."""

from pathlib import Path

from fusetrack.sim.presets import PRESETS
from fusetrack.sim.scenario import save_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "fusetrack" / "data" / "scenarios"

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in PRESETS.items():
        save_scenario(build(), OUT / f"{name}.json")
        print(OUT / f"{name}.json")
