"""Regenerate src/fusetrack/data/cn_table.npy.

Two opponent-colour channels evaluated at the centres of a 32x32x32 RGB
quantisation. Achromatic bins map to exactly zero in both channels.
"""

from pathlib import Path

import numpy as np

BINS = 32


def build_table(bins: int = BINS) -> np.ndarray:
    centres = (np.arange(bins) + 0.5) / bins
    r, g, b = np.meshgrid(centres, centres, centres, indexing="ij")
    red_green = (r - g) / np.sqrt(2.0)
    yellow_blue = (r + g - 2.0 * b) / np.sqrt(6.0)
    table = np.stack([red_green, yellow_blue], axis=-1)
    # squash into [-0.5, 0.5], steeper near grey
    return (0.5 * np.tanh(2.5 * table)).astype(np.float32)


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "fusetrack" / "data" / "cn_table.npy"
    np.save(out, build_table())
    print(f"wrote {out}")
