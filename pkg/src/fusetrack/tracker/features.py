"""
Window sampling and multichannel features for the correlation tracker.

Features are orientation histograms of image gradients over square cells
(9 unsigned bins, block-normalised) stacked with 2 colour-name channels
looked up from a 32x32x32 RGB quantisation table. Every channel is
multiplied by a 2-D Hann taper so the map is periodic for the DFT.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import cv2
import numpy as np

from ..camera import BoundingBox

N_ORIENT = 9
CN_BINS = 32


class EmptyWindowError(ValueError):
    pass


@dataclass
class FeatureMap:
    channels: np.ndarray  # (C, H, W), W x H cells
    cell_size: int

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=float)
        if self.channels.ndim == 2:
            self.channels = self.channels[None]
        if self.channels.ndim != 3:
            raise ValueError("feature channels must be (C, H, W)")
        if not np.all(np.isfinite(self.channels)):
            raise ValueError("feature map contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        """(H, W) in cells"""
        return self.channels.shape[1:]

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


@lru_cache(maxsize=1)
def cn_table() -> np.ndarray:
    with resources.files("fusetrack.data").joinpath("cn_table.npy").open("rb") as fh:
        return np.load(fh).astype(float)


@lru_cache(maxsize=32)
def hann2d(h: int, w: int) -> np.ndarray:
    return np.outer(np.hanning(h), np.hanning(w)) if h > 1 and w > 1 else np.ones((h, w))


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luma (0.299 R + 0.587 G + 0.114 B) as float32."""
    img = np.asarray(image)
    if img.ndim == 3:
        return cv2.cvtColor(img.astype(np.float32, copy=False), cv2.COLOR_RGB2GRAY)
    return img.astype(np.float32)


def sample_window(image: np.ndarray, center, window_wh, out_wh) -> np.ndarray:
    """
    Resample the window of size `window_wh` (pixels, may be fractional)
    centred on `center` into an `out_wh` raster. Pixels outside the image
    are replicated from the border.
    """
    image = np.asarray(image)
    H, W = image.shape[:2]
    cu, cv = float(center[0]), float(center[1])
    ww, wh = float(window_wh[0]), float(window_wh[1])
    ow, oh = int(out_wh[0]), int(out_wh[1])
    sx, sy = ww / ow, wh / oh

    # pixel centres sit on integer coordinates
    xs = cu - ww / 2 + (np.arange(ow) + 0.5) * sx
    ys = cv - wh / 2 + (np.arange(oh) + 0.5) * sy

    # integer crop covering the sample grid (border-replicated)
    x0, x1 = int(np.floor(xs[0])) - 2, int(np.ceil(xs[-1])) + 3
    y0, y1 = int(np.floor(ys[0])) - 2, int(np.ceil(ys[-1])) + 3
    if x0 >= 0 and y0 >= 0 and x1 <= W and y1 <= H:
        crop = image[y0:y1, x0:x1].astype(np.float32)
    else:
        cols = np.clip(np.arange(x0, x1), 0, W - 1)
        rows = np.clip(np.arange(y0, y1), 0, H - 1)
        crop = image[rows[:, None], cols[None, :]].astype(np.float32)

    if max(sx, sy) > 1.5:
        # anti-alias before decimation
        crop = cv2.GaussianBlur(crop, (0, 0), sigmaX=0.4 * sx if sx > 1.5 else 1e-3,
                                sigmaY=0.4 * sy if sy > 1.5 else 1e-3)
    map_x = np.broadcast_to((xs - x0).astype(np.float32)[None, :], (oh, ow))
    map_y = np.broadcast_to((ys - y0).astype(np.float32)[:, None], (oh, ow))
    out = cv2.remap(crop, np.ascontiguousarray(map_x), np.ascontiguousarray(map_y),
                    interpolation=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)
    return out.astype(float)


def gradient_histograms(gray: np.ndarray, cell_size: int, n_bins: int = N_ORIENT) -> np.ndarray:
    """
    Raw per-cell histograms of unsigned gradient orientation, (n_bins, Hc, Wc).
    Bin k is centred on k*180/n_bins degrees; each pixel splits its gradient
    magnitude linearly between the two nearest bins.
    """
    g = np.asarray(gray, dtype=float)
    padded = np.pad(g, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    pos = theta / (np.pi / n_bins)
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    lo %= n_bins
    hi = (lo + 1) % n_bins

    hc, wc = g.shape[0] // cell_size, g.shape[1] // cell_size
    h_used, w_used = hc * cell_size, wc * cell_size
    cell_r = (np.arange(h_used) // cell_size)[:, None]
    cell_c = (np.arange(w_used) // cell_size)[None, :]
    flat_cell = (cell_r * wc + cell_c).ravel()
    m = mag[:h_used, :w_used].ravel()
    f = frac[:h_used, :w_used].ravel()
    hist = np.zeros((n_bins, hc * wc))
    np.add.at(hist, (lo[:h_used, :w_used].ravel(), flat_cell), m * (1 - f))
    np.add.at(hist, (hi[:h_used, :w_used].ravel(), flat_cell), m * f)
    return hist.reshape(n_bins, hc, wc)


def normalize_histograms(hist: np.ndarray, eps: float = 0.25, clip: float = 0.4) -> np.ndarray:
    """Divide each cell by the RMS energy of its 3x3 neighbourhood, then truncate."""
    energy = np.sum(hist ** 2, axis=0)
    padded = np.pad(energy, 1, mode="edge")
    hc, wc = energy.shape
    neigh = sum(padded[i:i + hc, j:j + wc] for i in range(3) for j in range(3)) / 9.0
    return np.minimum(hist / np.sqrt(neigh + eps ** 2), clip)


def color_name_cells(rgb: np.ndarray, cell_size: int) -> np.ndarray:
    """Cell-averaged 2-channel colour-name map; zeros for single-channel input."""
    hc, wc = rgb.shape[0] // cell_size, rgb.shape[1] // cell_size
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        return np.zeros((2, hc, wc))
    q = np.clip(rgb, 0, 255).astype(int) * CN_BINS // 256
    q = np.minimum(q, CN_BINS - 1)
    vals = cn_table()[q[..., 0], q[..., 1], q[..., 2]]  # (H, W, 2)
    vals = vals[:hc * cell_size, :wc * cell_size]
    vals = vals.reshape(hc, cell_size, wc, cell_size, 2).mean(axis=(1, 3))
    return np.moveaxis(vals, -1, 0)


def features_from_patch(patch: np.ndarray, cell_size: int = 4, taper: bool = True,
                        hog_eps: float = 0.25) -> FeatureMap:
    gray = to_gray(patch) / 255.0
    hog = normalize_histograms(gradient_histograms(gray, cell_size), eps=hog_eps)
    cn = color_name_cells(patch, cell_size)
    chans = np.concatenate([hog, cn], axis=0)
    if taper:
        chans = chans * hann2d(*chans.shape[1:])
    return FeatureMap(chans, cell_size)


def window_size(box: BoundingBox, padding: float) -> tuple[float, float]:
    return box.width * padding, box.height * padding


def extract_features(image: np.ndarray, box: BoundingBox, cell_size: int = 4,
                     padding: float = 2.5, template_wh=None, taper: bool = True,
                     hog_eps: float = 0.25) -> FeatureMap:
    """
    Features of the padded window around `box`.

    `template_wh` fixes the resampled raster size in pixels (a multiple of
    `cell_size`); by default the window is sampled at native resolution.
    """
    H, W = np.asarray(image).shape[:2]
    u0, v0, u1, v1 = box.corners()
    if u1 <= -0.5 or v1 <= -0.5 or u0 >= W - 0.5 or v0 >= H - 0.5:
        raise EmptyWindowError("target box does not intersect the image")
    ww, wh = window_size(box, padding)
    if template_wh is None:
        template_wh = (max(cell_size, int(round(ww / cell_size)) * cell_size),
                       max(cell_size, int(round(wh / cell_size)) * cell_size))
    patch = sample_window(image, box.center, (ww, wh), template_wh)
    return features_from_patch(patch, cell_size, taper=taper, hog_eps=hog_eps)
