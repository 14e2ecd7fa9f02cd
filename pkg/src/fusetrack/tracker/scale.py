"""
Scale estimation: a 1-D ridge-regression filter over a geometric pyramid of
window scales, the scale implied by the fused 3-D position, and their
uncertainty-weighted combination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import CameraCalibration, PersonModel, person_anchor_points, project_point
from .features import sample_window, to_gray

SIGMA2D_FLOOR = 0.01


@dataclass(frozen=True)
class ScaleEstimate:
    s2d: float
    sigma2d: float
    s3d: float | None
    sigma3d: float | None
    fused: float


@dataclass
class ScaleFilterParams:
    n_scales: int = 17
    step: float = 1.03
    sigma_factor: float = 0.25  # label bandwidth, in units of sqrt(n_scales) levels
    lam: float = 1e-2
    model_max_area: int = 512  # pixels of the coarse raster per sample
    cell: int = 2  # grayscale-mean block size on the coarse raster
    learning_rate: float = 0.025
    padding: float = 1.0  # sample window relative to the box


def scale_factors(n_scales: int, step: float) -> np.ndarray:
    return step ** (np.arange(n_scales) - (n_scales - 1) // 2)


def fuse_scale(s2d: float, sigma2d: float, s3d: float, sigma3d: float) -> float:
    """Inverse-standard-deviation weighted mean of the two scale estimates."""
    if sigma2d <= 0 or sigma3d <= 0:
        raise ValueError("scale standard deviations must be positive")
    return (s2d / sigma2d + s3d / sigma3d) * (sigma2d * sigma3d) / (sigma2d + sigma3d)


def scale_from_3d(x_k, p_k, person: PersonModel, cal: CameraCalibration,
                  v_init_height: float) -> tuple[float, float]:
    """
    Image-height scale of the person at the estimated emitter position,
    relative to the initial box height, with sqrt(P[z, z]) as its spread.
    """
    anchors = person_anchor_points(x_k, person)
    v_head = project_point(anchors["head"], cal)[1]
    v_feet = project_point(anchors["feet"], cal)[1]
    return (v_feet - v_head) / v_init_height, float(np.sqrt(np.asarray(p_k)[2, 2]))


def weighted_scale_spread(scales: np.ndarray, scores: np.ndarray) -> float:
    """
    Standard deviation of the scale grid weighted by the (non-negative part
    of the) scores. Uniform weights if no score is positive.
    """
    w = np.clip(np.asarray(scores, dtype=float), 0, None)
    if w.sum() <= 0:
        w = np.ones_like(w)
    w = w / w.sum()
    mean = np.sum(w * scales)
    return float(np.sqrt(np.sum(w * (scales - mean) ** 2)))


class ScaleFilter:
    """
    1-D scale regressor over a geometric pyramid of window samples.

    Coarse grayscale-mean features are sampled at every scale factor and a
    linear filter w is fitted by ridge regression so that w . x_i follows a
    Gaussian label peaking at the unit factor. Unlike the circulant DSST
    solution this regression is exact over the finite set of factors, so a
    rescaled target moves the response peak by the matching number of
    levels rather than a damped fraction of it.
    """

    def __init__(self, base_size: tuple[float, float], params: ScaleFilterParams | None = None):
        self.params = params or ScaleFilterParams()
        p = self.params
        self.base_size = (float(base_size[0]), float(base_size[1]))
        self._sample_size = (self.base_size[0] * p.padding, self.base_size[1] * p.padding)
        self.factors = scale_factors(p.n_scales, p.step)
        area = self._sample_size[0] * self._sample_size[1]
        shrink = min(1.0, np.sqrt(p.model_max_area / area))
        c = p.cell
        self.model_wh = (max(c, int(self._sample_size[0] * shrink) // c * c),
                         max(c, int(self._sample_size[1] * shrink) // c * c))
        sigma = p.sigma_factor * np.sqrt(p.n_scales)
        offs = np.arange(p.n_scales) - (p.n_scales - 1) // 2
        self.label = np.exp(-0.5 * offs ** 2 / sigma ** 2)
        self.weights = None  # (n_features,)

    def _samples(self, image, center, scale: float) -> tuple[np.ndarray, np.ndarray]:
        """(n_features, n_scales) coarse feature matrix and a mask of in-image samples."""
        p = self.params
        H, W = np.asarray(image).shape[:2]
        gray = to_gray(image)
        cols, inside = [], []
        mw, mh = self.model_wh
        c = p.cell
        for f in self.factors:
            sw, sh = self._sample_size[0] * scale * f, self._sample_size[1] * scale * f
            u0, v0 = center[0] - sw / 2, center[1] - sh / 2
            inside.append(u0 + sw > -0.5 and v0 + sh > -0.5 and u0 < W - 0.5 and v0 < H - 0.5)
            patch = sample_window(gray, center, (sw, sh), (mw, mh)) / 255.0
            coarse = patch.reshape(mh // c, c, mw // c, c).mean(axis=(1, 3))
            cols.append((coarse - coarse.mean()).ravel())
        return np.array(cols).T, np.array(inside)

    def fit(self, feats: np.ndarray) -> np.ndarray:
        """Ridge solution w = X (X^T X + lam I)^-1 y over the scale samples X."""
        G = feats.T @ feats + self.params.lam * np.eye(feats.shape[1])
        return feats @ np.linalg.solve(G, self.label)

    def train(self, image, center, scale: float, rate: float = 1.0):
        feats, _ = self._samples(image, center, scale)
        w = self.fit(feats)
        if self.weights is None or rate >= 1.0:
            self.weights = w
        else:
            self.weights = (1 - rate) * self.weights + rate * w

    def scores(self, image, center, scale: float) -> np.ndarray:
        if self.weights is None:
            raise RuntimeError("scale filter is not trained")
        feats, inside = self._samples(image, center, scale)
        return np.where(inside, self.weights @ feats, 0.0)

    def estimate(self, image, center, scale: float) -> tuple[float, float]:
        """(s2d, sigma2d): argmax scale and score-weighted spread of candidate scales."""
        sc = self.scores(image, center, scale)
        cand = scale * self.factors
        s2d = float(cand[int(np.argmax(sc))])
        return s2d, max(weighted_scale_spread(cand, sc), SIGMA2D_FLOOR)
