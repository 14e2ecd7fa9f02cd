"""
Frame-by-frame correlation tracking with PCE-gated model updates and
scale fusion against the projected 3-D estimate.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..camera import (BoundingBox, CameraCalibration, PersonModel,
                      PointBehindCameraError)
from .features import FeatureMap, extract_features
from .kcf import (FilterModel, KernelParams, ZeroResponseError, detect,
                  interpolate_model, train_filter)
from .scale import (SIGMA2D_FLOOR, ScaleEstimate, ScaleFilter, ScaleFilterParams,
                    fuse_scale, scale_from_3d, weighted_scale_spread)

log = logging.getLogger(__name__)


@dataclass
class TrackerParams:
    cell_size: int = 4
    padding: float = 2.5
    template_area: float = 96.0 ** 2  # resampled window area, template pixels
    lam: float = 1e-4
    output_sigma: float = 0.5  # label bandwidth, cells
    kernel: KernelParams = field(default_factory=KernelParams)
    learning_rate: float = 0.02
    pce_threshold: float = 0.2
    hog_eps: float = 0.25
    scale: ScaleFilterParams = field(default_factory=ScaleFilterParams)
    min_scale: float = 0.1
    max_scale: float = 10.0

    def __post_init__(self):
        if not 0 < self.pce_threshold < 1:
            raise ValueError("pce_threshold must be in (0, 1)")


@dataclass
class TrackerState:
    model: FilterModel
    scale_model: ScaleFilter
    bbox: BoundingBox
    pce_threshold: float
    params: TrackerParams
    base_size: tuple[float, float]  # box (w, h) at scale 1, pixels
    template_wh: tuple[int, int]
    v_init_height: float
    person: PersonModel | None = None
    calibration: CameraCalibration | None = None
    last_pce: float = 1.0
    update_gated: bool = False
    model_writes: int = 0
    last_scale: ScaleEstimate | None = None

    def __post_init__(self):
        if not 0 < self.pce_threshold < 1:
            raise ValueError("pce_threshold must be in (0, 1)")

    @property
    def center(self) -> tuple[float, float]:
        return self.bbox.center


def _template_size(window_wh, params: TrackerParams) -> tuple[int, int]:
    ww, wh = window_wh
    k = np.sqrt(params.template_area / (ww * wh))
    c = params.cell_size
    return (max(3 * c, int(round(ww * k / c)) * c), max(3 * c, int(round(wh * k / c)) * c))


def _features(state_or_params, image, bbox, template_wh) -> FeatureMap:
    p = state_or_params
    return extract_features(image, bbox, p.cell_size, p.padding, template_wh, hog_eps=p.hog_eps)


def init_tracker(image, bbox: BoundingBox, params: TrackerParams | None = None,
                 person: PersonModel | None = None,
                 calibration: CameraCalibration | None = None) -> TrackerState:
    params = params or TrackerParams()
    base = (bbox.width / bbox.scale, bbox.height / bbox.scale)
    tmpl = _template_size((base[0] * params.padding, base[1] * params.padding), params)
    box = BoundingBox(bbox.center, base[0], base[1], 1.0)
    feats = _features(params, image, box, tmpl)
    model = train_filter(feats, params.lam, params.output_sigma, params.kernel, params.learning_rate)
    scale_model = ScaleFilter(base, params.scale)
    scale_model.train(image, box.center, 1.0)
    return TrackerState(model, scale_model, box, params.pce_threshold, params, base, tmpl,
                        v_init_height=base[1], person=person, calibration=calibration)


def update_model(state: TrackerState, features: FeatureMap, pce: float) -> TrackerState:
    """
    Blend the filter toward one trained on `features` when `pce` clears the
    threshold; otherwise leave the model object untouched and flag the frame.
    """
    if pce > state.pce_threshold:
        p = state.params
        fresh = train_filter(features, p.lam, p.output_sigma, p.kernel, state.model.learning_rate)
        model = interpolate_model(state.model, fresh)
        return replace(state, model=model, update_gated=False, model_writes=state.model_writes + 1)
    return replace(state, update_gated=True)


def estimate_scale_2d(state: TrackerState, image, center) -> tuple[float, float]:
    return state.scale_model.estimate(image, center, state.bbox.scale)


def _box(state: TrackerState, center, scale: float) -> BoundingBox:
    return BoundingBox((float(center[0]), float(center[1])),
                       state.base_size[0] * scale, state.base_size[1] * scale, scale)


def track_frame(state: TrackerState, image, x_k=None):
    """
    Locate the target in `image`.

    `x_k` is an optional 3-D estimate exposing `.x` (position) and `.p`
    (covariance); when given, the visual scale is fused with the scale of
    the projected person. Returns (state, (u, v), pce, scale).

    Below the PCE threshold the model is not updated and the box centre is
    held; the held centre is still returned so the caller can publish it
    with inflated noise.
    """
    p = state.params
    s = state.bbox.scale
    feats = _features(p, image, state.bbox, state.template_wh)
    try:
        resp = detect(state.model, feats)
        pce = resp.pce
    except ZeroResponseError:
        resp, pce = None, 0.0
    confident = pce > state.pce_threshold

    if confident:
        dw, dh = resp.subcell_offset
        px_per_tmpl = state.base_size[0] * p.padding * s / state.template_wh[0]
        py_per_tmpl = state.base_size[1] * p.padding * s / state.template_wh[1]
        center = (state.bbox.u + dw * p.cell_size * px_per_tmpl,
                  state.bbox.v + dh * p.cell_size * py_per_tmpl)
        s2d, sigma2d = estimate_scale_2d(state, image, center)
    else:
        center = state.bbox.center
        cand = s * state.scale_model.factors
        s2d, sigma2d = s, max(weighted_scale_spread(cand, np.ones_like(cand)), SIGMA2D_FLOOR)

    s3d = sigma3d = None
    if x_k is not None and state.person is not None and state.calibration is not None:
        try:
            s3d, sigma3d = scale_from_3d(x_k.x, x_k.p, state.person, state.calibration,
                                         state.v_init_height)
        except PointBehindCameraError:
            log.debug("3-D estimate is behind the camera; using the visual scale only")
        if s3d is not None and not (s3d > 0 and sigma3d > 0):
            s3d = sigma3d = None
    if s3d is not None:
        s_k = fuse_scale(s2d, sigma2d, s3d, sigma3d)
    elif confident:
        s_k = s2d
    else:
        s_k = s
    s_k = float(np.clip(s_k, p.min_scale, p.max_scale))

    bbox = _box(state, center, s_k)
    state = replace(state, bbox=bbox, last_pce=pce,
                    last_scale=ScaleEstimate(s2d, sigma2d, s3d, sigma3d, s_k))
    if confident:
        new_feats = _features(p, image, bbox, state.template_wh)
        state = update_model(state, new_feats, pce)
        state.scale_model.train(image, bbox.center, s_k, rate=p.scale.learning_rate)
    else:
        state = replace(state, update_gated=True)
    return state, bbox.center, pce, s_k


TRACE_FIELDS = ("stamp", "u", "v", "scale", "pce", "gated")


def write_trace(path, rows) -> None:
    """Rows of (stamp, u, v, scale, pce, gated) as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for stamp, u, v, sc, pce, gated in rows:
            w.writerow([f"{stamp:.6f}", f"{u:.4f}", f"{v:.4f}", f"{sc:.6f}", f"{pce:.6f}", int(bool(gated))])
