"""Synthetic camera frames: panorama background, textured person, occluders, noise."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import cv2
import numpy as np

from ..camera import (BoundingBox, CameraCalibration, DegenerateBoxError, PersonModel,
                      PointBehindCameraError, box_from_anchors)

TEXTURE_WH = (64, 256)


@dataclass(frozen=True)
class FrameTruth:
    bbox: BoundingBox | None  # None when the person is behind the camera
    in_view: bool
    coverage: float  # fraction of the visible person box hidden by occluders
    occluded: bool  # an occlusion window is active and overlaps the person


@lru_cache(maxsize=4)
def person_texture(contrast: str = "high") -> np.ndarray:
    """Upright person texture, RGB float (H, W, 3): head, checked shirt, trousers."""
    tw, th = TEXTURE_WH
    img = np.zeros((th, tw, 3))
    rows = np.arange(th)[:, None]
    cols = np.arange(tw)[None, :]
    head = rows < th * 0.13
    torso = (rows >= th * 0.13) & (rows < th * 0.52)
    legs = rows >= th * 0.52
    checker = ((rows // 12 + cols // 12) % 2).astype(float)
    grad = cols / (tw - 1)
    amp = 1.0 if contrast == "high" else 0.25
    skin = np.array([205.0, 160.0, 130.0])
    shirt_a, shirt_b = np.array([200.0, 40.0, 40.0]), np.array([240.0, 220.0, 60.0])
    trousers = np.array([40.0, 60.0, 150.0])
    mid = 0.5 * (shirt_a + shirt_b)
    shirt = mid + amp * (checker[..., None] * (shirt_a - mid) + (1 - checker[..., None]) * (shirt_b - mid))
    img[:] = trousers
    img = np.where(torso[..., None], shirt, img)
    leg_shade = trousers * (0.6 + 0.8 * amp * grad[..., None])
    img = np.where(legs[..., None], np.broadcast_to(leg_shade, img.shape), img)
    img = np.where(head[..., None], np.broadcast_to(skin, img.shape), img)
    # dark belt and collar give horizontal structure
    belt = (rows >= th * 0.50) & (rows < th * 0.54)
    img = np.where(belt[..., None], np.broadcast_to(np.array([30.0, 25.0, 20.0]), img.shape), img)
    # gap between the legs
    gap = legs & (np.abs(cols - tw / 2) < tw * 0.06) & (rows > th * 0.6)
    img = np.where(gap[..., None], np.array([90.0, 90.0, 80.0]), img)
    return np.clip(img, 0, 255)


@lru_cache(maxsize=4)
def panorama(seed: int, width: int, height: int, horizon: float) -> np.ndarray:
    """Cylindrical 360-degree backdrop, RGB float (height, width, 3)."""
    rng = np.random.default_rng(seed)
    rows = np.arange(height)[:, None]
    sky = np.array([170.0, 190.0, 215.0]) - 40.0 * (rows / height)[..., None]  # (height, 1, 3)
    ground = np.array([110.0, 115.0, 95.0])
    img = np.where((rows < horizon)[..., None], sky, ground)
    img = np.broadcast_to(img, (height, width, 3)).copy()
    # buildings with window grids
    x = 0
    while x < width:
        bw = int(rng.integers(60, 220))
        top = int(horizon - rng.uniform(0.15, 0.9) * horizon)
        col = rng.uniform(90, 200, size=3) * np.array([1.0, 0.95, 0.9])
        img[top:int(horizon), x:x + bw] = col
        win = col * 0.55
        for wy in range(top + 6, int(horizon) - 8, 18):
            for wx in range(x + 6, min(x + bw, width) - 8, 16):
                img[wy:wy + 8, wx:wx + 7] = win
        x += bw + int(rng.integers(0, 60))
    # trees and poles
    for _ in range(width // 90):
        cx = int(rng.integers(0, width))
        trunk_w = int(rng.integers(4, 10))
        img[int(horizon * 0.55):int(horizon + 10), cx:cx + trunk_w] = [80, 60, 40]
        r = int(rng.integers(15, 35))
        cv2.circle(img, (cx + trunk_w // 2, int(horizon * 0.5)), r,
                   tuple(float(v) for v in rng.uniform([30, 90, 30], [70, 150, 70])), -1)
    # ground speckle
    speck = rng.normal(0, 10, size=(height, width, 1)) * (rows >= horizon)[..., None]
    img = img + cv2.GaussianBlur(speck.astype(np.float32), (0, 0), 1.5)[..., None]
    img = cv2.GaussianBlur(img.astype(np.float32), (0, 0), 0.8)
    return np.clip(img, 0, 255).astype(np.float32)


def occluder_texture(h: int, w: int) -> np.ndarray:
    """Flat grey-brown board with a mild vertical shading."""
    base = np.array([120.0, 105.0, 90.0])
    shade = 1.0 + 0.05 * np.cos(np.linspace(0, np.pi, max(h, 1)))[:, None, None]
    return np.broadcast_to(base * shade, (h, w, 3))


def background(cal: CameraCalibration, heading: float, seed: int) -> np.ndarray:
    W, H = cal.image_size
    fx, cx, cy = cal.intrinsics[0, 0], cal.intrinsics[0, 2], cal.intrinsics[1, 2]
    P = int(round(2 * np.pi * fx))
    pano = panorama(seed, P, H, float(cy))
    # column j looks along bearing heading - (j - cx)/fx; panorama index = -bearing*fx
    pos = ((np.arange(W) - cx - heading * fx) % P).astype(np.float32)
    map_x = np.ascontiguousarray(np.broadcast_to(pos[None, :], (H, W)))
    map_y = np.ascontiguousarray(np.broadcast_to(np.arange(H, dtype=np.float32)[:, None], (H, W)))
    out = cv2.remap(pano, map_x, map_y, interpolation=cv2.INTER_LINEAR, borderMode=cv2.BORDER_WRAP)
    return out.astype(np.float64)


def _overlap(a, b) -> float:
    u0, v0 = max(a[0], b[0]), max(a[1], b[1])
    u1, v1 = min(a[2], b[2]), min(a[3], b[3])
    return max(0.0, u1 - u0) * max(0.0, v1 - v0)


def _pixel_rect(box, W: int, H: int) -> tuple[int, int, int, int]:
    """Integer pixel span [a, b) x [c, d) painted for an occluder box."""
    u0, v0, u1, v1 = box
    return (int(np.floor(max(u0, 0))), int(np.ceil(min(u1, W))),
            int(np.floor(max(v0, 0))), int(np.ceil(min(v1, H))))


def visibility(box: BoundingBox | None, occluders, W: int, H: int) -> tuple[bool, float]:
    """(in_view, fraction of the on-screen person box hidden by occluders)"""
    if box is None:
        return False, 0.0
    u0, v0, u1, v1 = box.corners()
    vis = (max(u0, -0.5), max(v0, -0.5), min(u1, W - 0.5), min(v1, H - 0.5))
    if not (vis[2] > vis[0] and vis[3] > vis[1]):
        return False, 0.0
    area = (vis[2] - vis[0]) * (vis[3] - vis[1])
    coverage = 0.0
    for occ in occluders:
        a, b, c, d = _pixel_rect(occ, W, H)
        coverage = max(coverage, _overlap(vis, (a - 0.5, c - 0.5, b - 0.5, d - 0.5)) / area)
    return True, float(coverage)


def person_box(x_rel, person: PersonModel, cal: CameraCalibration) -> BoundingBox | None:
    try:
        return box_from_anchors(x_rel, person, cal)
    except (PointBehindCameraError, DegenerateBoxError):
        return None


def draw_person(img: np.ndarray, box: BoundingBox, texture: np.ndarray) -> None:
    W, H = img.shape[1], img.shape[0]
    u0, v0, u1, v1 = box.corners()
    # pixel region touched by the box
    a, b = max(int(np.floor(u0 + 0.5)), 0), min(int(np.ceil(u1 + 0.5)), W)
    c, d = max(int(np.floor(v0 + 0.5)), 0), min(int(np.ceil(v1 + 0.5)), H)
    if b <= a or d <= c:
        return
    tw = max(2, int(np.ceil(box.width)))
    th = max(2, int(np.ceil(box.height)))
    tex = cv2.resize(texture.astype(np.float32), (tw, th), interpolation=cv2.INTER_AREA)
    # texture pixel j spans [u0 + j*sx, u0 + (j+1)*sx]; image pixel centres are integers
    sx, sy = box.width / tw, box.height / th
    M = np.array([[sx, 0.0, u0 + 0.5 * sx - a], [0.0, sy, v0 + 0.5 * sy - c]])
    roi = (b - a, d - c)
    warped = cv2.warpAffine(tex, M, roi, flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT)
    mask = cv2.warpAffine(np.ones((th, tw), np.float32), M, roi, flags=cv2.INTER_LINEAR,
                          borderMode=cv2.BORDER_CONSTANT)
    # exact box edges: coverage of each pixel by [u0, u1] x [v0, v1]
    us, vs = np.arange(a, b), np.arange(c, d)
    cu = np.clip(np.minimum(us + 0.5, u1) - np.maximum(us - 0.5, u0), 0, 1)
    cv_ = np.clip(np.minimum(vs + 0.5, v1) - np.maximum(vs - 0.5, v0), 0, 1)
    alpha = np.outer(cv_, cu)[..., None]
    inner = mask > 1e-6
    warped[inner] /= mask[inner][:, None]
    img[c:d, a:b] = img[c:d, a:b] * (1 - alpha) + warped * alpha


def compose_frame(cal: CameraCalibration, heading: float, x_rel, person: PersonModel,
                  occluders, noise_std: float, rng, background_seed: int,
                  contrast: str = "high") -> tuple[np.ndarray, FrameTruth]:
    W, H = cal.image_size
    img = background(cal, heading, background_seed)
    box = person_box(x_rel, person, cal)
    in_view, coverage = visibility(box, occluders, W, H)
    if in_view:
        draw_person(img, box, person_texture(contrast))
    for occ in occluders:
        a, b, c, d = _pixel_rect(occ, W, H)
        if b > a and d > c:
            img[c:d, a:b] = occluder_texture(d - c, b - a)
    if noise_std > 0:
        img = img + rng.normal(0.0, noise_std, size=img.shape)
    frame = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return frame, FrameTruth(box, in_view, coverage, bool(in_view and coverage > 0))
