"""
Kernelized correlation filter: ridge regression over all cyclic shifts,
solved element-wise in the Fourier domain.

Conventions: a feature map is (C, H, W); the regression label is a
periodic Gaussian whose peak sits at cell (0, 0). A patch that is the
template cyclically shifted by (dw, dh) produces a response peaking at
(dw, dh) (modulo the map size).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureMap

GAUSSIAN = "gaussian"
LINEAR = "linear"


class DimensionMismatchError(ValueError):
    pass


class ZeroResponseError(ValueError):
    """The response map is identically zero, so PCE is undefined."""


@dataclass(frozen=True)
class KernelParams:
    family: str = GAUSSIAN
    sigma: float = 0.5

    def __post_init__(self):
        if self.family not in (GAUSSIAN, LINEAR):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == GAUSSIAN and self.sigma <= 0:
            raise ValueError("gaussian kernel bandwidth must be positive")


@dataclass
class FilterModel:
    alpha_hat: np.ndarray  # (H, W) complex
    template: FeatureMap
    label_hat: np.ndarray  # (H, W) complex
    lam: float = 1e-4
    kernel: KernelParams = field(default_factory=KernelParams)
    learning_rate: float = 0.02

    def __post_init__(self):
        if self.alpha_hat.shape != self.label_hat.shape or self.alpha_hat.shape != self.template.shape:
            raise DimensionMismatchError("alpha, label and template sizes disagree")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not 0 <= self.learning_rate <= 1:
            raise ValueError("learning_rate must be in [0, 1]")


@dataclass
class ResponseMap:
    values: np.ndarray  # (H, W) real
    peak_value: float
    peak_pos: tuple[int, int]  # (w, h) cell index of the maximum
    energy: float
    pce: float
    subcell_offset: tuple[float, float] = (0.0, 0.0)  # refined (dw, dh) displacement

    @property
    def displacement(self) -> tuple[float, float]:
        return self.subcell_offset


def gaussian_label(shape, sigma: float) -> np.ndarray:
    """Periodic 2-D Gaussian with its peak at cell (0, 0)."""
    h, w = shape
    dy = np.minimum(np.arange(h), h - np.arange(h))
    dx = np.minimum(np.arange(w), w - np.arange(w))
    return np.exp(-0.5 * (dy[:, None] ** 2 + dx[None, :] ** 2) / sigma ** 2)


def _fft(ch: np.ndarray) -> np.ndarray:
    return np.fft.fft2(ch, axes=(-2, -1))


def kernel_correlation(x: FeatureMap, z: FeatureMap, kernel: KernelParams) -> np.ndarray:
    """
    k[d] = kappa(x, z shifted back by d) for every cyclic shift d, (H, W) real.

    Linear: sum_c sum_n x_c[n] z_c[n + d].
    Gaussian: exp(-(|x|^2 + |z|^2 - 2 <x, z_d>) / (sigma^2 * numel)).
    """
    if x.channels.shape != z.channels.shape:
        raise DimensionMismatchError(f"feature shapes differ: {x.channels.shape} vs {z.channels.shape}")
    cross = np.fft.ifft2(np.sum(np.conj(_fft(x.channels)) * _fft(z.channels), axis=0)).real
    if kernel.family == LINEAR:
        return cross
    xx = np.sum(x.channels ** 2)
    zz = np.sum(z.channels ** 2)
    d = np.maximum(xx + zz - 2 * cross, 0) / (kernel.sigma ** 2 * x.channels.size)
    return np.exp(-d)


def train_filter(features: FeatureMap, lam: float = 1e-4, output_sigma: float = 0.5,
                 kernel: KernelParams | None = None, learning_rate: float = 0.02) -> FilterModel:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    kernel = kernel or KernelParams()
    label_hat = np.fft.fft2(gaussian_label(features.shape, output_sigma))
    kss = kernel_correlation(features, features, kernel)
    alpha_hat = label_hat / (np.fft.fft2(kss) + lam)
    return FilterModel(alpha_hat, features, label_hat, lam, kernel, learning_rate)


def compute_pce(resp: np.ndarray) -> float:
    """Peak-to-correlation energy: max|y|^2 / sum |y|^2, in [1/N, 1]."""
    resp = np.asarray(resp, dtype=float)
    if resp.size == 0 or not np.all(np.isfinite(resp)):
        raise ValueError("response map must be non-empty and finite")
    energy = float(np.sum(resp ** 2))
    if energy == 0.0:
        raise ZeroResponseError("response map is identically zero")
    return float(np.max(np.abs(resp)) ** 2 / energy)


def _wrap(i: int, n: int) -> int:
    return i - n if i > n // 2 else i


def refine_peak(values: np.ndarray, peak_rc: tuple[int, int]) -> tuple[float, float]:
    """
    Sub-cell peak offset (dw, dh) from a quadratic fitted to the 3x3
    neighbourhood (cyclic). Offsets are clamped to half a cell.
    """
    h, w = values.shape
    r, c = peak_rc
    if h < 3 or w < 3:
        return 0.0, 0.0
    patch = values[np.ix_([(r - 1) % h, r, (r + 1) % h], [(c - 1) % w, c, (c + 1) % w])]
    # f(x, y) = a + b x + c y + d x^2 + e y^2 + f x y over x, y in {-1, 0, 1}
    ys, xs = np.mgrid[-1:2, -1:2]
    X = np.column_stack([np.ones(9), xs.ravel(), ys.ravel(), xs.ravel() ** 2,
                         ys.ravel() ** 2, xs.ravel() * ys.ravel()])
    coef = np.linalg.lstsq(X, patch.ravel(), rcond=None)[0]
    _, bx, by, dxx, dyy, dxy = coef
    hess = np.array([[2 * dxx, dxy], [dxy, 2 * dyy]])
    if np.linalg.det(hess) > 1e-12 and hess[0, 0] < 0:
        ox, oy = np.linalg.solve(hess, [-bx, -by])
    else:
        ox = -bx / (2 * dxx) if dxx < 0 else 0.0
        oy = -by / (2 * dyy) if dyy < 0 else 0.0
    return float(np.clip(ox, -0.5, 0.5)), float(np.clip(oy, -0.5, 0.5))


def response_from_values(values: np.ndarray, refine: bool = True) -> ResponseMap:
    values = np.asarray(values, dtype=float)
    h, w = values.shape
    r, c = np.unravel_index(int(np.argmax(values)), values.shape)
    energy = float(np.sum(values ** 2))
    pce = compute_pce(values)
    ox, oy = refine_peak(values, (r, c)) if refine else (0.0, 0.0)
    return ResponseMap(values, float(np.max(np.abs(values))), (int(c), int(r)), energy, pce,
                       (_wrap(int(c), w) + ox, _wrap(int(r), h) + oy))


def detect_values(model: FilterModel, features: FeatureMap) -> np.ndarray:
    if features.channels.shape != model.template.channels.shape:
        raise DimensionMismatchError(
            f"features {features.channels.shape} do not match template {model.template.channels.shape}")
    ksr = kernel_correlation(model.template, features, model.kernel)
    return np.fft.ifft2(np.fft.fft2(ksr) * model.alpha_hat).real


def detect(model: FilterModel, features: FeatureMap, refine: bool = True) -> ResponseMap:
    """Correlate the model with new features. Raises ZeroResponseError on an all-zero map."""
    return response_from_values(detect_values(model, features), refine=refine)


def interpolate_model(model: FilterModel, new: FilterModel, rate: float | None = None) -> FilterModel:
    """Blend `model` toward `new`: (1 - rate) * old + rate * new for alpha and template."""
    rate = model.learning_rate if rate is None else rate
    tmpl = FeatureMap((1 - rate) * model.template.channels + rate * new.template.channels,
                      model.template.cell_size)
    return replace(model, alpha_hat=(1 - rate) * model.alpha_hat + rate * new.alpha_hat, template=tmpl)
