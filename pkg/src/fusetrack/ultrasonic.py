"""
Ultrasonic array model.

One Gaussian-process regressor per receiver maps the planar target
position (x_u, y_u) to the expected reading (acoustic path length, m).
Given four readings, the position posterior under a uniform prior is
evaluated on a grid in log space. The argmax cell seeds a local continuous
refinement of the mode (the likelihood is a narrow tilted ridge, so the
best cell can sit well off the mode along y), and a Laplace fit at the
mode gives the covariance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.optimize import minimize

N_RECEIVERS = 4


class SingularGramError(ValueError):
    pass


class DegeneratePosteriorError(ValueError):
    pass


class UndefinedRangeError(ValueError):
    pass


@dataclass(frozen=True)
class KernelHyper:
    length_scale: float = 0.5
    signal_std: float = 0.2
    noise_std: float = 0.02

    def __post_init__(self):
        if self.length_scale <= 0 or self.signal_std <= 0 or self.noise_std < 0:
            raise ValueError("need length_scale > 0, signal_std > 0, noise_std >= 0")


@dataclass
class GprModel:
    inputs: np.ndarray  # (n, 2)
    targets: np.ndarray  # (n,)
    hyper: KernelHyper
    prior_mean: float
    chol: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)  # K^-1 (y - m)

    @property
    def noise_var(self) -> float:
        return self.hyper.noise_std ** 2

    @property
    def signal_var(self) -> float:
        return self.hyper.signal_std ** 2


def se_kernel(a: np.ndarray, b: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return hyper.signal_std ** 2 * np.exp(-0.5 * d2 / hyper.length_scale ** 2)


def gpr_fit(inputs, targets, hyper: KernelHyper | None = None,
            prior_mean: float | None = None) -> GprModel:
    """
    Fit a zero-residual-mean GP with a squared-exponential kernel. The
    constant prior mean defaults to the mean of the targets.
    """
    hyper = hyper or KernelHyper()
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float).ravel()
    if X.shape[0] != y.size or X.shape[1] != 2:
        raise ValueError("inputs must be (n, 2) with one target per input")
    if len(np.unique(X, axis=0)) < 2:
        raise ValueError("need at least two distinct training inputs")
    m = float(np.mean(y)) if prior_mean is None else float(prior_mean)
    K = se_kernel(X, X, hyper) + hyper.noise_std ** 2 * np.eye(len(y))
    try:
        chol = cho_factor(K, lower=True)
    except LinAlgError as exc:
        raise SingularGramError("kernel Gram matrix is not positive definite") from exc
    if not np.all(np.isfinite(chol[0])):
        raise SingularGramError("kernel Gram factorisation is not finite")
    return GprModel(X, y, hyper, m, chol, cho_solve(chol, y - m))


def gpr_predict(model: GprModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance at query point(s) q, shape (2,) or (m, 2)."""
    Q = np.asarray(q, dtype=float)
    single = Q.ndim == 1
    Q = np.atleast_2d(Q)
    Ks = se_kernel(Q, model.inputs, model.hyper)
    mean = model.prior_mean + Ks @ model.weights
    v = cho_solve(model.chol, Ks.T)
    var = np.maximum(model.signal_var - np.sum(Ks * v.T, axis=1), 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


@dataclass(frozen=True)
class SonarArrayGeometry:
    """Receiver positions (x, y) in the robot frame, at z = 0."""
    receiver_positions: tuple = ((0.0, 0.3), (0.0, 0.1), (0.0, -0.1), (0.0, -0.3))

    def __post_init__(self):
        pos = np.asarray(self.receiver_positions, dtype=float)
        if pos.shape != (N_RECEIVERS, 2):
            raise ValueError("exactly 4 planar receiver positions are required")
        gaps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        if np.ptp(gaps) > 1e-9 or gaps[0] <= 0:
            raise ValueError("receivers must be equally spaced")

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.receiver_positions, dtype=float)

    @classmethod
    def linear(cls, spacing: float = 0.2) -> "SonarArrayGeometry":
        ys = (np.arange(N_RECEIVERS)[::-1] - (N_RECEIVERS - 1) / 2) * spacing
        return cls(tuple((0.0, float(y)) for y in ys))

    def path_lengths(self, planar) -> np.ndarray:
        """Noise-free readings for planar position(s) (x_u, y_u), shape (..., 4)."""
        q = np.asarray(planar, dtype=float)
        return np.linalg.norm(q[..., None, :] - self.positions, axis=-1)


@dataclass(frozen=True)
class PosteriorGrid:
    x_min: float = 0.5
    x_max: float = 5.0
    y_min: float = -2.0
    y_max: float = 2.0
    resolution: float = 0.05

    def __post_init__(self):
        if self.resolution <= 0 or self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError("empty posterior grid")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        nx = int(round((self.x_max - self.x_min) / self.resolution)) + 1
        ny = int(round((self.y_max - self.y_min) / self.resolution)) + 1
        return (self.x_min + self.resolution * np.arange(nx),
                self.y_min + self.resolution * np.arange(ny))

    def points(self) -> np.ndarray:
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def contains(self, x_u: float, y_u: float) -> bool:
        return self.x_min <= x_u <= self.x_max and self.y_min <= y_u <= self.y_max


@dataclass(frozen=True)
class SonarEstimate:
    x_u: float
    y_u: float
    covariance: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x_u, self.y_u])


def _log_likelihood(readings, means, variances, noise_vars) -> np.ndarray:
    """Sum over receivers of log N(U_i; mean_i, var_i + noise_i); means (4, m)."""
    U = np.asarray(readings, dtype=float)[:, None]
    v = np.maximum(variances + np.asarray(noise_vars)[:, None], 1e-300)
    return np.sum(-0.5 * (U - means) ** 2 / v - 0.5 * np.log(2 * np.pi * v), axis=0)


class SonarLocalizer:
    """Four receiver GPs with predictions cached on a fixed posterior grid."""

    def __init__(self, models, grid: PosteriorGrid | None = None, fd_step: float | None = None,
                 refine: bool = True):
        if len(models) != N_RECEIVERS:
            raise ValueError("one GP model per receiver is required")
        self.models = list(models)
        self.grid = grid or PosteriorGrid()
        self.fd_step = fd_step or self.grid.resolution / 4
        self.refine = refine
        self.xs, self.ys = self.grid.axes()
        pts = self.grid.points()
        preds = [gpr_predict(m, pts) for m in self.models]
        self.means = np.array([p[0] for p in preds])
        self.vars = np.array([p[1] for p in preds])
        self.noise_vars = np.array([m.noise_var for m in self.models])

    def log_posterior_grid(self, readings) -> np.ndarray:
        """Unnormalised log posterior on the grid, shape (nx, ny)."""
        ll = _log_likelihood(readings, self.means, self.vars, self.noise_vars)
        return ll.reshape(len(self.xs), len(self.ys))

    def neg_log_posterior(self, readings, q) -> float:
        means, vars_ = zip(*(gpr_predict(m, q) for m in self.models))
        return -float(_log_likelihood(readings, np.array(means)[:, None],
                                      np.array(vars_)[:, None], self.noise_vars)[0])

    def laplace_covariance(self, readings, q, quantized: bool = False) -> np.ndarray:
        h = self.fd_step
        x, y = q
        f = lambda a, b: self.neg_log_posterior(readings, (a, b))
        f0 = f(x, y)
        hxx = (f(x + h, y) - 2 * f0 + f(x - h, y)) / h ** 2
        hyy = (f(x, y + h) - 2 * f0 + f(x, y - h)) / h ** 2
        hxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4 * h ** 2)
        H = np.array([[hxx, hxy], [hxy, hyy]])
        w, V = np.linalg.eigh(H)
        # flat or concave directions get the spread of the whole search region
        span = max(self.grid.x_max - self.grid.x_min, self.grid.y_max - self.grid.y_min)
        w = np.where(w > 1.0 / span ** 2, w, 12.0 / span ** 2)
        cov = (V / w) @ V.T
        if quantized:
            # the estimate is a cell centre: add the uniform quantisation variance
            cov = cov + np.eye(2) * self.grid.resolution ** 2 / 12
        return 0.5 * (cov + cov.T)

    def locate(self, readings) -> SonarEstimate:
        readings = np.asarray(readings, dtype=float)
        if readings.shape != (N_RECEIVERS,):
            raise ValueError("exactly 4 readings are required")
        lp = self.log_posterior_grid(readings)
        if not np.any(np.isfinite(lp)):
            raise DegeneratePosteriorError("log posterior is -inf over the whole grid")
        lp = np.where(np.isfinite(lp), lp, -np.inf)
        i, j = np.unravel_index(int(np.argmax(lp)), lp.shape)
        q = (float(self.xs[i]), float(self.ys[j]))
        if not self.refine:
            return SonarEstimate(q[0], q[1], self.laplace_covariance(readings, q, quantized=True))
        q = self._refine(readings, q)
        return SonarEstimate(q[0], q[1], self.laplace_covariance(readings, q))

    def _refine(self, readings, q0) -> tuple[float, float]:
        g, h = self.grid, self.fd_step
        bounds = [(g.x_min + h, g.x_max - h), (g.y_min + h, g.y_max - h)]
        x0 = np.clip(q0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(lambda p: self.neg_log_posterior(readings, p), x0, method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": 50})
        q = res.x if res.fun <= self.neg_log_posterior(readings, x0) else x0
        return float(q[0]), float(q[1])


def sonar_posterior(models, readings, grid: PosteriorGrid | None = None,
                    refine: bool = True) -> SonarEstimate:
    return SonarLocalizer(models, grid, refine=refine).locate(readings)


def sonar_measurement_fn(x) -> np.ndarray:
    """(x, y, z) -> (sqrt(x^2 + z^2), y)"""
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[0], x[2])
    if r < 1e-12:
        raise UndefinedRangeError("range is undefined on the x-z origin")
    return np.array([r, x[1]])


def sonar_measurement_jacobian(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[0], x[2])
    if r < 1e-12:
        raise UndefinedRangeError("range is undefined on the x-z origin")
    return np.array([[x[0] / r, 0.0, x[2] / r], [0.0, 1.0, 0.0]])


def train_receiver_models(inputs, readings, hyper: KernelHyper | None = None) -> list[GprModel]:
    """Fit one GP per receiver column of `readings` (n, 4)."""
    readings = np.asarray(readings, dtype=float)
    return [gpr_fit(inputs, readings[:, i], hyper) for i in range(readings.shape[1])]


CSV_FIELDS = ["x", "y"] + [f"reading_{i + 1}" for i in range(N_RECEIVERS)]


def save_training_csv(path, inputs, readings) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for (x, y), row in zip(np.asarray(inputs), np.asarray(readings)):
            w.writerow([repr(float(x)), repr(float(y))] + [repr(float(r)) for r in row])


def load_training_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_FIELDS:
            raise ValueError(f"expected columns {CSV_FIELDS}, got {reader.fieldnames}")
        rows = [[float(r[k]) for k in CSV_FIELDS] for r in reader]
    arr = np.array(rows)
    return arr[:, :2], arr[:, 2:]
