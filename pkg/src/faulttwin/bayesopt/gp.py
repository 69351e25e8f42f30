"""Gaussian-process surrogate with an isotropic Matern-5/2 kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.stats import norm

from ..errors import IllConditionedSurrogate

LENGTH_SCALE_GRID = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
NOISE_GRID = (1e-6, 1e-4, 1e-2)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


def matern52(a: np.ndarray, b: np.ndarray, length_scale: float) -> np.ndarray:
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2 * a @ b.T
    r = np.sqrt(np.maximum(d2, 0.0)) / length_scale
    s5r = math.sqrt(5.0) * r
    return (1.0 + s5r + 5.0 / 3.0 * r * r) * np.exp(-s5r)


def _cholesky_with_jitter(k: np.ndarray) -> tuple[np.ndarray, float]:
    try:
        return cholesky(k, lower=True), 0.0
    except LinAlgError:
        pass
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return cholesky(k + jitter * np.eye(len(k)), lower=True), jitter
        except LinAlgError:
            jitter *= 10
    raise IllConditionedSurrogate(
        f"kernel matrix not positive definite after jitter {JITTER_MAX:g}"
    )


@dataclass
class GpSurrogate:
    x: np.ndarray
    y: np.ndarray
    y_mean: float
    y_std: float
    length_scale: float
    noise: float
    chol: np.ndarray
    alpha: np.ndarray
    log_marginal_likelihood: float
    jitter: float = 0.0

    @property
    def y_standardized(self) -> np.ndarray:
        return (self.y - self.y_mean) / self.y_std


def _fit_fixed(x, ys, length_scale, noise):
    k = matern52(x, x, length_scale) + noise * np.eye(len(x))
    chol, jitter = _cholesky_with_jitter(k)
    alpha = cho_solve((chol, True), ys)
    lml = -0.5 * ys @ alpha - np.log(np.diag(chol)).sum() - 0.5 * len(x) * math.log(2 * math.pi)
    return chol, alpha, float(lml), jitter


def gp_fit(x, y, *, length_scale: float | None = None, noise: float | None = None) -> GpSurrogate:
    """Fit on encoded points ``x`` (n, d) and objective values ``y`` (n,).

    Hyperparameters left as ``None`` are chosen by maximising the marginal
    likelihood over ``LENGTH_SCALE_GRID`` x ``NOISE_GRID``; the first grid
    entry wins ties.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) == 0 or len(y) != len(x):
        raise ValueError("need at least one observation with matching x and y")
    if not np.isfinite(y).all():
        raise ValueError("objective values must be finite")
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not y_std > 0:
        y_std = 1.0
    ys = (y - y_mean) / y_std
    ls_grid = (length_scale,) if length_scale is not None else LENGTH_SCALE_GRID
    nz_grid = (noise,) if noise is not None else NOISE_GRID
    best = None
    last_error = None
    for ls in ls_grid:
        for nz in nz_grid:
            try:
                chol, alpha, lml, jitter = _fit_fixed(x, ys, ls, nz)
            except IllConditionedSurrogate as exc:
                last_error = exc
                continue
            if best is None or lml > best[2]:
                best = (ls, nz, lml, chol, alpha, jitter)
    if best is None:
        raise last_error
    ls, nz, lml, chol, alpha, jitter = best
    return GpSurrogate(x, y, y_mean, y_std, ls, nz, chol, alpha, lml, jitter)


def gp_predict(gp: GpSurrogate, points) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent standard deviation, in objective units.

    A single point (d,) yields scalars.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != gp.x.shape[1]:
        raise ValueError(f"point dimension {p.shape[1]} != surrogate dimension {gp.x.shape[1]}")
    ks = matern52(gp.x, p, gp.length_scale)
    mean = ks.T @ gp.alpha
    v = solve_triangular(gp.chol, ks, lower=True)
    var = np.maximum(1.0 - np.sum(v * v, axis=0), 0.0)
    mu = gp.y_mean + gp.y_std * mean
    sd = gp.y_std * np.sqrt(var)
    if single:
        return float(mu[0]), float(sd[0])
    return mu, sd


def expected_improvement(mean, stddev, best, direction: str = "minimize"):
    """Closed-form EI; reduces to max(improvement, 0) where stddev == 0."""
    mu = np.asarray(mean, dtype=np.float64)
    sd = np.asarray(stddev, dtype=np.float64)
    if (sd < 0).any():
        raise ValueError("stddev must be >= 0")
    if direction == "minimize":
        imp = best - mu
    elif direction == "maximize":
        imp = mu - best
    else:
        raise ValueError(f"direction must be 'minimize' or 'maximize', got {direction!r}")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(sd > 0, imp / np.where(sd > 0, sd, 1.0), 0.0)
        ei = np.where(sd > 0, imp * norm.cdf(z) + sd * norm.pdf(z), np.maximum(imp, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei
