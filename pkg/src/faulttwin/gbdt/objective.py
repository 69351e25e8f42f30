"""Softmax link and the multi-class objectives used by the booster.

Both objectives work on margins (pre-softmax scores) and return per-row,
per-class first and diagonal second derivatives, which is all a Newton
boosting step needs.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

P_CLAMP = 1e-15
HESS_FLOOR = 1e-16


def softmax(scores):
    """Row-wise softmax with max subtraction; accepts (K,) or (n, K)."""
    s = np.asarray(scores, dtype=np.float64)
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(probs, label):
    p = np.asarray(probs, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    y = np.broadcast_to(np.asarray(label, dtype=np.int64), (p.shape[0],))
    return p, y, single


def _alpha_t(alpha, y, n_classes):
    if alpha is None:
        return np.ones(len(y))
    a = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (n_classes,))
    return a[y]


def focal_loss(probs, label, gamma: float = 2.0, alpha=None):
    """-alpha_t * (1 - p_t)**gamma * ln(p_t), with p_t clamped to [1e-15, 1 - 1e-15].

    ``probs`` may be one probability vector or a batch (n, K); the result is a
    scalar or a length-n array accordingly.
    """
    p, y, single = _as_batch(probs, label)
    pt = np.clip(p[np.arange(len(y)), y], P_CLAMP, 1 - P_CLAMP)
    out = -_alpha_t(alpha, y, p.shape[1]) * (1 - pt) ** gamma * np.log(pt)
    return float(out[0]) if single else out


def focal_grad_hess(scores, label, gamma: float = 2.0, alpha=None, *, floor: bool = True):
    """Analytic gradient and diagonal hessian of the focal loss w.r.t. the margins.

    Writing ``u(p) = alpha * (gamma (1-p)^(gamma-1) p ln p - (1-p)^gamma)`` for
    the true-class probability ``p``, the gradient is ``u(p) (1[k=y] - p_k)``
    and the diagonal hessian is ``u'(p) p (1[k=y] - p_k)^2 - u(p) p_k (1 - p_k)``.
    """
    s = np.asarray(scores, dtype=np.float64)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    n, k = s.shape
    y = np.broadcast_to(np.asarray(label, dtype=np.int64), (n,))
    p = softmax(s)
    a = _alpha_t(alpha, y, k)[:, None]
    pt = np.clip(p[np.arange(n), y], P_CLAMP, 1 - P_CLAMP)[:, None]
    q = 1 - pt
    logp = np.log(pt)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), y] = 1.0
    delta = onehot - p
    if gamma == 0:
        u = -np.ones_like(pt)
        du = np.zeros_like(pt)
    else:
        u = gamma * q ** (gamma - 1) * pt * logp - q**gamma
        # (1-p)^(gamma-2) * p ln p is finite as p -> 1 because p ln p ~ (p - 1)
        du = gamma * (q ** (gamma - 1) * (logp + 2) - (gamma - 1) * q ** (gamma - 2) * pt * logp)
    u = a * u
    du = a * du
    grad = u * delta
    hess = du * pt * delta**2 - u * p * (1 - p)
    if floor:
        hess = np.maximum(hess, HESS_FLOOR)
    if single:
        return grad[0], hess[0]
    return grad, hess


def cross_entropy_grad_hess(scores, label):
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    n = s.shape[0]
    y = np.broadcast_to(np.asarray(label, dtype=np.int64), (n,))
    p = softmax(s)
    g = p.copy()
    g[np.arange(n), y] -= 1.0
    h = np.maximum(p * (1 - p), HESS_FLOOR)
    if np.ndim(scores) == 1:
        return g[0], h[0]
    return g, h


class FocalObjective:
    """Multi-class softmax focal loss; ``gamma=0`` is plain cross-entropy."""

    name = "focal"

    def __init__(self, gamma: float = 2.0, alpha=None):
        if gamma < 0:
            raise ValueError("gamma must be >= 0")
        self.gamma = float(gamma)
        self.alpha = None if alpha is None else [float(a) for a in np.atleast_1d(alpha)]

    def loss(self, scores, labels):
        return focal_loss(softmax(scores), labels, self.gamma, self.alpha)

    def grad_hess(self, scores, labels):
        s = np.asarray(scores, dtype=np.float64)
        if s.ndim != 2:
            return focal_grad_hess(s, labels, self.gamma, self.alpha)
        y = np.ascontiguousarray(np.broadcast_to(np.asarray(labels, dtype=np.int64), (s.shape[0],)))
        a = _alpha_t(self.alpha, y, s.shape[1])
        return _kernels.focal_grad_hess(np.ascontiguousarray(s), y, self.gamma, a, P_CLAMP, HESS_FLOOR)

    def to_dict(self) -> dict:
        return {"name": self.name, "gamma": self.gamma, "alpha": self.alpha}


class CrossEntropyObjective:
    name = "cross_entropy"

    def loss(self, scores, labels):
        return focal_loss(softmax(scores), labels, 0.0)

    def grad_hess(self, scores, labels):
        return cross_entropy_grad_hess(scores, labels)

    def to_dict(self) -> dict:
        return {"name": self.name}


def objective_from_dict(d: dict):
    if d["name"] == "focal":
        return FocalObjective(d["gamma"], d.get("alpha"))
    if d["name"] == "cross_entropy":
        return CrossEntropyObjective()
    raise ValueError(f"unknown objective {d['name']!r}")
