"""Per-example losses for linear models with certified smoothness constants.

Every loss has the form ``phi(<w, x>, y) + (l2/2) ||w||^2``. The constants
returned by :func:`certify_constants` are uniform over the dataset, which is
what the stability and convergence bounds assume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .data import Dataset, Sample

KINDS = {
    "logistic": K.LOGISTIC,
    "least_squares": K.LEAST_SQUARES,
    "smoothed_hinge": K.SMOOTHED_HINGE,
    "huber": K.HUBER,
}


@dataclass(frozen=True)
class LossModel:
    kind: str
    smoothness_alpha: float
    strong_convexity_mu: float = 0.0
    l2_coefficient: float = 0.0
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.l2_coefficient < 0 or self.strong_convexity_mu < 0:
            raise ValueError("l2 and mu must be nonnegative")
        if self.smoothness_alpha < self.strong_convexity_mu:
            raise ValueError("alpha must be >= mu")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def alpha(self) -> float:
        return self.smoothness_alpha

    @property
    def mu(self) -> float:
        return self.strong_convexity_mu

    @property
    def l2(self) -> float:
        return self.l2_coefficient

    @property
    def code(self) -> int:
        return KINDS[self.kind]

    def kernel_args(self):
        return self.code, float(self.delta), float(self.l2)


def certify_constants(kind: str, data: Dataset, l2: float = 0.0,
                      delta: float = 1.0) -> tuple[float, float]:
    """Uniform smoothness ``alpha`` and strong convexity ``mu`` over ``data``.

    logistic: ``max ||x||^2 / 4``; least squares: ``max ||x||^2``; smoothed
    hinge: ``max ||x||^2 / delta``; Huber: ``max ||x||^2 * max(1, 1/delta)``.
    Classification kinds scale by ``y^2`` (1 for +-1 labels). ``mu = l2``.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if kind not in KINDS:
        raise ValueError(f"unknown loss kind {kind!r}")
    norms = data.row_norms_sq()
    if kind in ("logistic", "smoothed_hinge"):
        norms = norms * data.labels ** 2
    top = float(norms.max())
    curvature = {
        "logistic": 0.25,
        "least_squares": 1.0,
        "smoothed_hinge": 1.0 / delta,
        "huber": max(1.0, 1.0 / delta),
    }[kind]
    return l2 + curvature * top, float(l2)


def make_model(kind: str, data: Dataset, l2: float = 0.0, delta: float = 1.0) -> LossModel:
    alpha, mu = certify_constants(kind, data, l2, delta)
    return LossModel(kind, alpha, mu, l2, delta)


def _check_dim(w: np.ndarray, z: Sample):
    if w.ndim != 1 or w.shape[0] < z.max_index:
        raise ValueError(f"weights of length {w.shape[0]} cannot score feature {z.max_index}")


def _predict(w: np.ndarray, z: Sample) -> float:
    return float(np.dot(z.values, w[z.indices - 1]))


def loss_value(model: LossModel, w, z: Sample) -> float:
    w = np.asarray(w, dtype=np.float64)
    _check_dim(w, z)
    v = K.link_value(model.code, _predict(w, z), z.label, model.delta)
    if model.l2 > 0:
        v += 0.5 * model.l2 * float(w @ w)
    return v


def loss_gradient(model: LossModel, w, z: Sample) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    _check_dim(w, z)
    s = K.link_deriv(model.code, _predict(w, z), z.label, model.delta)
    g = model.l2 * w if model.l2 > 0 else np.zeros_like(w)
    g[z.indices - 1] += s * z.values
    return g


def _check_data(w: np.ndarray, data: Dataset):
    if len(data) == 0:
        raise ValueError("empty dataset")
    if w.ndim != 1 or w.shape[0] < data.dimension:
        raise ValueError(f"weights of length {w.shape[0]} vs data dimension {data.dimension}")


def empirical_risk(model: LossModel, w, data: Dataset) -> float:
    """Mean per-example loss, compensated summation in sample order."""
    w = np.ascontiguousarray(w, dtype=np.float64)
    _check_data(w, data)
    return float(K.empirical_risk(data.indptr, data.indices, data.data, data.labels,
                                  *model.kernel_args(), w))


def empirical_gradient(model: LossModel, w, data: Dataset) -> np.ndarray:
    w = np.ascontiguousarray(w, dtype=np.float64)
    _check_data(w, data)
    out = np.zeros(w.shape[0])
    n = len(data)
    K.full_gradient(data.indptr, data.indices, data.data, data.labels,
                    *model.kernel_args(), w, out, np.zeros(n), np.zeros(n))
    return out


def minimize_full_gradient(model: LossModel, data: Dataset, w0=None, tol: float = 1e-10,
                           max_iter: int = 1_000_000, step: float | None = None):
    """Deterministic gradient descent to ``||grad L_S|| <= tol``.

    Returns ``(w_S, grad_norm, iterations)``. Raises ``RuntimeError`` when the
    iteration cap is hit first.
    """
    d = data.dimension
    w0 = np.zeros(d) if w0 is None else np.ascontiguousarray(w0, dtype=np.float64)
    step = 1.0 / model.alpha if step is None else step
    w, gn, it = K.gd_kernel(data.indptr, data.indices, data.data, data.labels,
                            *model.kernel_args(), w0, step, tol, max_iter)
    if not gn <= tol:
        raise RuntimeError(f"gradient descent oracle stalled at ||grad||={gn:.3e} after {it} steps")
    return w, gn, it


def self_bounding_gap(model: LossModel, w, z: Sample) -> float:
    """``2 alpha l(w;z) - ||grad l(w;z)||^2``; nonnegative for smooth nonnegative losses."""
    g = loss_gradient(model, w, z)
    return 2.0 * model.alpha * loss_value(model, w, z) - float(g @ g)


def coercivity_gap(model: LossModel, w, w_prime, z: Sample) -> float:
    """``<w - w', g - g'> - ||g - g'||^2 / alpha``; nonnegative for convex smooth losses."""
    w = np.asarray(w, dtype=np.float64)
    w_prime = np.asarray(w_prime, dtype=np.float64)
    dg = loss_gradient(model, w, z) - loss_gradient(model, w_prime, z)
    return float((w - w_prime) @ dg) - float(dg @ dg) / model.alpha


def convexity_gap(model: LossModel, w, w_prime, z: Sample) -> float:
    """``l(w) - l(w') - <w - w', grad l(w')> - (mu/2)||w - w'||^2``."""
    w = np.asarray(w, dtype=np.float64)
    w_prime = np.asarray(w_prime, dtype=np.float64)
    diff = w - w_prime
    return (loss_value(model, w, z) - loss_value(model, w_prime, z)
            - float(diff @ loss_gradient(model, w_prime, z))
            - 0.5 * model.mu * float(diff @ diff))


__all__ = [
    "KINDS", "LossModel", "certify_constants", "make_model", "loss_value", "loss_gradient",
    "empirical_risk", "empirical_gradient", "minimize_full_gradient", "self_bounding_gap",
    "coercivity_gap", "convexity_gap",
]
