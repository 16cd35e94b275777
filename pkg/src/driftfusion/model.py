"""Two-modality online learner: linear scorers, weighted late fusion, SGD."""

from __future__ import annotations

import copy
from dataclasses import dataclass, replace

import numpy as np

from .core import Batch, FusionWeight, Sample, as_batch, sigmoid

__all__ = [
    "ModelState",
    "modality_logit",
    "fused_prediction",
    "predict",
    "bce_loss",
    "batch_loss",
    "gradients",
    "sgd_step",
    "unimodal_error_estimates",
    "unimodal_error_counts",
]

PROB_EPS = 1e-12
FUSION_LEVELS = ("logit", "probability")


@dataclass
class ModelState:
    """Per-modality linear weights, fusion weight and current learning rate.

    ``fusion_level="logit"`` fuses scores as z = a*z1 + (1-a)*z2 (the form the
    stability analysis uses); ``"probability"`` mixes the per-modality
    probabilities instead.
    """

    w1: np.ndarray
    b1: float
    w2: np.ndarray
    b2: float
    fusion: FusionWeight
    eta: float
    fusion_level: str = "logit"

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b1 = float(self.b1)
        self.b2 = float(self.b2)
        if self.fusion_level not in FUSION_LEVELS:
            raise ValueError(f"fusion_level must be one of {FUSION_LEVELS}, got {self.fusion_level!r}")

    @classmethod
    def zeros(cls, d1: int, d2: int, fusion: FusionWeight, eta: float, fusion_level: str = "logit"):
        return cls(np.zeros(d1), 0.0, np.zeros(d2), 0.0, fusion, eta, fusion_level)

    @property
    def alpha(self) -> float:
        return self.fusion.effective

    @property
    def dims(self) -> tuple[int, int]:
        return self.w1.shape[0], self.w2.shape[0]

    def clone(self) -> "ModelState":
        return copy.deepcopy(self)

    def params(self) -> np.ndarray:
        """Flat parameter vector [w1, b1, w2, b2]."""
        return np.concatenate([self.w1, [self.b1], self.w2, [self.b2]])

    def with_params(self, theta: np.ndarray) -> "ModelState":
        d1, d2 = self.dims
        theta = np.asarray(theta, dtype=float)
        return replace(
            self,
            w1=theta[:d1].copy(),
            b1=float(theta[d1]),
            w2=theta[d1 + 1 : d1 + 1 + d2].copy(),
            b2=float(theta[d1 + 1 + d2]),
        )


def _features(data, m: int) -> np.ndarray:
    if m == 1:
        return data.x1
    if m == 2:
        return data.x2
    raise ValueError(f"modality index must be 1 or 2, got {m}")


def modality_logit(state: ModelState, data, m: int):
    """Score ``w_m . x_m + b_m``: a float for a Sample, an array for a Batch."""
    if m not in (1, 2):
        raise ValueError(f"modality index must be 1 or 2, got {m}")
    w, b = (state.w1, state.b1) if m == 1 else (state.w2, state.b2)
    x = np.asarray(_features(data, m), dtype=float)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"modality {m} expects dimension {w.shape[0]}, got {x.shape[-1]}")
    z = x @ w + b
    if isinstance(data, Sample):
        return float(z)
    return z


def _fuse(state: ModelState, z1, z2):
    a = state.alpha
    if state.fusion_level == "logit":
        z = a * z1 + (1.0 - a) * z2
        return z, sigmoid(z)
    p = a * sigmoid(z1) + (1.0 - a) * sigmoid(z2)
    pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return np.log(pc) - np.log1p(-pc), p


def fused_prediction(state: ModelState, data):
    """Return ``(z_fused, p)`` for a Sample (floats) or a Batch (arrays)."""
    if not 0.0 <= state.alpha <= 1.0:
        raise ValueError(f"fusion weight outside [0, 1]: {state.alpha}")
    z1 = modality_logit(state, data, 1)
    z2 = modality_logit(state, data, 2)
    z, p = _fuse(state, z1, z2)
    if isinstance(data, Sample):
        return float(z), float(p)
    return z, p


def predict(state: ModelState, data) -> np.ndarray:
    """Hard labels; probability exactly 0.5 counts as class 1."""
    _, p = fused_prediction(state, as_batch(data))
    return (p >= 0.5).astype(np.int64)


def bce_loss(p, y, eps: float = PROB_EPS):
    """Binary cross-entropy of probability ``p`` against label ``y``.

    ``p`` is clipped into [eps, 1 - eps] first; values outside [0, 1] or NaN
    are rejected.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p_arr)) or np.any(p_arr < 0.0) or np.any(p_arr > 1.0):
        raise ValueError(f"probability outside [0, 1]: {p}")
    pc = np.clip(p_arr, eps, 1.0 - eps)
    y_arr = np.asarray(y, dtype=float)
    loss = -(y_arr * np.log(pc) + (1.0 - y_arr) * np.log1p(-pc))
    if loss.ndim == 0:
        return float(loss)
    return loss


def _softplus(z):
    return np.logaddexp(0.0, z)


def batch_loss(state: ModelState, data) -> float:
    """Mean BCE over a batch through the fused output."""
    batch = as_batch(data)
    y = batch.y.astype(float)
    if state.fusion_level == "logit":
        z, _ = fused_prediction(state, batch)
        # log-sigmoid form: exact for large |z|, no clipping needed
        return float(np.mean(_softplus(z) - y * z))
    _, p = fused_prediction(state, batch)
    return float(np.mean(bce_loss(p, y)))


def gradients(state: ModelState, data) -> dict[str, np.ndarray | float]:
    """Analytic gradient of the batch-mean BCE w.r.t. w1, b1, w2, b2.

    The fusion weight is treated as a constant; only the controller moves it.
    """
    batch = as_batch(data)
    n = len(batch)
    y = batch.y.astype(float)
    a = state.alpha
    z1 = modality_logit(state, batch, 1)
    z2 = modality_logit(state, batch, 2)
    if state.fusion_level == "logit":
        p = sigmoid(a * z1 + (1.0 - a) * z2)
        r = p - y
        g1 = a * r
        g2 = (1.0 - a) * r
    else:
        p1, p2 = sigmoid(z1), sigmoid(z2)
        p = a * p1 + (1.0 - a) * p2
        pc = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
        dldp = (pc - y) / (pc * (1.0 - pc))
        g1 = dldp * a * p1 * (1.0 - p1)
        g2 = dldp * (1.0 - a) * p2 * (1.0 - p2)
    grads = {
        "w1": batch.x1.T @ g1 / n,
        "b1": float(np.sum(g1) / n),
        "w2": batch.x2.T @ g2 / n,
        "b2": float(np.sum(g2) / n),
    }
    return grads


def sgd_step(state: ModelState, data) -> ModelState:
    """One gradient step at the state's learning rate; returns a new state."""
    if not state.eta >= 0.0:
        raise ValueError(f"learning rate must be nonnegative, got {state.eta}")
    g = gradients(state, data)
    flat = np.concatenate([g["w1"], [g["b1"]], g["w2"], [g["b2"]]])
    if not np.all(np.isfinite(flat)):
        raise FloatingPointError("non-finite gradient")
    new = state.with_params(state.params() - state.eta * flat)
    if not np.all(np.isfinite(new.params())):
        raise FloatingPointError("non-finite weights after update")
    return new


def unimodal_error_counts(state: ModelState, data) -> tuple[int, int, int]:
    """Misclassification counts of each modality alone, plus the sample count."""
    batch = as_batch(data)
    y = batch.y
    wrong1 = int(np.sum((modality_logit(state, batch, 1) >= 0.0).astype(np.int64) != y))
    wrong2 = int(np.sum((modality_logit(state, batch, 2) >= 0.0).astype(np.int64) != y))
    return wrong1, wrong2, len(batch)


def unimodal_error_estimates(state: ModelState, window) -> tuple[float, float]:
    """Error rates of the "imagined" single-modality predictions sign(z_m)."""
    window = list(window) if not isinstance(window, Batch) else window
    if len(window) == 0:
        raise ValueError("empty window")
    w1, w2, n = unimodal_error_counts(state, window)
    return w1 / n, w2 / n
