"""Drift-signal estimation and the learning-rate / fusion-weight actuators."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Action, ControllerConfig, FusionWeight

__all__ = [
    "Suspect",
    "ControllerState",
    "ControllerOutput",
    "estimate_drift_signal",
    "adapt_learning_rate",
    "adapt_learning_rate_incremental",
    "adapt_fusion_analytic",
    "adapt_fusion_sigmoid",
    "suspect_modality",
    "controller_step",
    "simulate_fusion_analytic",
    "first_hit_time",
    "boundary_step_bound",
]


BOUNDARY_SNAP = 1e-9


class Suspect(enum.IntEnum):
    NONE = 0
    MODALITY1 = 1
    MODALITY2 = 2


@dataclass
class ControllerState:
    """Accuracy history plus the per-step unimodal error counts.

    Both FIFOs hold one entry per step. ``acc_history`` may be longer than
    ``w_drift`` but only its newest ``w_drift`` entries feed the drift signal.
    """

    config: ControllerConfig
    capacity: Optional[int] = None
    eta_base: Optional[float] = None
    acc_history: deque = field(init=False)
    unimodal: deque = field(init=False)
    last_error: Optional[float] = None
    steps: int = 0

    def __post_init__(self):
        cap = self.config.w_drift if self.capacity is None else int(self.capacity)
        if cap < self.config.w_drift:
            raise ValueError(f"history capacity {cap} is smaller than w_drift={self.config.w_drift}")
        self.capacity = cap
        self.acc_history = deque(maxlen=cap)
        self.unimodal = deque(maxlen=self.config.w_drift)

    def push_accuracy(self, acc: float) -> None:
        self.acc_history.append(float(acc))

    def push_unimodal(self, wrong1: int, wrong2: int, n: int) -> None:
        self.unimodal.append((int(wrong1), int(wrong2), int(n)))

    def unimodal_errors(self) -> Optional[tuple[float, float]]:
        """Pooled unimodal error rates over the last ``w_drift`` steps, once full."""
        if len(self.unimodal) < self.config.w_drift:
            return None
        arr = np.asarray(self.unimodal, dtype=float)
        n = arr[:, 2].sum()
        return float(arr[:, 0].sum() / n), float(arr[:, 1].sum() / n)


@dataclass(frozen=True)
class ControllerOutput:
    drift_signal: float
    eta: float
    fusion: FusionWeight
    actions: tuple[Action, ...]
    cost: float
    suspected: Suspect


def estimate_drift_signal(state: ControllerState) -> float:
    """Normalized recent-vs-past accuracy drop over the last ``w_drift`` steps."""
    cfg = state.config
    hist = state.acc_history
    if len(hist) < cfg.w_drift:
        return 0.0
    window = list(hist)[-cfg.w_drift :]
    n_recent = math.floor(cfg.w_drift * cfg.r_comp)
    acc_recent = float(np.mean(window[-n_recent:]))
    acc_past = float(np.mean(window[:-n_recent]))
    drop = acc_past - acc_recent
    if drop > cfg.tau_drop:
        if acc_past == 0.0:
            return 1.0
        return drop / acc_past
    return 0.0


def _clamp_eta(eta: float, cfg: ControllerConfig) -> float:
    return max(cfg.eta_min, min(eta, cfg.eta_max))


def adapt_learning_rate(eta_prev: float, s_drift: float, config: ControllerConfig) -> float:
    if s_drift > config.theta_high:
        cand = eta_prev * config.k_lr
    elif s_drift > config.theta_mod:
        cand = eta_prev / config.k_lr
    else:
        cand = eta_prev
    return _clamp_eta(cand, config)


def adapt_learning_rate_incremental(
    eta_prev: float, error: float, last_error: Optional[float], eta_base: float, config: ControllerConfig
) -> float:
    """Raise eta by ``k_eta`` times any error increase, else relax toward ``eta_base``."""
    if last_error is not None and error > last_error:
        cand = eta_prev + config.k_eta * (error - last_error)
    else:
        cand = eta_prev + config.eta_relax * (eta_base - eta_prev)
    return _clamp_eta(cand, config)


def adapt_fusion_analytic(alpha: float, e1_est: float, e2_est: float, k_alpha: float) -> float:
    """alpha + k_alpha * (e2 - e1), projected onto [0, 1].

    Values within ``BOUNDARY_SNAP`` of an end are snapped onto it, so the
    rounding residue of repeated equal steps cannot delay reaching the boundary.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha outside [0, 1]: {alpha}")
    a = alpha + k_alpha * (e2_est - e1_est)
    if a <= BOUNDARY_SNAP:
        return 0.0
    if a >= 1.0 - BOUNDARY_SNAP:
        return 1.0
    return a


def adapt_fusion_sigmoid(alpha_raw: float, s_drift: float, suspected: Suspect, config: ControllerConfig) -> float:
    """Fixed-size step on the raw fusion logit while drift is at least moderate."""
    if s_drift > config.theta_mod:
        if suspected == Suspect.MODALITY1:
            return alpha_raw - config.alpha_step
        if suspected == Suspect.MODALITY2:
            return alpha_raw + config.alpha_step
    return alpha_raw


def suspect_modality(e1_est: float, e2_est: float, margin: float) -> Suspect:
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    if e1_est > e2_est + margin:
        return Suspect.MODALITY1
    if e2_est > e1_est + margin:
        return Suspect.MODALITY2
    return Suspect.NONE


def controller_step(
    state: ControllerState,
    eta: float,
    fusion: FusionWeight,
    e1_est: Optional[float],
    e2_est: Optional[float],
    error: Optional[float] = None,
    suspected: Optional[Suspect] = None,
) -> ControllerOutput:
    """One controller decision from the current history.

    ``e1_est``/``e2_est`` may be None while the unimodal window warms up; no
    fusion update happens then. ``suspected`` overrides the estimate-based
    indicator (oracle mode for isolating the controller in tests).
    """
    cfg = state.config
    s = estimate_drift_signal(state)

    if cfg.lr_mode == "alg2":
        eta_new = adapt_learning_rate(eta, s, cfg)
    else:
        if error is None:
            raise ValueError("incremental LR mode needs the current error signal")
        base = state.eta_base if state.eta_base is not None else eta
        eta_new = adapt_learning_rate_incremental(eta, error, state.last_error, base, cfg)

    have_estimates = e1_est is not None and e2_est is not None
    if suspected is None:
        suspected = suspect_modality(e1_est, e2_est, cfg.suspicion_margin) if have_estimates else Suspect.NONE

    fusion_new = fusion
    if state.steps % cfg.alpha_period == 0:
        if fusion.mode == "analytic":
            # Dead zone: act only when one modality is suspected.
            if have_estimates and suspected != Suspect.NONE:
                fusion_new = FusionWeight.analytic(
                    adapt_fusion_analytic(fusion.effective, e1_est, e2_est, cfg.k_alpha)
                )
        else:
            raw = adapt_fusion_sigmoid(fusion.raw, s, suspected, cfg)
            if raw != fusion.raw:
                fusion_new = FusionWeight.from_raw(raw)

    actions = []
    if eta_new > eta:
        actions.append(Action.LR_UP)
    elif eta_new < eta:
        actions.append(Action.LR_DOWN)
    if fusion_new.effective > fusion.effective:
        actions.append(Action.ALPHA_SHIFT_M1)
    elif fusion_new.effective < fusion.effective:
        actions.append(Action.ALPHA_SHIFT_M2)
    cost = sum(cfg.cost_of(a) for a in actions) if actions else cfg.cost_of(Action.NONE)

    if error is not None:
        state.last_error = float(error)
    state.steps += 1
    return ControllerOutput(s, eta_new, fusion_new, tuple(actions), float(cost), suspected)


# --------------------------------------------------------------------------
# Closed-form fusion dynamics (used by the verification suite)
# --------------------------------------------------------------------------

def simulate_fusion_analytic(alpha0: float, k_alpha: float, e1: Sequence[float], e2: Sequence[float]) -> np.ndarray:
    """Trace [alpha_0, alpha_1, ...] of the projected update under given estimates."""
    e1, e2 = np.broadcast_arrays(np.asarray(e1, float), np.asarray(e2, float))
    if e1.ndim != 1:
        raise ValueError("error estimate sequences must be one-dimensional")
    out = np.empty(e1.shape[0] + 1)
    out[0] = alpha0
    a = alpha0
    for i in range(e1.shape[0]):
        a = adapt_fusion_analytic(a, e1[i], e2[i], k_alpha)
        out[i + 1] = a
    return out


def first_hit_time(trace: Sequence[float], level: float = 0.0) -> Optional[int]:
    """Index of the first entry ``<= level``, or None."""
    idx = np.flatnonzero(np.asarray(trace) <= level)
    return int(idx[0]) if idx.size else None


def boundary_step_bound(alpha0: float, k_alpha: float, delta_gap: float) -> int:
    """Upper bound ceil(alpha0 / (k_alpha * delta_gap)) on steps to reach alpha = 0."""
    if not k_alpha * delta_gap > 0:
        raise ValueError("k_alpha * delta_gap must be positive")
    return math.ceil(alpha0 / (k_alpha * delta_gap))
