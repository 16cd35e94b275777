"""Runtime-checkable stability diagnostics.

The scalar reference model ``e' = (1 - eta*lam) e + delta`` is the one place
the increment bound's constants are known, so the inequality checks run on
it. For the full learner only V and its increments are logged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .core import LyapunovParams, StepRecord

__all__ = [
    "ScalarRefState",
    "scalar_step",
    "simulate_scalar",
    "delta_V_exact",
    "delta_V_direct",
    "increment_bound",
    "negativity_threshold",
    "worst_case_delta_V",
    "UUBResult",
    "detect_uub",
    "check_stationary_convergence",
    "drift_free_steps",
    "ols_slope",
    "random_walk_slope_se",
    "pre_boundary_segment",
    "flag_delta_v_excursions",
]


@dataclass(frozen=True)
class ScalarRefState:
    """Error ``e`` about to be hit by disturbance ``delta`` at learning rate ``eta``."""

    e: float
    eta: float
    lam: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0.0 < self.eta * self.lam < 1.0:
            raise ValueError(f"need 0 < eta*lam < 1, got {self.eta * self.lam}")


def scalar_step(state: ScalarRefState, next_delta: Optional[float] = None) -> ScalarRefState:
    e_next = (1.0 - state.eta * state.lam) * state.e + state.delta
    return replace(state, e=e_next, delta=state.delta if next_delta is None else next_delta)


def simulate_scalar(e0: float, eta: float, lam: float, deltas: Sequence[float]) -> np.ndarray:
    """Error trace ``[e_0, ..., e_n]`` driven by ``deltas`` (length n)."""
    ScalarRefState(e0, eta, lam)  # validates the contraction regime
    c = 1.0 - eta * lam
    deltas = np.asarray(deltas, dtype=float)
    out = np.empty(deltas.shape[0] + 1)
    out[0] = e = e0
    for i, d in enumerate(deltas):
        e = c * e + d
        out[i + 1] = e
    return out


def delta_V_exact(state: ScalarRefState) -> float:
    """Closed-form one-step increment of V = e^2 / 2."""
    el = state.eta * state.lam
    e, d = state.e, state.delta
    return 0.5 * (-2.0 * el + el * el) * e * e + (1.0 - el) * e * d + 0.5 * d * d


def delta_V_direct(state: ScalarRefState) -> float:
    e_next = scalar_step(state).e
    return 0.5 * (e_next * e_next - state.e * state.e)


def increment_bound(
    e: float,
    eta: float,
    delta_norm: float,
    params: LyapunovParams,
    delta_alpha_norm: float = 0.0,
    alpha: float = 0.0,
) -> float:
    """-g1*eta*e^2 + g2*eta*|e|*|d| + g3*eta^2*(G + |d|^2) + c_alpha*|d_alpha|.

    ``G`` comes from ``params.G_bound(e, alpha)``; without one the term is 0.
    """
    G = params.G_bound(e, alpha) if params.G_bound is not None else 0.0
    return (
        -params.gamma1 * eta * e * e
        + params.gamma2 * eta * abs(e) * delta_norm
        + params.gamma3 * eta * eta * (G + delta_norm * delta_norm)
        + params.c_alpha * delta_alpha_norm
    )


def negativity_threshold(e: float, eta: float, lam: float, delta_max: float) -> float:
    """delta_max/(eta*lam) + delta_max^2/(2*eta*lam*|e|): above it V must decrease."""
    el = eta * lam
    return delta_max / el + delta_max * delta_max / (2.0 * el * abs(e))


def worst_case_delta_V(e: float, eta: float, lam: float, delta_max: float) -> float:
    """max of the exact increment over |delta| <= delta_max (attained at an endpoint)."""
    d = math.copysign(delta_max, e) if e != 0 else delta_max
    return delta_V_exact(ScalarRefState(e, eta, lam, d))


class UUBResult(NamedTuple):
    bound: float
    entered_at: Optional[int]


def detect_uub(trace: Sequence[float], burn_in: int, tail_fraction: float = 0.1, growth_tol: float = 0.25) -> UUBResult:
    """Empirical ultimate bound of an error trace.

    The candidate bound is the suffix maximum of |e| from ``burn_in`` on;
    ``entered_at`` is the first step from which |e| never exceeds it again.
    If the trailing ``tail_fraction`` of the trace peaks more than
    ``growth_tol`` above everything before it, boundedness is not yet
    demonstrated and ``entered_at`` is None.
    """
    a = np.abs(np.asarray(trace, dtype=float))
    if burn_in < 0 or a.shape[0] <= burn_in + 1:
        raise ValueError(f"trace of length {a.shape[0]} too short for burn_in={burn_in}")
    suffix_max = np.maximum.accumulate(a[::-1])[::-1]
    bound = float(suffix_max[burn_in])
    entered_at = int(np.argmax(suffix_max <= bound))

    n_tail = max(1, int(math.ceil(tail_fraction * (a.shape[0] - burn_in))))
    head = a[burn_in : a.shape[0] - n_tail]
    if head.size and a[-n_tail:].max() > (1.0 + growth_tol) * head.max():
        return UUBResult(bound, None)
    return UUBResult(bound, entered_at)


def check_stationary_convergence(trace: Sequence[float], threshold: float, horizon: int) -> bool:
    a = np.abs(np.asarray(trace, dtype=float))
    if horizon < 1 or a.shape[0] < horizon:
        return False
    return bool(np.all(a[-horizon:] < threshold))


def drift_free_steps(e0: float, eta: float, lam: float, threshold: float = 1e-3) -> int:
    """Steps for a drift-free scalar run to fall below ``threshold``."""
    if abs(e0) < threshold:
        return 0
    return math.ceil(math.log(threshold / abs(e0)) / math.log(1.0 - eta * lam))


def ols_slope(y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``y`` against its index, with the i.i.d.-residual standard error."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 3:
        raise ValueError("need at least three points")
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ (y - y.mean()) / sxx)
    resid = y - y.mean() - slope * tc
    se = math.sqrt(float(resid @ resid) / (n - 2) / sxx)
    return slope, se


def random_walk_slope_se(n: int, step_sd: float) -> float:
    """Exact sd of the OLS slope fitted to ``n`` points of a random walk.

    With y_t = y_0 + sum_{s<t} xi_s and Var(xi) = step_sd^2 the slope is
    sum_s xi_s * C_s with C_s = sum_{t>s} c_t, c_t the OLS weights.
    """
    t = np.arange(n, dtype=float)
    c = (t - t.mean()) / float(((t - t.mean()) ** 2).sum())
    tail = np.cumsum(c[::-1])[::-1][1:]  # C_s for s = 0..n-2
    return step_sd * math.sqrt(float(tail @ tail))


def pre_boundary_segment(trace: Sequence[float], level: float = 0.0) -> np.ndarray:
    """Prefix of ``trace`` before it first reaches ``level``."""
    a = np.asarray(trace, dtype=float)
    hit = np.flatnonzero(a <= level)
    return a[: hit[0]] if hit.size else a


def flag_delta_v_excursions(records: Iterable[StepRecord], threshold: float = 0.05) -> list[int]:
    """Steps whose logged V increment exceeds ``threshold``."""
    return [r.t for r in records if r.delta_V > threshold]
