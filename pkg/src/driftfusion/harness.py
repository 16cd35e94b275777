"""Two-phase experiment protocol: stable pre-training, then adaptation under drift."""

from __future__ import annotations

import csv
import io
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .controller import ControllerState, Suspect, controller_step
from .core import (
    CSV_COLUMNS,
    Action,
    ConfigError,
    ControllerConfig,
    FusionWeight,
    StepRecord,
    format_actions,
)
from .lyapunov import flag_delta_v_excursions
from .model import (
    FUSION_LEVELS,
    ModelState,
    batch_loss,
    fused_prediction,
    sgd_step,
    unimodal_error_counts,
)
from .stream import Stream, StreamConfig, build_schedule

__all__ = [
    "HarnessConfig",
    "Phase1Result",
    "MetricsSummary",
    "ExperimentResult",
    "run_phase1",
    "run_phase2",
    "compute_metrics",
    "f1_score",
    "write_csv",
    "read_csv",
    "csv_text",
    "fit_logistic",
    "unimodal_oracle_error",
    "run_experiment",
    "run_sweep",
]

MODES = ("adaptive", "static_baseline")


@dataclass(frozen=True)
class HarnessConfig:
    phase1_steps: int = 1000
    phase2_steps: int = 3000
    batch_size: int = 16
    eta0: float = 5e-4
    alpha0: float = 0.5
    seed: int = 0
    error_window: int = 50
    report_window: int = 200
    prime_history: bool = False
    label_delay: int = 0
    fusion_level: str = "logit"
    dv_spike: float = 0.05
    stream: StreamConfig = field(default_factory=StreamConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        for name in ("phase1_steps", "phase2_steps", "batch_size", "error_window", "report_window"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ConfigError(name, f"must be a positive integer, got {getattr(self, name)}")
        c = self.controller
        if not c.eta_min <= self.eta0 <= c.eta_max:
            raise ConfigError("eta0", f"must lie in [eta_min, eta_max] = [{c.eta_min}, {c.eta_max}], got {self.eta0}")
        if not 0.0 <= self.alpha0 <= 1.0:
            raise ConfigError("alpha0", f"must lie in [0, 1], got {self.alpha0}")
        if c.alpha_mode == "sigmoid" and not 0.0 < self.alpha0 < 1.0:
            raise ConfigError("alpha0", "sigmoid mode needs alpha0 strictly inside (0, 1)")
        if self.label_delay < 0:
            raise ConfigError("label_delay", f"must be nonnegative, got {self.label_delay}")
        if self.fusion_level not in FUSION_LEVELS:
            raise ConfigError("fusion_level", f"expected one of {FUSION_LEVELS}, got {self.fusion_level!r}")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("stream", "controller")}
        return {"harness": out, "stream": self.stream.to_dict(), "controller": self.controller.to_dict()}


def _make_stream(config: HarnessConfig) -> Stream:
    return Stream(build_schedule(config.stream), config.seed)


def _initial_state(config: HarnessConfig, d1: int, d2: int) -> ModelState:
    fusion = FusionWeight.initial(config.controller.alpha_mode, config.alpha0)
    return ModelState.zeros(d1, d2, fusion, config.eta0, config.fusion_level)


def _accuracy(state: ModelState, batch) -> tuple[float, np.ndarray]:
    _, p = fused_prediction(state, batch)
    pred = (p >= 0.5).astype(np.int64)
    return float(np.mean(pred == batch.y)), pred


@dataclass
class Phase1Result:
    state: ModelState
    baseline: ModelState
    accuracies: list[float]
    losses: list[float]


def run_phase1(config: HarnessConfig, stream: Optional[Stream] = None) -> Phase1Result:
    """Train at fixed eta0 and fixed alpha0 on the stationary prefix, no controller."""
    stream = stream or _make_stream(config)
    if stream.schedule.stationary_until() < config.phase1_steps:
        raise ConfigError(
            "stream.drift_at",
            f"phase 1 needs {config.phase1_steps} stationary steps, drift starts at {stream.schedule.stationary_until()}",
        )
    state = _initial_state(config, stream.schedule.d1, stream.schedule.d2)
    accs, losses = [], []
    for t in range(config.phase1_steps):
        batch = stream.batch(t, config.batch_size)
        acc, _ = _accuracy(state, batch)
        accs.append(acc)
        losses.append(batch_loss(state, batch))
        state = sgd_step(state, batch)
    return Phase1Result(state, state.clone(), accs, losses)


def _confusion(pred: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    return tp, fp, fn, tn


def run_phase2(
    model: ModelState,
    config: HarnessConfig,
    mode: str = "adaptive",
    stream: Optional[Stream] = None,
    primed_accuracies: Sequence[float] = (),
) -> list[StepRecord]:
    """Run the drifting phase and return one record per step.

    Adaptive order per batch: forward, loss/accuracy, history push,
    controller, apply eta, gradient step (with the fusion weight used in the
    forward pass), then install the new fusion weight. The static baseline
    only evaluates.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    stream = stream or _make_stream(config)
    cfg = config.controller
    state = model.clone()
    ctrl = ControllerState(cfg, eta_base=config.eta0)
    if config.prime_history:
        for a in list(primed_accuracies)[-ctrl.capacity :]:
            ctrl.push_accuracy(a)

    acc_window: deque = deque(maxlen=config.error_window)
    records: list[StepRecord] = []
    e_prev: Optional[float] = None
    cum_cost = 0.0
    t0 = config.phase1_steps
    for k in range(config.phase2_steps):
        t = t0 + k
        batch = stream.batch(t, config.batch_size)
        acc, pred = _accuracy(state, batch)
        loss = batch_loss(state, batch)
        acc_window.append(acc)
        e_t = 1.0 - float(np.mean(acc_window))

        actions: tuple = ()
        cost = cfg.cost_of(Action.NONE)
        s_drift = 0.0
        if mode == "adaptive":
            if config.label_delay == 0:
                feedback = batch
            elif t - config.label_delay >= t0:
                feedback = stream.batch(t - config.label_delay, config.batch_size)
            else:
                feedback = None
            if feedback is not None:
                fb_acc = acc if feedback is batch else _accuracy(state, feedback)[0]
                ctrl.push_accuracy(fb_acc)
                ctrl.push_unimodal(*unimodal_error_counts(state, feedback))
            est = ctrl.unimodal_errors()
            e1, e2 = est if est is not None else (None, None)
            suspected = Suspect(stream.schedule.drifted_modality(t)) if cfg.oracle_indicators else None
            out = controller_step(ctrl, state.eta, state.fusion, e1, e2, error=e_t, suspected=suspected)
            s_drift, actions, cost = out.drift_signal, out.actions, out.cost
            state.eta = out.eta
            if feedback is not None:
                state = sgd_step(state, feedback)
            state.fusion = out.fusion

        cum_cost += cost
        v = 0.5 * e_t * e_t
        de = 0.0 if e_prev is None else e_t - e_prev
        dv = 0.0 if e_prev is None else v - 0.5 * e_prev * e_prev
        records.append(
            StepRecord(
                t=t, loss=loss, accuracy=acc, error_signal=e_t, delta_error=de,
                drift_signal=s_drift, eta=state.eta, alpha=state.alpha,
                action=format_actions(actions), cost=cost, cumulative_cost=cum_cost,
                V=v, delta_V=dv, **dict(zip(("tp", "fp", "fn", "tn"), _confusion(pred, batch.y))),
            )
        )
        e_prev = e_t
    return records


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

def f1_score(tp: int, fp: int, fn: int) -> float:
    """Positive-class F1; 0 when precision + recall is 0."""
    denom = 2 * tp + fp + fn
    return 0.0 if tp == 0 or denom == 0 else 2.0 * tp / denom


@dataclass(frozen=True)
class MetricsSummary:
    steps: int
    f1: float
    terminal_f1: float
    accuracy: float
    terminal_accuracy: float
    terminal_error: float
    loss: float
    terminal_loss: float
    cumulative_cost: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _pooled(records: Sequence[StepRecord]) -> tuple[float, float]:
    tp = sum(r.tp for r in records)
    fp = sum(r.fp for r in records)
    fn = sum(r.fn for r in records)
    tn = sum(r.tn for r in records)
    n = tp + fp + fn + tn
    return f1_score(tp, fp, fn), ((tp + tn) / n if n else float("nan"))


def compute_metrics(records: Sequence[StepRecord], window: int) -> MetricsSummary:
    """Whole-run and terminal-window metrics; F1/accuracy pool confusion counts."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    tail = records[-window:]
    f1, acc = _pooled(records)
    tf1, tacc = _pooled(tail)
    return MetricsSummary(
        steps=len(records),
        f1=f1,
        terminal_f1=tf1,
        accuracy=acc,
        terminal_accuracy=tacc,
        terminal_error=1.0 - tacc,
        loss=float(np.mean([r.loss for r in records])),
        terminal_loss=float(np.mean([r.loss for r in tail])),
        cumulative_cost=records[-1].cumulative_cost,
    )


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def csv_text(records: Iterable[StepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.to_row())
    return buf.getvalue()


def write_csv(records: Iterable[StepRecord], path) -> None:
    Path(path).write_text(csv_text(records), encoding="utf-8")


def read_csv(path) -> list[StepRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header in {path}: {reader.fieldnames}")
        return [StepRecord.from_row(row) for row in reader]


# --------------------------------------------------------------------------
# Single-modality oracle
# --------------------------------------------------------------------------

def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float = 1e-4, iters: int = 50) -> np.ndarray:
    """Regularized logistic regression by Newton's method; returns [w, b]."""
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    theta = np.zeros(Xb.shape[1])
    reg = l2 * np.eye(Xb.shape[1])
    reg[-1, -1] = 0.0
    for _ in range(iters):
        z = Xb @ theta
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        g = Xb.T @ (p - y) / len(y) + reg @ theta
        H = (Xb * (p * (1 - p))[:, None]).T @ Xb / len(y) + reg
        step = np.linalg.solve(H, g)
        theta -= step
        if np.max(np.abs(step)) < 1e-10:
            break
    return theta


def unimodal_oracle_error(
    config: HarnessConfig, modality: int, train_steps: Sequence[int], eval_steps: Sequence[int],
    stream: Optional[Stream] = None,
) -> float:
    """Error on ``eval_steps`` of a logistic model fitted to one modality over ``train_steps``."""
    stream = stream or _make_stream(config)
    attr = "x1" if modality == 1 else "x2"

    def stack(steps):
        bs = [stream.batch(t, config.batch_size) for t in steps]
        return np.vstack([getattr(b, attr) for b in bs]), np.concatenate([b.y for b in bs])

    X, y = stack(train_steps)
    theta = fit_logistic(X, y.astype(float))
    Xe, ye = stack(eval_steps)
    pred = (Xe @ theta[:-1] + theta[-1] >= 0.0).astype(np.int64)
    return float(np.mean(pred != ye))


# --------------------------------------------------------------------------
# Whole experiment
# --------------------------------------------------------------------------

@dataclass
class ExperimentResult:
    config: HarnessConfig
    phase1: Phase1Result
    adaptive: list[StepRecord]
    static: list[StepRecord]
    summary: dict


def run_experiment(config: HarnessConfig) -> ExperimentResult:
    stream = _make_stream(config)
    p1 = run_phase1(config, stream)
    adaptive = run_phase2(p1.state, config, "adaptive", stream, primed_accuracies=p1.accuracies)
    static = run_phase2(p1.baseline, config, "static_baseline", stream)
    w = config.report_window
    ma, ms = compute_metrics(adaptive, w), compute_metrics(static, w)
    summary = {
        "run_id": f"seed-{config.seed}",
        "config": config.to_dict(),
        "phase1_final_accuracy": float(np.mean(p1.accuracies[-100:])),
        "adaptive": ma.to_dict(),
        "static_baseline": ms.to_dict(),
        "alpha_final": adaptive[-1].alpha,
        "eta_range": [min(r.eta for r in adaptive), max(r.eta for r in adaptive)],
        "actions": sum(r.action != "none" for r in adaptive),
        "delta_V_excursions": len(flag_delta_v_excursions(adaptive, config.dv_spike)),
    }
    return ExperimentResult(config, p1, adaptive, static, summary)


def _sweep_one(config: HarnessConfig) -> tuple[str, dict, str, str]:
    res = run_experiment(config)
    return res.summary["run_id"], res.summary, csv_text(res.adaptive), csv_text(res.static)


def run_sweep(config: HarnessConfig, seeds: Sequence[int], workers: Optional[int] = None):
    """Independent runs per seed in worker processes, returned sorted by run id."""
    configs = [replace(config, seed=int(s)) for s in seeds]
    if workers == 1 or len(configs) == 1:
        results = [_sweep_one(c) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, configs))
    return sorted(results, key=lambda r: r[0])
