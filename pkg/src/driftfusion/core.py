"""Shared domain types, configuration records and seeding helpers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

__all__ = [
    "ConfigError",
    "Sample",
    "Batch",
    "FusionWeight",
    "Action",
    "ControllerConfig",
    "StepRecord",
    "CSV_COLUMNS",
    "LyapunovParams",
    "DEFAULT_COSTS",
    "seed_rng",
    "derive_rng",
    "sigmoid",
    "logit",
]


class ConfigError(ValueError):
    """Invalid configuration value. ``key`` names the offending field."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --------------------------------------------------------------------------
# RNG
# --------------------------------------------------------------------------

def seed_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator seeded with ``seed``.

    PCG64 through ``SeedSequence`` is platform independent, so equal seeds
    produce identical streams everywhere (for a fixed numpy version).
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the sub-stream ``keys`` of ``seed``.

    Used to give every (purpose, step) pair its own stream so that runs
    never share mutable generator state.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def sigmoid(z):
    """Numerically stable logistic function (scalar or array)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit undefined for p={p}")
    return math.log(p) - math.log1p(-p)


# --------------------------------------------------------------------------
# Samples
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    """One timestep of two-modality features and a binary label."""

    x1: np.ndarray
    x2: np.ndarray
    y: int
    t: int = 0

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y!r}")
        if self.t < 0:
            raise ValueError(f"timestep must be nonnegative, got {self.t}")


@dataclass(frozen=True)
class Batch:
    """Column-stacked samples; the form the model operates on."""

    x1: np.ndarray  # (n, d1)
    x2: np.ndarray  # (n, d2)
    y: np.ndarray  # (n,) of {0, 1}
    t: int = 0

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @classmethod
    def from_samples(cls, samples: Iterable[Sample]) -> "Batch":
        samples = list(samples)
        if not samples:
            raise ValueError("empty batch")
        d1 = {s.x1.shape for s in samples}
        d2 = {s.x2.shape for s in samples}
        if len(d1) != 1 or len(d2) != 1:
            raise ValueError("samples in a batch must share feature dimensions")
        return cls(
            x1=np.stack([np.asarray(s.x1, float) for s in samples]),
            x2=np.stack([np.asarray(s.x2, float) for s in samples]),
            y=np.array([s.y for s in samples], dtype=np.int64),
            t=samples[0].t,
        )

    def samples(self) -> list[Sample]:
        return [Sample(self.x1[i], self.x2[i], int(self.y[i]), self.t) for i in range(len(self))]

    def slice(self, idx) -> "Batch":
        return Batch(self.x1[idx], self.x2[idx], self.y[idx], self.t)


def as_batch(data) -> Batch:
    if isinstance(data, Batch):
        return data
    if isinstance(data, Sample):
        return Batch.from_samples([data])
    return Batch.from_samples(data)


# --------------------------------------------------------------------------
# Fusion weight
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FusionWeight:
    """Fusion weight on modality 1.

    In ``sigmoid`` mode the controller moves ``raw`` and the effective weight
    is ``sigmoid(raw)``. In ``analytic`` mode the effective weight is stored
    directly, already clipped to [0, 1], and ``raw`` is unused.
    """

    mode: str
    raw: float = 0.0
    value: float = 0.5

    @classmethod
    def analytic(cls, alpha: float) -> "FusionWeight":
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"analytic fusion weight must lie in [0, 1], got {alpha}")
        return cls("analytic", raw=float("nan"), value=float(alpha))

    @classmethod
    def from_raw(cls, raw: float) -> "FusionWeight":
        return cls("sigmoid", raw=float(raw), value=float(sigmoid(raw)))

    @classmethod
    def initial(cls, mode: str, alpha: float) -> "FusionWeight":
        if mode == "analytic":
            return cls.analytic(alpha)
        if mode == "sigmoid":
            return cls.from_raw(logit(alpha))
        raise ValueError(f"unknown alpha mode {mode!r}")

    @property
    def effective(self) -> float:
        return self.value


# --------------------------------------------------------------------------
# Controller configuration and actions
# --------------------------------------------------------------------------

class Action(str, enum.Enum):
    """Controller actuation tags.

    ``alpha_shift_m1`` moves fusion weight toward modality 1 (alpha up),
    ``alpha_shift_m2`` toward modality 2 (alpha down).
    """

    NONE = "none"
    LR_UP = "lr_up"
    LR_DOWN = "lr_down"
    ALPHA_SHIFT_M1 = "alpha_shift_m1"
    ALPHA_SHIFT_M2 = "alpha_shift_m2"


def format_actions(actions: Iterable[Action]) -> str:
    tags = [a.value for a in actions if a is not Action.NONE]
    return "+".join(tags) if tags else Action.NONE.value


def parse_actions(text: str) -> tuple[Action, ...]:
    if text == Action.NONE.value:
        return ()
    return tuple(Action(tag) for tag in text.split("+"))


DEFAULT_COSTS = {"none": 0.0, "lr_up": 1.0, "lr_down": 1.0, "alpha_shift": 2.0}

ALPHA_MODES = ("analytic", "sigmoid")
LR_MODES = ("alg2", "incremental")


@dataclass(frozen=True)
class ControllerConfig:
    """Gains, thresholds, windows and bounds of the adaptation controller."""

    w_drift: int = 100
    r_comp: float = 0.5
    tau_drop: float = 0.1
    k_lr: float = 1.5
    eta_min: float = 1e-7
    eta_max: float = 1e-2
    theta_high: float = 0.7
    theta_mod: float = 0.2
    k_alpha: float = 0.05
    alpha_step: float = 0.25
    alpha_mode: str = "analytic"
    alpha_period: int = 1
    suspicion_margin: float = 0.05
    lr_mode: str = "alg2"
    k_eta: float = 1e-3
    eta_relax: float = 0.05
    oracle_indicators: bool = False
    cost_table: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_COSTS))

    def __post_init__(self):
        if int(self.w_drift) != self.w_drift or self.w_drift < 1:
            raise ConfigError("w_drift", f"window must be a positive integer, got {self.w_drift}")
        if not 0.0 < self.r_comp < 1.0:
            raise ConfigError("r_comp", f"recent fraction must lie in (0, 1), got {self.r_comp}")
        recent = math.floor(self.w_drift * self.r_comp)
        if recent < 1 or recent >= self.w_drift:
            raise ConfigError("r_comp", "recent and past windows must both be nonempty")
        if not 0.0 <= self.tau_drop <= 1.0:
            raise ConfigError("tau_drop", f"drop threshold must lie in [0, 1], got {self.tau_drop}")
        if not self.k_lr > 1.0:
            raise ConfigError("k_lr", f"LR factor must exceed 1, got {self.k_lr}")
        if not self.eta_min > 0.0:
            raise ConfigError("eta_min", f"must be positive, got {self.eta_min}")
        if not self.eta_min < self.eta_max:
            raise ConfigError("eta_max", f"must exceed eta_min ({self.eta_min}), got {self.eta_max}")
        if not 0.0 <= self.theta_mod:
            raise ConfigError("theta_mod", f"must be nonnegative, got {self.theta_mod}")
        if not self.theta_high <= 1.0:
            raise ConfigError("theta_high", f"must not exceed 1, got {self.theta_high}")
        if not self.theta_mod < self.theta_high:
            raise ConfigError("theta_high", f"must exceed theta_mod ({self.theta_mod}), got {self.theta_high}")
        if not self.k_alpha > 0.0:
            raise ConfigError("k_alpha", f"must be positive, got {self.k_alpha}")
        if not self.alpha_step > 0.0:
            raise ConfigError("alpha_step", f"must be positive, got {self.alpha_step}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError("alpha_mode", f"expected one of {ALPHA_MODES}, got {self.alpha_mode!r}")
        if int(self.alpha_period) != self.alpha_period or self.alpha_period < 1:
            raise ConfigError("alpha_period", f"must be a positive integer, got {self.alpha_period}")
        if not self.suspicion_margin >= 0.0:
            raise ConfigError("suspicion_margin", f"must be nonnegative, got {self.suspicion_margin}")
        if self.lr_mode not in LR_MODES:
            raise ConfigError("lr_mode", f"expected one of {LR_MODES}, got {self.lr_mode!r}")
        if not self.k_eta > 0.0:
            raise ConfigError("k_eta", f"must be positive, got {self.k_eta}")
        if not 0.0 <= self.eta_relax <= 1.0:
            raise ConfigError("eta_relax", f"must lie in [0, 1], got {self.eta_relax}")
        costs = dict(DEFAULT_COSTS)
        for k, v in dict(self.cost_table).items():
            if k not in DEFAULT_COSTS:
                raise ConfigError(f"cost_table.{k}", f"unknown action; expected one of {sorted(DEFAULT_COSTS)}")
            if not float(v) >= 0.0:
                raise ConfigError(f"cost_table.{k}", f"cost must be nonnegative, got {v}")
            costs[k] = float(v)
        object.__setattr__(self, "cost_table", costs)
        object.__setattr__(self, "w_drift", int(self.w_drift))
        object.__setattr__(self, "alpha_period", int(self.alpha_period))

    def cost_of(self, action: Action) -> float:
        if action is Action.NONE:
            return self.cost_table["none"]
        if action in (Action.ALPHA_SHIFT_M1, Action.ALPHA_SHIFT_M2):
            return self.cost_table["alpha_shift"]
        return self.cost_table[action.value]

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["cost_table"] = dict(self.cost_table)
        return out


# --------------------------------------------------------------------------
# Metrics log
# --------------------------------------------------------------------------

CSV_COLUMNS = (
    "t", "loss", "accuracy", "error_signal", "delta_error", "drift_signal",
    "eta", "alpha", "action", "cost", "cumulative_cost", "V", "delta_V",
    # confusion counts trail the fixed columns; F1 cannot be rebuilt without them
    "tp", "fp", "fn", "tn",
)

_INT_COLUMNS = {"t", "tp", "fp", "fn", "tn"}
_STR_COLUMNS = {"action"}


def format_float(x: float) -> str:
    return format(float(x), ".12g")


@dataclass(frozen=True)
class StepRecord:
    t: int
    loss: float
    accuracy: float
    error_signal: float
    delta_error: float
    drift_signal: float
    eta: float
    alpha: float
    action: str
    cost: float
    cumulative_cost: float
    V: float
    delta_V: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def to_row(self) -> list[str]:
        row = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if name in _INT_COLUMNS:
                row.append(str(int(v)))
            elif name in _STR_COLUMNS:
                row.append(str(v))
            else:
                row.append(format_float(v))
        return row

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "StepRecord":
        kwargs = {}
        for name in CSV_COLUMNS:
            raw = row[name]
            if name in _INT_COLUMNS:
                kwargs[name] = int(raw)
            elif name in _STR_COLUMNS:
                kwargs[name] = raw
            else:
                kwargs[name] = float(raw)
        return cls(**kwargs)

    def quantized(self) -> "StepRecord":
        """This record as it reads back from CSV (12 significant digits)."""
        return StepRecord.from_row(dict(zip(CSV_COLUMNS, self.to_row())))


# --------------------------------------------------------------------------
# Lyapunov constants
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovParams:
    """Constants of the one-step Lyapunov increment bound.

    ``G_bound`` maps ``(e, alpha)`` to an upper bound on the gradient-energy
    term. It is unknown for the full learner and left unset there.
    """

    gamma1: float
    gamma2: float
    gamma3: float
    lam: float = 1.0
    delta_max: float = 0.05
    delta_gap: float = 0.6
    G_bound: Optional[Callable[[float, float], float]] = None
    c_alpha: float = 1.0

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma3", "lam", "delta_max", "delta_gap"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ConfigError(name, f"must be strictly positive, got {v}")
        if not self.c_alpha >= 0.0:
            raise ConfigError("c_alpha", f"must be nonnegative, got {self.c_alpha}")

    @classmethod
    def scalar_reference(cls, lam: float, delta_max: float = 0.05, delta_gap: float = 0.6) -> "LyapunovParams":
        """Bound constants for e' = (1 - eta*lam) e + delta.

        The gradient-like term is g(e) = lam*e, so l1 = l2 = lam, giving
        gamma1 = lam, gamma2 = 1, gamma3 = (1 + lam^2)/2 and G(e) = lam^2 e^2
        (no Taylor remainder, no fusion term).
        """
        return cls(
            gamma1=lam,
            gamma2=1.0,
            gamma3=0.5 * (1.0 + lam * lam),
            lam=lam,
            delta_max=delta_max,
            delta_gap=delta_gap,
            G_bound=lambda e, alpha: (lam * e) ** 2,
        )
