"""Synthetic piecewise-stationary two-modality streams with bounded drift.

Generative model for one sample under concept ``c``:

* clean features ``u1 ~ N(0, I_d1)``, ``u2 ~ N(0, I_d2)``;
* label ``y = 1[c.w1 . u1 + c.w2 . u2 >= 0]``, flipped with prob ``label_noise``;
* observed ``x_m = u_m + noise_m * eps``, except that with probability
  ``1 - informativeness_m`` it is replaced by an independent draw
  ``N(shift_m, I)``. Those replacements carry no label information; a
  nonzero ``shift_m`` models corruption that also moves the feature mean.

Drift is expressed on the flat concept vector (weights, noise levels,
informativeness, label noise, shifts). Every transition is stretched so the
per-step change never exceeds ``delta_max``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import Batch, ConfigError, Sample, derive_rng

__all__ = [
    "ConceptSpec",
    "Transition",
    "Segment",
    "DriftSchedule",
    "StreamConfig",
    "Stream",
    "PRESETS",
    "sample_batch",
    "next_sample",
    "drift_magnitude",
    "unilateral_drift_preset",
    "build_schedule",
]

STREAM_KEY = 1
CONCEPT_KEY = 2

TRANSITIONS = ("sudden", "gradual", "incremental", "recurring")


def _vec(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ConceptSpec:
    w1_star: np.ndarray
    w2_star: np.ndarray
    noise1: float = 0.0
    noise2: float = 0.0
    informativeness1: float = 1.0
    informativeness2: float = 1.0
    label_noise: float = 0.0
    shift1: Optional[np.ndarray] = None
    shift2: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "w1_star", _vec(self.w1_star))
        object.__setattr__(self, "w2_star", _vec(self.w2_star))
        d1, d2 = self.dims
        object.__setattr__(self, "shift1", _vec(np.zeros(d1) if self.shift1 is None else self.shift1))
        object.__setattr__(self, "shift2", _vec(np.zeros(d2) if self.shift2 is None else self.shift2))
        if self.shift1.shape != (d1,) or self.shift2.shape != (d2,):
            raise ConfigError("shift", "shift vectors must match the weight dimensions")
        for name in ("noise1", "noise2"):
            if not getattr(self, name) >= 0.0:
                raise ConfigError(name, f"noise std must be nonnegative, got {getattr(self, name)}")
        for name in ("informativeness1", "informativeness2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(name, f"must lie in [0, 1], got {getattr(self, name)}")
        if not 0.0 <= self.label_noise < 0.5:
            raise ConfigError("label_noise", f"must lie in [0, 0.5), got {self.label_noise}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.w1_star.shape[0], self.w2_star.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.w1_star, self.w2_star,
            [self.noise1, self.noise2, self.informativeness1, self.informativeness2, self.label_noise],
            self.shift1, self.shift2,
        ])

    @classmethod
    def from_vector(cls, v: np.ndarray, d1: int, d2: int) -> "ConceptSpec":
        o = d1 + d2
        # interpolation can leave values a rounding error outside their range
        s = np.clip(v[o : o + 5], [0, 0, 0, 0, 0], [np.inf, np.inf, 1, 1, np.nextafter(0.5, 0)])
        return cls(
            w1_star=v[:d1], w2_star=v[d1:o],
            noise1=float(s[0]), noise2=float(s[1]),
            informativeness1=float(s[2]), informativeness2=float(s[3]),
            label_noise=float(s[4]),
            shift1=v[o + 5 : o + 5 + d1], shift2=v[o + 5 + d1 :],
        )

    def modality_slice(self, m: int, d1: int, d2: int) -> np.ndarray:
        """Indices into ``to_vector()`` that belong to modality ``m``."""
        o = d1 + d2
        if m == 1:
            idx = list(range(d1)) + [o, o + 2] + list(range(o + 5, o + 5 + d1))
        else:
            idx = list(range(d1, o)) + [o + 1, o + 3] + list(range(o + 5 + d1, o + 5 + d1 + d2))
        return np.asarray(idx)


@dataclass(frozen=True)
class Transition:
    """How a segment's concept is entered from the preceding one.

    ``gradual`` interpolates over ``length`` steps, ``incremental`` moves at
    most ``step_size`` per step, ``recurring`` alternates between the previous
    and this concept every ``period`` steps.
    """

    kind: str = "sudden"
    length: int = 1
    step_size: Optional[float] = None
    period: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TRANSITIONS:
            raise ConfigError("transition", f"expected one of {TRANSITIONS}, got {self.kind!r}")
        if self.kind == "gradual" and not self.length >= 1:
            raise ConfigError("length", f"gradual length must be >= 1, got {self.length}")
        if self.kind == "incremental" and not (self.step_size is not None and self.step_size > 0):
            raise ConfigError("step_size", f"incremental step must be positive, got {self.step_size}")
        if self.kind == "recurring" and not (self.period is not None and self.period >= 1):
            raise ConfigError("period", f"recurring period must be >= 1, got {self.period}")


@dataclass(frozen=True)
class Segment:
    start: int
    concept: ConceptSpec
    transition: Transition = field(default_factory=Transition)


@dataclass(frozen=True)
class _Plan:
    start: int
    origin: np.ndarray
    target: np.ndarray
    ramp: int
    period: Optional[int]


class DriftSchedule:
    """Ordered concept segments with per-step concept change capped at ``delta_max``."""

    def __init__(self, segments: Sequence[Segment], delta_max: float):
        if not segments:
            raise ConfigError("segments", "schedule needs at least one segment")
        if not delta_max > 0:
            raise ConfigError("delta_max", f"must be positive, got {delta_max}")
        starts = [s.start for s in segments]
        if starts[0] != 0:
            raise ConfigError("segments", "first segment must start at step 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigError("segments", f"segment starts must be strictly increasing, got {starts}")
        dims = {s.concept.dims for s in segments}
        if len(dims) != 1:
            raise ConfigError("segments", "all concepts must share feature dimensions")
        self.segments = tuple(segments)
        self.delta_max = float(delta_max)
        self.d1, self.d2 = dims.pop()
        self._starts = starts
        self._plans: list[_Plan] = []
        for i, seg in enumerate(self.segments):
            target = seg.concept.to_vector()
            if i == 0:
                self._plans.append(_Plan(0, target, target, 1, None))
                continue
            origin = self.theta_at(seg.start - 1)
            dist = float(np.linalg.norm(target - origin))
            tr = seg.transition
            if tr.kind == "gradual":
                ramp = max(int(tr.length), self._min_ramp(dist))
            elif tr.kind == "incremental":
                ramp = max(1, self._min_ramp(dist, min(tr.step_size, self.delta_max)))
            else:
                ramp = self._min_ramp(dist)
            period = None
            if tr.kind == "recurring":
                period = int(tr.period)
                if ramp > period:
                    raise ConfigError(
                        "period", f"period {period} is shorter than the {ramp}-step ramp delta_max requires"
                    )
            self._plans.append(_Plan(seg.start, origin, target, ramp, period))

    def _min_ramp(self, dist: float, cap: Optional[float] = None) -> int:
        cap = self.delta_max if cap is None else cap
        ramp = max(1, math.ceil(dist / cap))
        # keep a relative margin so interpolation rounding cannot overshoot the cap
        while dist / ramp > cap * (1.0 - 1e-9):
            ramp += 1
        return ramp

    def segment_index(self, t: int) -> int:
        if t < 0:
            raise ValueError(f"timestep must be nonnegative, got {t}")
        return bisect.bisect_right(self._starts, t) - 1

    def theta_at(self, t: int) -> np.ndarray:
        """Flat concept parameter vector active at step ``t``."""
        plan = self._plans[self.segment_index(t)]
        offset = t - plan.start
        a, b = plan.origin, plan.target
        if plan.period is not None:
            cycle, offset = divmod(offset, plan.period)
            if cycle % 2:
                a, b = b, a
        frac = min(1.0, (offset + 1) / plan.ramp)
        if frac >= 1.0:
            return b.copy()
        return a + (b - a) * frac

    def concept_at(self, t: int) -> ConceptSpec:
        return ConceptSpec.from_vector(self.theta_at(t), self.d1, self.d2)

    def drifted_modality(self, t: int, tol: float = 1e-12) -> int:
        """Ground-truth indicator: 1 or 2 if only that modality's concept moved since step 0, else 0."""
        base, now = self.theta_at(0), self.theta_at(t)
        moved = []
        for m in (1, 2):
            idx = self.segments[0].concept.modality_slice(m, self.d1, self.d2)
            moved.append(bool(np.max(np.abs(now[idx] - base[idx])) > tol))
        if moved[0] and not moved[1]:
            return 1
        if moved[1] and not moved[0]:
            return 2
        return 0

    def stationary_until(self) -> int:
        """First step at which the concept differs from the initial one (inf if never)."""
        return self._starts[1] if len(self._starts) > 1 else math.inf


def drift_magnitude(schedule: DriftSchedule, t: int) -> float:
    """True concept change ``||theta*_{t+1} - theta*_t||`` (diagnostic only)."""
    return float(np.linalg.norm(schedule.theta_at(t + 1) - schedule.theta_at(t)))


def sample_batch(schedule: DriftSchedule, t: int, rng: np.random.Generator, n: int) -> Batch:
    """Draw ``n`` samples from the concept active at step ``t``.

    The generator is consumed identically whatever the concept, so two
    schedules fed the same generator differ only where their concepts do.
    """
    c = schedule.concept_at(t)
    d1, d2 = c.dims
    u1 = rng.standard_normal((n, d1))
    u2 = rng.standard_normal((n, d2))
    flip = rng.random(n) < c.label_noise
    eps1 = rng.standard_normal((n, d1))
    eps2 = rng.standard_normal((n, d2))
    keep1 = rng.random(n) < c.informativeness1
    keep2 = rng.random(n) < c.informativeness2
    junk1 = c.shift1 + rng.standard_normal((n, d1))
    junk2 = c.shift2 + rng.standard_normal((n, d2))

    y = ((u1 @ c.w1_star + u2 @ c.w2_star) >= 0.0) ^ flip
    x1 = np.where(keep1[:, None], u1 + c.noise1 * eps1, junk1)
    x2 = np.where(keep2[:, None], u2 + c.noise2 * eps2, junk2)
    return Batch(x1, x2, y.astype(np.int64), int(t))


def next_sample(schedule: DriftSchedule, t: int, rng: np.random.Generator) -> Sample:
    return sample_batch(schedule, t, rng, 1).samples()[0]


class Stream:
    """A schedule plus a seed; batch ``t`` is a pure function of (schedule, seed, t)."""

    def __init__(self, schedule: DriftSchedule, seed: int):
        self.schedule = schedule
        self.seed = int(seed)

    def batch(self, t: int, n: int) -> Batch:
        return sample_batch(self.schedule, t, derive_rng(self.seed, STREAM_KEY, t), n)


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

PRESETS = (
    "stationary", "sudden", "gradual", "incremental", "recurring",
    "unilateral-m1", "unilateral-m2", "partial-m1", "custom",
)


@dataclass(frozen=True)
class StreamConfig:
    """Stream parameters as they appear in the config file.

    ``segments`` is only read when ``preset == "custom"``; each entry is a
    table with the keys accepted by :func:`segment_from_dict`.
    """

    preset: str = "stationary"
    d1: int = 8
    d2: int = 8
    concept_seed: int = 0
    drift_at: int = 1500
    severity: float = 1.0
    corruption: float = 3.0
    transition_length: int = 500
    step_size: float = 0.01
    period: int = 500
    noise1: float = 0.0
    noise2: float = 0.0
    label_noise: float = 0.0
    delta_max: float = 5.0
    segments: tuple = ()

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError("preset", f"expected one of {PRESETS}, got {self.preset!r}")
        if self.d1 < 1 or self.d2 < 1:
            raise ConfigError("d1" if self.d1 < 1 else "d2", "feature dimensions must be positive")
        if self.drift_at < 1:
            raise ConfigError("drift_at", f"must be positive, got {self.drift_at}")
        if not 0.0 < self.severity <= 1.0:
            raise ConfigError("severity", f"must lie in (0, 1], got {self.severity}")
        if not self.corruption >= 0.0:
            raise ConfigError("corruption", f"must be nonnegative, got {self.corruption}")
        object.__setattr__(self, "segments", tuple(dict(s) for s in self.segments))

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["segments"] = [dict(s) for s in self.segments]
        return out


def base_directions(concept_seed: int, index: int, d1: int, d2: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm ground-truth directions for concept number ``index``."""
    rng = derive_rng(concept_seed, CONCEPT_KEY, index)
    u1 = rng.standard_normal(d1)
    u2 = rng.standard_normal(d2)
    return u1 / np.linalg.norm(u1), u2 / np.linalg.norm(u2)


_SEGMENT_KEYS = {
    "start", "transition", "length", "step_size", "period", "concept", "flip1", "flip2",
    "informativeness1", "informativeness2", "noise1", "noise2", "label_noise",
    "corruption1", "corruption2",
}


def segment_from_dict(entry: Mapping, cfg: StreamConfig) -> Segment:
    unknown = set(entry) - _SEGMENT_KEYS
    if unknown:
        raise ConfigError(f"segments.{sorted(unknown)[0]}", "unknown segment key")
    u1, u2 = base_directions(cfg.concept_seed, int(entry.get("concept", 0)), cfg.d1, cfg.d2)
    concept = ConceptSpec(
        w1_star=-u1 if entry.get("flip1", False) else u1,
        w2_star=-u2 if entry.get("flip2", False) else u2,
        noise1=float(entry.get("noise1", cfg.noise1)),
        noise2=float(entry.get("noise2", cfg.noise2)),
        informativeness1=float(entry.get("informativeness1", 1.0)),
        informativeness2=float(entry.get("informativeness2", 1.0)),
        label_noise=float(entry.get("label_noise", cfg.label_noise)),
        shift1=-float(entry.get("corruption1", 0.0)) * u1,
        shift2=-float(entry.get("corruption2", 0.0)) * u2,
    )
    transition = Transition(
        kind=entry.get("transition", "sudden"),
        length=int(entry.get("length", 1)),
        step_size=entry.get("step_size"),
        period=entry.get("period"),
    )
    return Segment(int(entry.get("start", 0)), concept, transition)


def _preset_segments(cfg: StreamConfig) -> list[dict]:
    t0 = cfg.drift_at
    sev, k = cfg.severity, cfg.corruption
    if cfg.preset == "stationary":
        return [{"start": 0}]
    if cfg.preset == "sudden":
        return [{"start": 0}, {"start": t0, "flip1": True}]
    if cfg.preset == "gradual":
        return [{"start": 0}, {"start": t0, "flip1": True, "transition": "gradual", "length": cfg.transition_length}]
    if cfg.preset == "incremental":
        return [{"start": 0}, {"start": t0, "flip1": True, "transition": "incremental", "step_size": cfg.step_size}]
    if cfg.preset == "recurring":
        return [
            {"start": 0},
            {"start": t0, "informativeness1": 0.0, "corruption1": k},
            {"start": t0 + cfg.period, "flip1": True, "transition": "recurring", "period": cfg.period},
        ]
    if cfg.preset in ("unilateral-m1", "partial-m1"):
        s = 0.5 if cfg.preset == "partial-m1" else sev
        return [{"start": 0}, {"start": t0, "informativeness1": 1.0 - s, "corruption1": k * s}]
    if cfg.preset == "unilateral-m2":
        return [{"start": 0}, {"start": t0, "informativeness2": 1.0 - sev, "corruption2": k * sev}]
    if cfg.preset == "custom":
        if not cfg.segments:
            raise ConfigError("segments", "custom preset needs at least one segment")
        return [dict(s) for s in cfg.segments]
    raise ConfigError("preset", f"unknown preset {cfg.preset!r}")


def build_schedule(cfg: StreamConfig) -> DriftSchedule:
    return DriftSchedule([segment_from_dict(s, cfg) for s in _preset_segments(cfg)], cfg.delta_max)


def unilateral_drift_preset(which: int, severity: float, **overrides) -> DriftSchedule:
    """Schedule where only modality ``which`` degrades at ``drift_at``.

    Its informativeness drops to ``1 - severity`` and its uninformative
    draws are offset by ``severity * corruption``; the other modality is
    untouched.
    """
    if which not in (1, 2):
        raise ValueError(f"modality must be 1 or 2, got {which}")
    if not 0.0 < severity <= 1.0:
        raise ConfigError("severity", f"must lie in (0, 1], got {severity}")
    cfg = StreamConfig(preset=f"unilateral-m{which}", severity=severity, **overrides)
    return build_schedule(cfg)
