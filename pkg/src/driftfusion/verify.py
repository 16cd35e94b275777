"""Property checks on the closed-form fusion update and the scalar error model.

Each check returns PASS, FAIL or SKIP (precondition not met) with a short
detail string. Failures are reported as found; nothing is relaxed to pass.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .controller import first_hit_time, simulate_fusion_analytic, boundary_step_bound
from .core import ConfigError, LyapunovParams, seed_rng
from .lyapunov import (
    ScalarRefState,
    check_stationary_convergence,
    drift_free_steps,
    delta_V_direct,
    delta_V_exact,
    detect_uub,
    increment_bound,
    negativity_threshold,
    ols_slope,
    pre_boundary_segment,
    random_walk_slope_se,
    simulate_scalar,
    worst_case_delta_V,
)

__all__ = ["VerifyConfig", "CheckResult", "CHECKS", "run_checks", "format_result"]

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


@dataclass(frozen=True)
class VerifyConfig:
    seed: int = 0
    n_states: int = 10_000
    n_cases: int = 200
    # canonical fusion scenario
    alpha0: float = 0.5
    k_alpha: float = 0.05
    delta_gap: float = 0.6
    e1: float = 0.8
    e2: float = 0.2
    margin: float = 0.05
    # noisy-gap rate check
    rate_seeds: int = 100
    rate_steps: int = 200
    rate_alpha0: float = 1.0
    rate_k_alpha: float = 0.005
    rate_gap_mean: float = 0.6
    rate_gap_sd: float = 0.1
    # scalar error model
    eta_min: float = 1e-3
    eta_max: float = 0.5
    lam_min: float = 0.1
    lam_max: float = 1.0
    delta_max: float = 0.05
    e_range: float = 1.0
    uub_eta: float = 0.1
    uub_lam: float = 1.0
    uub_e0: float = 1.0
    uub_drift_steps: int = 2000
    uub_settle_steps: int = 200
    uub_burn_in: int = 200
    uub_slack: float = 0.2
    converge_threshold: float = 1e-3

    def __post_init__(self):
        for name in ("n_states", "n_cases", "rate_seeds", "rate_steps", "uub_drift_steps", "uub_settle_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be positive")
        if not 0 < self.eta_min <= self.eta_max:
            raise ConfigError("eta_min", "need 0 < eta_min <= eta_max")
        if not 0 < self.lam_min <= self.lam_max:
            raise ConfigError("lam_min", "need 0 < lam_min <= lam_max")
        if not self.eta_max * self.lam_max < 1.0:
            raise ConfigError("eta_max", "eta_max * lam_max must stay below 1")
        if not 0 < self.uub_eta * self.uub_lam < 1:
            raise ConfigError("uub_eta", "uub_eta * uub_lam must lie in (0, 1)")
        if not self.delta_max > 0:
            raise ConfigError("delta_max", "must be positive")


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    detail: str
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status != FAIL


def format_result(r: CheckResult) -> str:
    return f"{r.status} {r.name}: {r.detail} ({r.seconds * 1e3:.1f} ms)"


def _random_scalar_states(cfg: VerifyConfig, rng: np.random.Generator, drift: bool):
    n = cfg.n_states
    eta = np.exp(rng.uniform(math.log(cfg.eta_min), math.log(cfg.eta_max), n))
    lam = rng.uniform(cfg.lam_min, cfg.lam_max, n)
    e = rng.uniform(-cfg.e_range, cfg.e_range, n)
    d = rng.uniform(-cfg.delta_max, cfg.delta_max, n) if drift else np.zeros(n)
    return eta, lam, e, d


def _increment_violations(cfg: VerifyConfig, drift: bool):
    rng = seed_rng(cfg.seed)
    eta, lam, e, d = _random_scalar_states(cfg, rng, drift)
    bad, worst = 0, None
    for i in range(cfg.n_states):
        st = ScalarRefState(float(e[i]), float(eta[i]), float(lam[i]), float(d[i]))
        params = LyapunovParams.scalar_reference(st.lam, cfg.delta_max)
        excess = delta_V_exact(st) - increment_bound(st.e, st.eta, abs(st.delta), params)
        if excess > 1e-12:
            bad += 1
            if worst is None or excess > worst[0]:
                worst = (excess, st)
    return bad, worst


def check_increment_bound(cfg: VerifyConfig) -> CheckResult:
    bad, worst = _increment_violations(cfg, drift=True)
    if bad == 0:
        return CheckResult("increment_bound", PASS, f"0/{cfg.n_states} states exceed the increment bound")
    _, st = worst
    return CheckResult(
        "increment_bound",
        FAIL,
        f"{bad}/{cfg.n_states} states exceed the increment bound; worst at e={st.e:.3g}, "
        f"eta={st.eta:.3g}, lam={st.lam:.3g}, delta={st.delta:.3g} (dV={delta_V_exact(st):.3g})",
    )


def check_increment_bound_no_drift(cfg: VerifyConfig) -> CheckResult:
    bad, _ = _increment_violations(cfg, drift=False)
    status = PASS if bad == 0 else FAIL
    return CheckResult("increment_bound_no_drift", status, f"{bad}/{cfg.n_states} drift-free states exceed the bound")


def check_fusion_replay(cfg: VerifyConfig) -> CheckResult:
    step = cfg.k_alpha * (cfg.e2 - cfg.e1)
    n = int(math.ceil(cfg.alpha0 / abs(step))) + 3 if step != 0 else 3
    trace = simulate_fusion_analytic(cfg.alpha0, cfg.k_alpha, [cfg.e1] * n, [cfg.e2] * n)
    expected = np.clip(cfg.alpha0 + step * np.arange(n + 1), 0.0, 1.0)
    err = float(np.max(np.abs(trace - expected)))
    status = PASS if err <= 1e-12 else FAIL
    head = ", ".join(f"{a:.2f}" for a in trace[1:4])
    return CheckResult("fusion_replay", status, f"alpha = {head}, ...; max deviation {err:.2e}")


def check_monotone_descent(cfg: VerifyConfig) -> CheckResult:
    """Under a persistent gap above the dead zone alpha falls monotonically to 0 and stays."""
    rng = seed_rng(cfg.seed + 1)
    failures = 0
    for _ in range(cfg.n_cases):
        alpha0 = rng.uniform(0.0, 1.0)
        k = rng.uniform(1e-3, 0.2)
        gap_min = rng.uniform(cfg.margin, 1.0)
        n = int(math.ceil(alpha0 / (k * gap_min))) + 5
        e2 = rng.uniform(0.0, 1.0 - gap_min, n)
        e1 = e2 + rng.uniform(gap_min, 1.0, n) * (1.0 - e2)
        e1 = np.maximum(e1, e2 + gap_min)
        trace = simulate_fusion_analytic(alpha0, k, e1, e2)
        diffs = np.diff(trace)
        hit = first_hit_time(trace)
        ok = hit is not None and np.all(trace[hit:] == 0.0)
        pre = diffs[: hit - 1] if hit else diffs[:0]
        ok = ok and bool(np.all(pre <= -k * gap_min + 1e-15))
        failures += not ok
    status = PASS if failures == 0 else FAIL
    return CheckResult("monotone_descent", status, f"{cfg.n_cases - failures}/{cfg.n_cases} traces decrease monotonically to 0")


def check_linear_rate(cfg: VerifyConfig) -> CheckResult:
    """Pooled OLS slope of alpha under i.i.d. gaps versus the expected -k * mean_gap."""
    k, n = cfg.rate_k_alpha, cfg.rate_steps
    slopes = []
    for s in range(cfg.rate_seeds):
        rng = seed_rng(cfg.seed * 1000 + s)
        gaps = rng.normal(cfg.rate_gap_mean, cfg.rate_gap_sd, n - 1)
        trace = simulate_fusion_analytic(cfg.rate_alpha0, k, gaps, np.zeros(n - 1))
        seg = pre_boundary_segment(trace)
        if seg.shape[0] < n:
            return CheckResult("linear_rate", SKIP, f"seed {s} reached alpha=0 within {n} steps; reduce rate_steps")
        slopes.append(ols_slope(seg)[0])
    target = -k * cfg.rate_gap_mean
    # gaps enter as a random walk: use its exact slope sd, pooled over seeds
    se = random_walk_slope_se(n, k * cfg.rate_gap_sd) / math.sqrt(len(slopes))
    mean = float(np.mean(slopes))
    status = PASS if abs(mean - target) <= 3.0 * se else FAIL
    return CheckResult(
        "linear_rate", status, f"mean slope {mean:.6g} vs {target:.6g} +- 3*{se:.3g} over {len(slopes)} seeds"
    )


def check_ultimate_bound(cfg: VerifyConfig) -> CheckResult:
    """Ultimate bound under bounded drift, then decay once drift stops."""
    rng = seed_rng(cfg.seed + 2)
    el = cfg.uub_eta * cfg.uub_lam
    deltas = np.concatenate(
        [rng.uniform(-cfg.delta_max, cfg.delta_max, cfg.uub_drift_steps), np.zeros(cfg.uub_settle_steps)]
    )
    trace = simulate_scalar(cfg.uub_e0, cfg.uub_eta, cfg.uub_lam, deltas)
    drift_part = trace[: cfg.uub_drift_steps + 1]
    res = detect_uub(drift_part, cfg.uub_burn_in)
    limit = (cfg.delta_max / el) * (1.0 + cfg.uub_slack)
    settled = check_stationary_convergence(trace[cfg.uub_drift_steps + 1 :], cfg.converge_threshold, 1)
    settle_ok = bool(np.any(np.abs(trace[cfg.uub_drift_steps + 1 :]) < cfg.converge_threshold)) and settled

    # negativity region: beyond the threshold the worst-case increment is negative
    grid_bad = 0
    for eta in np.geomspace(cfg.eta_min, cfg.eta_max, 12):
        for lam in np.linspace(cfg.lam_min, cfg.lam_max, 10):
            for e in np.geomspace(1e-3, 10.0, 40):
                thr = negativity_threshold(e, eta, lam, cfg.delta_max)
                if e > thr and not worst_case_delta_V(e, eta, lam, cfg.delta_max) < 0:
                    grid_bad += 1
    ok = res.entered_at is not None and res.bound <= limit and settle_ok and grid_bad == 0
    return CheckResult(
        "ultimate_bound",
        PASS if ok else FAIL,
        f"bound {res.bound:.4g} <= {limit:.4g} entered at {res.entered_at}; "
        f"settled below {cfg.converge_threshold:g} after drift off: {settle_ok}; "
        f"negativity-region violations {grid_bad}",
    )


def check_step_bound(cfg: VerifyConfig) -> CheckResult:
    if not cfg.k_alpha * cfg.delta_gap < 1.0:
        return CheckResult(
            "step_bound", SKIP, f"precondition k_alpha*delta_gap < 1 not met ({cfg.k_alpha * cfg.delta_gap:.3g})"
        )
    n = boundary_step_bound(cfg.alpha0, cfg.k_alpha, cfg.delta_gap)
    canon = first_hit_time(simulate_fusion_analytic(cfg.alpha0, cfg.k_alpha, [cfg.delta_gap] * (n + 2), [0.0]))
    rng = seed_rng(cfg.seed + 3)
    within = 0
    for _ in range(cfg.n_cases):
        while True:
            alpha0 = rng.uniform(0.0, 1.0)
            k = rng.uniform(1e-3, 1.0)
            gap = rng.uniform(1e-2, 1.0)
            if k * gap < 1.0 and alpha0 > 0.0:
                break
        bound = boundary_step_bound(alpha0, k, gap)
        hit = first_hit_time(simulate_fusion_analytic(alpha0, k, [gap] * (bound + 2), [0.0]))
        within += hit is not None and hit <= bound
    ok = canon is not None and canon <= n and within == cfg.n_cases
    return CheckResult(
        "step_bound", PASS if ok else FAIL, f"canonical hit {canon} <= {n}; random cases within bound {within}/{cfg.n_cases}"
    )


def check_drift_free_convergence(cfg: VerifyConfig) -> CheckResult:
    """Drift-free runs fall below the threshold exactly when the geometric rate predicts."""
    rng = seed_rng(cfg.seed + 4)
    eta, lam, e, _ = _random_scalar_states(cfg, rng, drift=False)
    off = 0
    m = min(cfg.n_cases, cfg.n_states)
    for i in range(m):
        k = drift_free_steps(float(e[i]), float(eta[i]), float(lam[i]), cfg.converge_threshold)
        trace = simulate_scalar(float(e[i]), float(eta[i]), float(lam[i]), np.zeros(k + 2))
        first = int(np.argmax(np.abs(trace) < cfg.converge_threshold))
        off += abs(first - k) > 1 or not check_stationary_convergence(trace, cfg.converge_threshold, 2)
    return CheckResult("drift_free_convergence", PASS if off == 0 else FAIL, f"{m - off}/{m} runs converge at the predicted step")


def check_closed_form(cfg: VerifyConfig) -> CheckResult:
    rng = seed_rng(cfg.seed + 5)
    eta, lam, e, d = _random_scalar_states(cfg, rng, drift=True)
    err = max(
        abs(delta_V_exact(st) - delta_V_direct(st))
        for st in (ScalarRefState(float(a), float(b), float(c), float(x)) for a, b, c, x in zip(e, eta, lam, d))
    )
    return CheckResult("closed_form", PASS if err <= 1e-12 else FAIL, f"max |exact - direct| = {err:.2e}")


CHECKS: dict[str, Callable[[VerifyConfig], CheckResult]] = {
    "fusion_replay": check_fusion_replay,
    "increment_bound": check_increment_bound,
    "increment_bound_no_drift": check_increment_bound_no_drift,
    "monotone_descent": check_monotone_descent,
    "linear_rate": check_linear_rate,
    "ultimate_bound": check_ultimate_bound,
    "step_bound": check_step_bound,
    "drift_free_convergence": check_drift_free_convergence,
    "closed_form": check_closed_form,
}

# Terse names accepted by --only alongside the descriptive ones.
CHECK_ALIASES = {
    "example2": "fusion_replay",
    "lemma1": "increment_bound",
    "lemma2": "monotone_descent",
    "prop1": "linear_rate",
    "thm1": "ultimate_bound",
    "thm2": "step_bound",
    "cor1": "drift_free_convergence",
}


def run_checks(cfg: Optional[VerifyConfig] = None, only: Optional[Sequence[str]] = None) -> list[CheckResult]:
    cfg = cfg or VerifyConfig()
    names = list(CHECKS) if not only else [CHECK_ALIASES.get(n, n) for n in only]
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(unknown[0], f"unknown check; expected one of {sorted(CHECKS)}")
    out = []
    for name in names:
        t0 = time.perf_counter()
        r = CHECKS[name](cfg)
        out.append(CheckResult(r.name, r.status, r.detail, time.perf_counter() - t0))
    return out


def verify_config_from_dict(data) -> VerifyConfig:
    try:
        return VerifyConfig(**dict(data))
    except TypeError as exc:
        raise ConfigError("verify", str(exc)) from exc
