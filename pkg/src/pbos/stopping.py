"""The stopping state machine: success check, futility prediction, decisions.

A session ingests observations batch by batch.  After every batch it
recomputes the posterior and the realized CIL, then decides:

1. realized CIL at or below the target      -> stop, target reached;
2. resource cap reached                     -> stop at the cap;
3. at or past the futility floor ``n_min``  -> rehearse the future, calibrate
   the predicted CIL distribution at ``n_max``, and stop for futility when
   the tolerance-level percentile of that distribution exceeds the target;
4. otherwise                                -> continue.

A tolerance level of zero disables futility stopping entirely (the machine
degenerates to plain success-or-cap stopping); a tolerance of one stops at
``n_min`` unless the target is already met, since no prediction can promise
the target with certainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import calibration
from .calibration import CalibrationRow, RegressionFit, UNUSABLE_FIT
from .conjugate import NormalGammaParams, credible_interval_length, posterior_update, summarize
from .rehearsal import CilDistribution, RehearsalConfig, percentile, run_rehearsal
from .seeding import derive_rng

__all__ = [
    "StoppingConfig",
    "Decision",
    "Prediction",
    "SessionState",
    "ExperimentOutcome",
    "SessionStoppedError",
    "new_session",
    "bos_check",
    "futility_check",
    "step",
    "run_experiment",
]

Pairing = Literal["horizon", "row"]


class SessionStoppedError(RuntimeError):
    """Raised when observations are pushed into a finished session."""


@dataclass(frozen=True)
class StoppingConfig:
    """Targets, gates, and rehearsal settings for one session."""

    cil_threshold: float
    tl: float
    n_min: int
    n_max: int
    coverage: float = 0.95
    batch: int = 1
    rehearsal: RehearsalConfig | None = None
    reg_min_count: int = 4
    calibration_pairing: Pairing = "horizon"

    def __post_init__(self) -> None:
        if not (self.cil_threshold > 0):
            raise ValueError(f"cil_threshold must be positive, got {self.cil_threshold}")
        if not (0.0 <= self.tl <= 1.0):
            raise ValueError(f"tl must lie in [0, 1], got {self.tl}")
        if not (1 <= self.n_min <= self.n_max):
            raise ValueError(f"need 1 <= n_min <= n_max, got n_min={self.n_min} n_max={self.n_max}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if not (0.0 < self.coverage < 1.0):
            raise ValueError(f"coverage must lie in (0, 1), got {self.coverage}")
        if self.calibration_pairing not in ("horizon", "row"):
            raise ValueError(f"unknown calibration pairing {self.calibration_pairing!r}")
        if self.rehearsal is None:
            object.__setattr__(self, "rehearsal", RehearsalConfig.dense(self.n_max, coverage=self.coverage))
        if self.rehearsal.sizes[-1] != self.n_max:
            raise ValueError(
                f"rehearsal sizes must end at n_max={self.n_max}, got max {self.rehearsal.sizes[-1]}"
            )


@dataclass(frozen=True)
class Prediction:
    """Diagnostics of one futility prediction."""

    at_count: int
    raw_median: float
    median: float
    minimum: float
    maximum: float
    tl_percentile: float
    success_prob: float
    calibrated: bool
    r_squared: float | None


@dataclass(frozen=True)
class Decision:
    kind: Literal["continue", "stop_target_reached", "stop_futility", "stop_at_max"]
    at_count: int
    cil: float
    target_met: bool | None = None
    prediction: Prediction | None = None

    @property
    def stopped(self) -> bool:
        return self.kind != "continue"


@dataclass
class SessionState:
    """Full trajectory of one running or finished session."""

    prior: NormalGammaParams
    seed: int
    posterior: NormalGammaParams
    observations: list[float] = field(default_factory=list)
    trajectory: list[tuple[int, float]] = field(default_factory=list)
    realized: dict[int, float] = field(default_factory=dict)
    table: list[CalibrationRow] = field(default_factory=list)
    status: Literal["running", "stopped"] = "running"
    decision: Decision | None = None
    last_fit: RegressionFit = UNUSABLE_FIT
    last_distribution: np.ndarray | None = None
    last_prediction: Prediction | None = None

    @property
    def count(self) -> int:
        return len(self.observations)


def new_session(prior: NormalGammaParams, seed: int) -> SessionState:
    return SessionState(prior=prior, seed=seed, posterior=prior)


def bos_check(current_cil: float, cil_threshold: float) -> bool:
    """Success when the realized CIL has come down to the target.

    The boundary counts as reached: a CIL exactly at the threshold stops.
    """
    if not (current_cil > 0):
        raise ValueError(f"current_cil must be positive, got {current_cil}")
    return current_cil <= cil_threshold


def futility_check(calibrated_dist, tl: float, cil_threshold: float) -> bool:
    """True when the predicted-CIL distribution says the target is out of reach.

    The tolerance level is the required probability of reaching the target
    at the cap, so the check reads: stop when the tl-percentile of the
    predicted CILs is strictly above the threshold.  A tolerance of zero
    never stops; ties at the percentile boundary continue.
    """
    if tl == 0.0:
        return False
    return percentile(calibrated_dist, tl) > cil_threshold


def _predict(state: SessionState, cfg: StoppingConfig, count: int, current_cil: float):
    """Rehearse, record the calibration row, fit, calibrate, summarize."""
    rng = derive_rng(state.seed, count)
    dist = run_rehearsal(state.posterior, state.prior, cfg.rehearsal, rng, at_count=count)
    predicted = {int(k): dist.median(k) for k in dist.sizes}
    state.table.append(CalibrationRow(count=count, observed_cil=current_cil, predicted=predicted))

    if cfg.calibration_pairing == "row":
        fit = calibration.fit_regression(state.table, cfg.reg_min_count)
    else:
        fit = calibration.fit_regression_realized(state.table, state.realized, cfg.reg_min_count)
    state.last_fit = fit

    raw = dist.column(cfg.n_max)
    cal, calibrated = calibration.calibrate_distribution(fit, raw, count, cfg.n_max)
    prediction = Prediction(
        at_count=count,
        raw_median=percentile(raw, 0.5),
        median=percentile(cal, 0.5),
        minimum=float(cal[0]),
        maximum=float(cal[-1]),
        tl_percentile=percentile(cal, cfg.tl),
        success_prob=float(np.mean(cal <= cfg.cil_threshold)),
        calibrated=calibrated,
        r_squared=fit.r_squared if fit.usable else None,
    )
    state.last_distribution = cal
    state.last_prediction = prediction
    return cal, prediction


def step(state: SessionState, new_obs, cfg: StoppingConfig) -> tuple[SessionState, Decision]:
    """Append a batch of observations and run the stopping checks once.

    Check order at the new count: success first (never abandon a finished
    experiment), then the resource cap, then -- from ``n_min`` on -- the
    futility prediction.  Rehearsal randomness is derived from
    (session seed, sample count), so identical sessions replay identically
    and sessions differing only in tolerance share their predictions.
    """
    if state.status != "running":
        raise SessionStoppedError("cannot step a stopped session")
    values = [float(v) for v in new_obs]
    if any(not math.isfinite(v) for v in values):
        raise ValueError("observations must be finite")
    state.observations.extend(values)
    state.posterior = posterior_update(state.prior, summarize(state.observations))
    count = state.count
    current_cil = credible_interval_length(state.posterior, cfg.coverage)
    state.trajectory.append((count, current_cil))
    state.realized[count] = current_cil

    if bos_check(current_cil, cfg.cil_threshold):
        decision = Decision(kind="stop_target_reached", at_count=count, cil=current_cil)
    elif count >= cfg.n_max:
        decision = Decision(
            kind="stop_at_max",
            at_count=count,
            cil=current_cil,
            target_met=current_cil <= cfg.cil_threshold,
        )
    elif count >= min(cfg.n_min, cfg.reg_min_count):
        # Predictions start accumulating at reg_min_count so the regression
        # has multiple rows by the time stopping is first allowed at n_min.
        cal, prediction = _predict(state, cfg, count, current_cil)
        if count >= cfg.n_min and futility_check(cal, cfg.tl, cfg.cil_threshold):
            decision = Decision(
                kind="stop_futility", at_count=count, cil=current_cil, prediction=prediction
            )
        else:
            decision = Decision(
                kind="continue", at_count=count, cil=current_cil, prediction=prediction
            )
    else:
        decision = Decision(kind="continue", at_count=count, cil=current_cil)

    if decision.stopped:
        state.status = "stopped"
        state.decision = decision
    return state, decision


@dataclass(frozen=True)
class ExperimentOutcome:
    """Flat record of one replayed experiment."""

    decision: Decision
    samples_used: int
    trajectory: tuple[tuple[int, float], ...]
    predictions: tuple[Prediction, ...]
    final_r_squared: float | None

    @property
    def reached_target(self) -> bool:
        return self.decision.kind == "stop_target_reached"

    @property
    def stopped_early(self) -> bool:
        return self.decision.kind == "stop_futility"


def run_experiment(
    data,
    cfg: StoppingConfig,
    prior: NormalGammaParams,
    seed: int,
    record_predictions: bool = True,
) -> ExperimentOutcome:
    """Replay a pre-drawn dataset of exactly ``n_max`` samples to a decision.

    Consuming pre-drawn data makes comparisons across configurations paired:
    two configs replaying the same dataset see identical observations, and
    because prediction randomness depends only on (seed, sample count), they
    also share rehearsal draws at equal counts.

    With ``tl == 0`` and ``record_predictions=False`` the rehearsal stage is
    skipped entirely: it can neither stop the session nor be observed, and
    its random stream is derived per count, so decisions, stop index, and
    the CIL sequence are unchanged.
    """
    values = [float(v) for v in data]
    if len(values) != cfg.n_max:
        raise ValueError(f"data must hold exactly n_max={cfg.n_max} samples, got {len(values)}")
    run_cfg = cfg
    if cfg.tl == 0.0 and not record_predictions:
        run_cfg = _without_rehearsal(cfg)
    state = new_session(prior, seed)
    decision = None
    predictions: list[Prediction] = []
    for start in range(0, cfg.n_max, cfg.batch):
        state, decision = step(state, values[start : start + cfg.batch], run_cfg)
        if decision.prediction is not None:
            predictions.append(decision.prediction)
        if decision.stopped:
            break
    assert decision is not None and decision.stopped
    final_r2 = None
    for pred in reversed(predictions):
        if pred.r_squared is not None:
            final_r2 = pred.r_squared
            break
    return ExperimentOutcome(
        decision=decision,
        samples_used=state.count,
        trajectory=tuple(state.trajectory),
        predictions=tuple(predictions),
        final_r_squared=final_r2,
    )


def _without_rehearsal(cfg: StoppingConfig) -> StoppingConfig:
    # Gates pushed to n_max can never open early; the tl=0 decisions are identical.
    return StoppingConfig(
        cil_threshold=cfg.cil_threshold,
        tl=0.0,
        n_min=cfg.n_max,
        n_max=cfg.n_max,
        coverage=cfg.coverage,
        batch=cfg.batch,
        rehearsal=cfg.rehearsal,
        reg_min_count=cfg.n_max,
        calibration_pairing=cfg.calibration_pairing,
    )
