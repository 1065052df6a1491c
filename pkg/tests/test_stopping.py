import math

import numpy as np
import pytest

from pbos.conjugate import (
    NormalGammaParams,
    credible_interval_length,
    posterior_update,
    summarize,
)
from pbos.rehearsal import RehearsalConfig
from pbos.seeding import derive_rng, derive_seed
from pbos.stopping import (
    SessionStoppedError,
    StoppingConfig,
    bos_check,
    futility_check,
    new_session,
    run_experiment,
    step,
)

CENTRAL = NormalGammaParams(0.0, 10.0, 1.0, 10.0)
FLAT = NormalGammaParams(0.0, 1.0, 20.0, 1.0)


def _cfg(**overrides):
    base = dict(
        cil_threshold=0.45,
        tl=0.3,
        n_min=10,
        n_max=50,
        rehearsal=RehearsalConfig.dense(50, m=100),
    )
    base.update(overrides)
    return StoppingConfig(**base)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            _cfg(cil_threshold=0.0)
        with pytest.raises(ValueError):
            _cfg(tl=1.5)
        with pytest.raises(ValueError):
            _cfg(n_min=0)
        with pytest.raises(ValueError):
            _cfg(n_min=60)
        with pytest.raises(ValueError):
            _cfg(batch=0)

    def test_rehearsal_must_reach_cap(self):
        with pytest.raises(ValueError):
            _cfg(rehearsal=RehearsalConfig(sizes=(10, 20), m=50))

    def test_default_rehearsal_dense(self):
        cfg = StoppingConfig(cil_threshold=0.5, tl=0.2, n_min=5, n_max=12)
        assert cfg.rehearsal.sizes == tuple(range(1, 13))


class TestChecks:
    def test_bos_boundary_inclusive(self):
        assert bos_check(0.29, 0.30)
        assert bos_check(0.30, 0.30)
        assert not bos_check(0.31, 0.30)

    def test_bos_requires_positive_cil(self):
        with pytest.raises(ValueError):
            bos_check(0.0, 0.3)

    def test_futility_examples(self):
        dist = [0.2, 0.25, 0.3, 0.35, 0.4]
        assert not futility_check(dist, 0.5, 0.32)
        assert futility_check(dist, 0.9, 0.32)

    def test_futility_zero_tolerance_never_stops(self):
        assert not futility_check([10.0, 11.0, 12.0], 0.0, 0.001)

    def test_futility_tie_continues(self):
        assert not futility_check([0.3, 0.3, 0.3], 0.5, 0.3)


class TestStep:
    def test_stop_at_target(self):
        # the worked posterior example: CIL at 10 samples ~ 0.9387 <= 1.0
        data = [0.5 + 1.0 * z for z in (-1.2, 0.8, 0.3, -0.5, 1.5, -0.9, 0.2, 0.1, -0.4, 0.1)]
        stats = summarize(data)
        scale = math.sqrt(9.0 / stats.sum_sq_dev)
        adjusted = [stats.mean + (x - stats.mean) * scale for x in data]
        shift = 0.5 - summarize(adjusted).mean
        adjusted = [x + shift for x in adjusted]
        state = new_session(CENTRAL, seed=1)
        state, decision = step(state, adjusted, _cfg(cil_threshold=1.0))
        assert decision.kind == "stop_target_reached"
        assert decision.at_count == 10
        assert decision.cil == pytest.approx(0.93868, abs=1e-4)
        assert state.status == "stopped"

    def test_stop_at_cap_when_unreachable(self):
        rng = derive_rng(42, 0)
        data = rng.normal(0.0, 1.0, 50)
        out = run_experiment(data, _cfg(cil_threshold=0.01, tl=0.0), FLAT, seed=3)
        assert out.decision.kind == "stop_at_max"
        assert out.decision.target_met is False
        assert out.samples_used == 50

    def test_futility_gate_closed_below_n_min(self):
        rng = derive_rng(43, 0)
        data = rng.normal(0.0, 1.0, 9)
        state = new_session(FLAT, seed=4)
        state, decision = step(state, data, _cfg(cil_threshold=1e-6, tl=1.0))
        assert decision.kind == "continue"
        assert state.status == "running"

    def test_stepping_stopped_session_rejected(self):
        state = new_session(CENTRAL, seed=5)
        state, decision = step(state, [0.0] * 50, _cfg(cil_threshold=1e-9, tl=0.0))
        assert decision.stopped
        with pytest.raises(SessionStoppedError):
            step(state, [1.0], _cfg())

    def test_non_finite_observations_rejected(self):
        state = new_session(CENTRAL, seed=6)
        with pytest.raises(ValueError):
            step(state, [1.0, math.inf], _cfg())

    def test_posterior_tracks_all_observations(self):
        rng = derive_rng(44, 0)
        data = rng.normal(0.0, 1.0, 12)
        state = new_session(CENTRAL, seed=7)
        cfg = _cfg(cil_threshold=1e-6, tl=0.0)
        for x in data:
            state, _ = step(state, [x], cfg)
        expected = posterior_update(CENTRAL, summarize(data))
        assert state.posterior == expected
        assert [i for i, _ in state.trajectory] == list(range(1, 13))


class TestRunExperiment:
    def test_requires_exact_length(self):
        with pytest.raises(ValueError):
            run_experiment([0.0] * 10, _cfg(), FLAT, seed=1)

    def test_deterministic(self):
        data = derive_rng(45, 0).normal(0.0, 1.0, 50)
        cfg = _cfg(tl=0.4)
        a = run_experiment(data, cfg, FLAT, seed=9)
        b = run_experiment(data, cfg, FLAT, seed=9)
        assert a == b

    def test_tl_zero_decisions_without_rehearsal(self):
        data = derive_rng(46, 0).normal(0.0, 1.0, 50)
        cfg = _cfg(tl=0.0)
        fast = run_experiment(data, cfg, FLAT, seed=10, record_predictions=False)
        slow = run_experiment(data, cfg, FLAT, seed=10, record_predictions=True)
        assert fast.decision.kind == slow.decision.kind
        assert fast.samples_used == slow.samples_used
        assert fast.trajectory == slow.trajectory
        assert fast.predictions == ()
        assert slow.predictions != ()
        assert fast.decision.kind in ("stop_target_reached", "stop_at_max")

    def test_tl_one_stops_at_n_min_when_target_unmet(self):
        hits = 0
        for rep in range(100):
            data = derive_rng(47, rep).normal(0.0, 1.0, 50)
            cfg = _cfg(cil_threshold=0.30, tl=1.0)
            out = run_experiment(data, cfg, FLAT, seed=derive_seed(47, 1, rep))
            if out.decision.kind == "stop_futility" and out.samples_used == cfg.n_min:
                hits += 1
        assert hits >= 99

    def test_futility_never_below_n_min(self):
        for rep in range(50):
            data = derive_rng(48, rep).normal(0.0, 1.0, 50)
            cfg = _cfg(cil_threshold=0.2, tl=0.9, n_min=15)
            out = run_experiment(data, cfg, FLAT, seed=derive_seed(48, 1, rep))
            if out.decision.kind == "stop_futility":
                assert out.samples_used >= 15

    def test_samples_used_non_increasing_in_tl(self):
        # identical data and seeds: a higher tolerance can only stop sooner
        for rep in range(25):
            data = derive_rng(49, rep).normal(0.0, 1.0, 50)
            seed = derive_seed(49, 1, rep)
            used = [
                run_experiment(data, _cfg(tl=tl), CENTRAL, seed=seed).samples_used
                for tl in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
            ]
            assert all(b <= a for a, b in zip(used, used[1:]))

    def test_success_soundness(self):
        # a success stop must mean the realized CIL is at or under target
        found = 0
        for rep in range(40):
            data = derive_rng(50, rep).normal(0.0, 1.0, 50)
            cfg = _cfg(cil_threshold=0.58, tl=0.2)
            out = run_experiment(data, cfg, CENTRAL, seed=derive_seed(50, 1, rep))
            if out.decision.kind == "stop_target_reached":
                found += 1
                prefix = data[: out.samples_used]
                cil = credible_interval_length(
                    posterior_update(CENTRAL, summarize(prefix)), cfg.coverage
                )
                assert cil == out.decision.cil
                assert cil <= cfg.cil_threshold
        assert found > 0


class TestBosEquivalence:
    def test_tl_zero_matches_rehearsal_free_reference(self):
        # reference: success-or-cap loop that never predicts
        def reference(data, cfg, prior):
            trajectory = []
            for i in range(1, cfg.n_max + 1):
                post = posterior_update(prior, summarize(data[:i]))
                cil = credible_interval_length(post, cfg.coverage)
                trajectory.append((i, cil))
                if cil <= cfg.cil_threshold:
                    return "stop_target_reached", i, trajectory
            return "stop_at_max", cfg.n_max, trajectory

        cfg = _cfg(cil_threshold=0.55, tl=0.0)
        for rep in range(200):
            data = derive_rng(51, rep).normal(0.0, 1.0, 50)
            out = run_experiment(data, cfg, CENTRAL, seed=derive_seed(51, 1, rep), record_predictions=False)
            kind, used, trajectory = reference(data, cfg, CENTRAL)
            assert out.decision.kind == kind
            assert out.samples_used == used
            assert len(out.trajectory) == len(trajectory)
            for (i_a, t_a), (i_b, t_b) in zip(out.trajectory, trajectory):
                assert i_a == i_b
                assert t_a == t_b
