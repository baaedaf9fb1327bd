import dataclasses
import math
import random

import pytest

from conftest import small_scenario
from invarmon.attacks import AttackKind, AttackScript
from invarmon.errors import ConfigError
from invarmon.harness import (
    ScenarioConfig,
    latency_distribution,
    overhead_summary,
    racing_comparison,
    reference_scenario,
    run,
    worst_phase_trigger,
)
from invarmon.monitor import OrderingMode, memory_overhead


def fnptr_attack(trigger, object_index=2, offset=0):
    return AttackScript(
        kind=AttackKind.FNPTR_HIJACK,
        trigger_event=trigger,
        object_index=object_index,
        offset=offset,
    )


class TestRun:
    def test_no_attack_zero_detections(self):
        report = run(small_scenario(run_length=30))
        assert report.detections == 0
        assert report.outcomes == []
        assert not report.frozen

    def test_determinism_identical_digests(self):
        config = small_scenario(attacks=[fnptr_attack(3)], seed=9)
        a, b = run(config), run(config)
        assert a.event_log_digest == b.event_log_digest
        assert a.config_hash == b.config_hash

    def test_seed_changes_digest(self):
        a = run(small_scenario(seed=1, run_length=10))
        b = run(small_scenario(seed=2, run_length=10))
        assert a.event_log_digest != b.event_log_digest

    def test_persistent_attack_detected_within_bound(self):
        config = small_scenario(count=10, subset_size=3, run_length=30,
                                attacks=[fnptr_attack(4, object_index=7)])
        report = run(config)
        (outcome,) = report.outcomes
        assert not outcome.escaped
        num_subsets = math.ceil(report.num_records / 3)
        assert outcome.detected_at - outcome.applied_at <= num_subsets - 1
        assert outcome.repaired_at == outcome.detected_at

    def test_latency_seconds_consistent(self):
        config = small_scenario(attacks=[fnptr_attack(3)], run_length=30)
        report = run(config)
        for sw, sec in zip(report.latencies_switches, report.latencies_seconds):
            assert sec == sw / 25

    def test_racing_detected_when_window_covers_a_pass(self):
        # window >= one full pass: pigeonhole guarantees detection
        config = small_scenario(
            count=6, subset_size=2, run_length=20,
            attacks=[AttackScript(kind=AttackKind.RACING, trigger_event=3,
                                  object_index=4, hold_events=4)],
        )
        report = run(config)
        assert not report.outcomes[0].escaped

    def test_racing_escapes_on_unlucky_phase(self):
        # round robin, window 1, object's subset checked just before the attack
        config = small_scenario(
            count=6, subset_size=2, run_length=30,
            attacks=[AttackScript(kind=AttackKind.RACING, trigger_event=2,
                                  object_index=0, hold_events=1)],
        )
        report = run(config)
        assert report.outcomes[0].escaped
        assert report.detections == 0

    def test_freeze_escapes_and_flags_run(self):
        config = small_scenario(
            run_length=30,
            attacks=[
                AttackScript(kind=AttackKind.SCHEDULER_FREEZE, trigger_event=2),
                fnptr_attack(3),
            ],
        )
        report = run(config)
        assert report.frozen
        hijack = [o for o in report.outcomes if o.kind == "fnptr_hijack"][0]
        assert hijack.escaped

    def test_unfreeze_resumes_checking(self):
        config = small_scenario(
            run_length=40,
            attacks=[
                AttackScript(kind=AttackKind.SCHEDULER_FREEZE, trigger_event=2,
                             unfreeze_event=10),
                fnptr_attack(3),
            ],
        )
        report = run(config)
        hijack = [o for o in report.outcomes if o.kind == "fnptr_hijack"][0]
        assert not hijack.escaped
        assert hijack.detected_at >= 10

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            run(dataclasses.replace(small_scenario(), run_length=0))


class TestOverheadSummary:
    def test_totals_match_closed_form(self):
        config = small_scenario(count=12, size=32, subset_size=4)
        summary = overhead_summary(config)
        assert summary["bytes"] == memory_overhead(12, 32, True, 4)

    def test_zero_objects(self):
        config = small_scenario(count=0)
        summary = overhead_summary(config)
        assert summary["bytes"]["total"] == memory_overhead(0, 0, True, 2)["total"]

    def test_reference_numbers(self):
        summary = overhead_summary(reference_scenario())
        assert summary["kib"]["total"] == 2181
        assert summary["kib"]["mapping"] == 13
        assert summary["percent_of_budget"] == pytest.approx(1.66, abs=0.01)


class TestLatencyDistribution:
    def test_single_subset_all_zero(self):
        config = small_scenario(count=4, subset_size=100)
        hist = latency_distribution(config, trials=200)
        assert hist == {0: 200}

    def test_uniform_phase_stats(self):
        config = small_scenario(count=598, size=8, subset_size=100)  # 600 records
        hist = latency_distribution(config, trials=10_000, seed=4)
        num_subsets = 6
        assert max(hist) <= num_subsets - 1
        mean = sum(l * n for l, n in hist.items()) / 10_000
        assert mean == pytest.approx((num_subsets - 1) / 2, rel=0.05)

    def test_model_matches_full_simulation(self):
        # every fixed phase, model latency == full event-loop latency
        count, k = 10, 3
        config = small_scenario(count=count, subset_size=k, run_length=40)
        num_records = count + 2
        num_subsets = math.ceil(num_records / k)
        target = 7
        for phase in range(num_subsets):
            hist = latency_distribution(config, trials=1, attack_phase="fixed",
                                        fixed_phase=phase, target_record=target)
            (model_latency,) = hist
            full = run(dataclasses.replace(
                config,
                attacks=(fnptr_attack(phase, object_index=target),),
            ))
            outcome = full.outcomes[0]
            assert outcome.detected_at - outcome.applied_at == model_latency


class TestRacingComparison:
    def test_randomized_order_beats_best_phase(self):
        config = small_scenario(count=58, size=8, subset_size=10,
                                ordering=OrderingMode.SEEDED_RANDOM)
        rates = racing_comparison(config, trials=300, window=1, seed=11)
        assert rates["round_robin_best_phase"] == 0.0
        assert rates["seeded_random"] > 0.0
        assert rates["seeded_random"] >= rates["round_robin_best_phase"]

    def test_full_window_always_detects(self):
        config = small_scenario(count=10, subset_size=3)
        num_subsets = math.ceil(12 / 3)
        rates = racing_comparison(config, trials=50, window=num_subsets, seed=2)
        assert rates["round_robin_best_phase"] == 1.0
        assert rates["seeded_random"] == 1.0


class TestReferenceScenario:
    def test_worst_phase_trigger(self):
        assert worst_phase_trigger(0, 100) == 1
        assert worst_phase_trigger(250, 100) == 3

    def test_alias_variant_same_latency(self):
        plain = run(reference_scenario(via_alias=False))
        alias = run(reference_scenario(via_alias=True))
        assert plain.latencies_switches == alias.latencies_switches == [149]
