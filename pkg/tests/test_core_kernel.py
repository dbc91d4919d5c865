from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arinc653sim.constants import NULL_PARTITION_ID, TIME_MAX, OperatingMode
from arinc653sim.core_kernel import (
    ActionKind,
    ConfigError,
    allocate_interrupt_stack,
    build_frame,
    core_service,
    get_next_partition,
    init_core_kernel,
    partition_scheduler_step,
    validate_module_config,
)
from arinc653sim.his_layer import MemoryBlock
from helpers import MS, PAGE, module_config
from oracles import frame_offsets_oracle, next_periodic_start_oracle, partition_at_scan


def predicates(cfg):
    return {v.predicate for v in validate_module_config(cfg)}


class TestValidation:
    def test_default_config_is_valid(self):
        assert validate_module_config(module_config()) == []

    def test_non_harmonic_periods(self):
        assert "harmonic_periods" in predicates(module_config(periods=(10 * MS, 15 * MS)))

    def test_duration_longer_than_period(self):
        assert "periodicity_range" in predicates(module_config(durations=(11 * MS, 5 * MS)))

    def test_period_not_tick_multiple(self):
        assert "tick_multiple" in predicates(module_config(periods=(10 * MS + 1, 20 * MS)))

    def test_overlapping_windows(self):
        cfg = module_config(periods=(10 * MS, 20 * MS), durations=(8 * MS, 5 * MS), sequence=["P1", "P2", "P1"])
        assert "windows_non_overlapping" in predicates(cfg)

    def test_window_past_frame_end(self):
        cfg = module_config(periods=(10 * MS, 10 * MS), durations=(6 * MS, 5 * MS))
        assert "window_within_frame" in predicates(cfg)

    def test_unknown_partition_in_schedule(self):
        assert "sequence_names_known" in predicates(module_config(sequence=["P1", "Q"]))

    def test_memory_gap(self):
        cfg = module_config()
        cfg = dataclasses.replace(cfg, physical_memory=MemoryBlock(0, cfg.physical_memory.size + PAGE))
        assert "memory_coverage" in predicates(cfg)

    def test_partition_overlaps_kernel(self):
        cfg = module_config()
        p1 = dataclasses.replace(cfg.partitions[0], memory=MemoryBlock(0, cfg.partitions[0].memory.size))
        assert "partition_memory_disjoint" in predicates(dataclasses.replace(cfg, partitions=(p1,) + cfg.partitions[1:]))

    def test_init_rejects_invalid(self):
        with pytest.raises(ConfigError):
            init_core_kernel(module_config(periods=(10 * MS, 15 * MS)))


class TestFrame:
    def test_two_partition_layout(self):
        frame = build_frame(module_config(sequence=["P1", "P2", "P1"]))
        assert [(w.partition_id, w.offset, w.duration) for w in frame.windows] == [
            (1, 0, 4 * MS), (2, 4 * MS, 5 * MS), (1, 10 * MS, 4 * MS)]
        assert frame.length == 20 * MS

    @pytest.mark.parametrize("t, expected", [
        (0, 1), (4 * MS - 1, 1), (4 * MS, 2), (9 * MS - 1, 2), (9 * MS, NULL_PARTITION_ID),
        (10 * MS, 1), (14 * MS, NULL_PARTITION_ID), (20 * MS, 1), (-1, NULL_PARTITION_ID),
        (-6 * MS, NULL_PARTITION_ID), (-10 * MS, 1),
    ])
    def test_partition_at(self, t, expected):
        frame = build_frame(module_config(sequence=["P1", "P2", "P1"]))
        assert get_next_partition(frame, t) == expected

    @settings(max_examples=60)
    @given(st.integers(-100 * MS, 100 * MS))
    def test_partition_at_matches_scan(self, t):
        frame = build_frame(module_config(sequence=["P1", "P2", "P1"]))
        windows = [(w.partition_id, w.offset, w.duration) for w in frame.windows]
        assert get_next_partition(frame, t) == partition_at_scan(windows, frame.length, t)

    def test_offsets_match_oracle(self):
        cfg = module_config(sequence=["P1", "P2", "P1"])
        frame = build_frame(cfg)
        offsets, length = frame_offsets_oracle(
            [w.partition for w in cfg.schedule],
            {p.name: p.period for p in cfg.partitions},
            {p.name: p.duration for p in cfg.partitions},
        )
        assert [w.offset for w in frame.windows] == offsets and frame.length == length


class TestScheduler:
    def test_switch_then_continue(self):
        state = init_core_kernel(module_config(sequence=["P1", "P2", "P1"]))
        first = partition_scheduler_step(state, 0)
        assert first.kind is ActionKind.SWITCH and (first.suspend, first.resume) == (0, 1)
        assert first.resume_mode is OperatingMode.IDLE
        assert partition_scheduler_step(state, MS).kind is ActionKind.CONTINUE
        gap = partition_scheduler_step(state, 9 * MS)
        assert (gap.suspend, gap.resume, gap.resume_mode) == (1, NULL_PARTITION_ID, None)

    def test_interrupt_stack_from_kernel_memory(self):
        state = init_core_kernel(module_config())
        block = allocate_interrupt_stack(state)
        assert block.size == state.limits.interrupt_stack_size
        assert state.memory_management.consistent()
        assert not block.overlaps(MemoryBlock(PAGE, 16 * PAGE))


class TestCoreServices:
    @pytest.fixture
    def state(self):
        return init_core_kernel(module_config(sequence=["P1", "P2", "P1"]))

    def test_mode_drives_lock_level(self, state):
        core_service(state, 1, "SetOperatingMode", OperatingMode.COLD_START)
        assert core_service(state, 1, "GetLockLevel") == state.limits.max_lock_level
        core_service(state, 1, "SetOperatingMode", OperatingMode.NORMAL)
        assert core_service(state, 1, "GetLockLevel") == state.limits.min_lock_level
        assert core_service(state, 1, "GetOperatingMode") is OperatingMode.NORMAL

    def test_lock_level_clamps(self, state):
        assert core_service(state, 1, "DecreaseLockLevel") == (0, True)
        assert core_service(state, 1, "IncreaseLockLevel") == (1, False)
        for _ in range(20):
            core_service(state, 1, "IncreaseLockLevel")
        assert core_service(state, 1, "IncreaseLockLevel") == (state.limits.max_lock_level, True)
        assert core_service(state, 1, "ResetLockLevel") == 0

    def test_status(self, state):
        status = core_service(state, 2, "GetPartitionStatus")
        assert (status["period"], status["duration"], status["operating_mode"]) == (20 * MS, 5 * MS, "IDLE")

    def test_unknown_partition(self, state):
        with pytest.raises(KeyError):
            core_service(state, 9, "GetLockLevel")

    @pytest.mark.parametrize("ct, expected", [
        (0, 0), (1, 10 * MS), (10 * MS, 10 * MS), (10 * MS + 1, 20 * MS), (-5 * MS, 0), (-15 * MS, 0),
    ])
    def test_next_periodic_start(self, state, ct, expected):
        assert core_service(state, 1, "GetNextPeriodicStart", ct) == expected

    def test_delayed_periodic_start(self, state):
        assert core_service(state, 2, "GetDelayedPeriodicStart", 0, 5 * MS) == 24 * MS

    def test_no_flagged_window(self):
        state = init_core_kernel(module_config(flagged=False))
        assert core_service(state, 1, "GetNextPeriodicStart", 0) == TIME_MAX

    @given(st.integers(-50 * MS, 200 * MS), st.sampled_from([1, 2]))
    def test_matches_enumeration(self, ct, partid):
        state = init_core_kernel(module_config(sequence=["P1", "P2", "P1"]))
        flagged = [w.offset for w in state.frame.windows if w.partition_id == partid and w.periodic_start]
        want = next_periodic_start_oracle(flagged, state.frame.length, ct)
        assert core_service(state, partid, "GetNextPeriodicStart", ct) == want
