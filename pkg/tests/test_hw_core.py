from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arinc653sim.constants import LIMIT_PSU, TIME_MAX, TIME_MIN
from arinc653sim.hw_core import (
    ClockBank,
    CpuRegisters,
    DecisionKind,
    Fault,
    FaultKind,
    HpCommand,
    InterruptController,
    MainMemory,
    PageTable,
    bits_to_signed,
    bits_to_unsigned,
    clock_advance,
    extract_page,
    hp_timer_control,
    load_page,
    save_part,
    signed_to_bits,
    translate_address,
    unsigned_to_bits,
)
from oracles import RefController, ticks_between


class TestWords:
    @given(st.integers(min_value=TIME_MIN, max_value=TIME_MAX))
    def test_signed_round_trip(self, z):
        assert bits_to_signed(signed_to_bits(z)) == z

    @given(st.integers(min_value=0, max_value=LIMIT_PSU))
    def test_unsigned_round_trip(self, n):
        assert bits_to_unsigned(unsigned_to_bits(n)) == n

    def test_minus_one_is_all_ones(self):
        assert signed_to_bits(-1) == (1,) * 64

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            unsigned_to_bits(LIMIT_PSU + 1)


class TestRegisters:
    def test_flags_must_be_bits(self):
        with pytest.raises(ValueError):
            CpuRegisters(flags={"IF": 2})

    def test_partial_save_zeroes_general_registers(self):
        regs = CpuRegisters(gp=(1, 2, 3), sp=9).with_flag("IF", 1)
        saved = save_part(regs)
        assert saved.gp == (0, 0, 0)
        assert saved.sp == 9 and saved.flag("IF") == 1

    def test_page_table_must_be_injective(self):
        with pytest.raises(ValueError):
            PageTable({0: 4096, 8192: 4096})


class TestTranslate:
    def test_mapped_offset(self):
        assert translate_address(PageTable({0: 8192}), 0, 100, 40) == 8232

    def test_beyond_limit(self):
        assert translate_address(PageTable({0: 8192}), 0, 10, 11) == Fault(FaultKind.ACCESS_VIOLATION, 11)

    def test_unmapped_page(self):
        out = translate_address(PageTable(), 0, 100, 0)
        assert isinstance(out, Fault) and out.kind is FaultKind.PAGE_FAULT


class TestMainMemory:
    def test_load_writes_at_page(self):
        mem = load_page(MainMemory(), 4096, {0: 7})
        assert mem.store[4096] == 7

    def test_empty_piece_is_identity(self):
        mem = MainMemory({5: 1})
        assert load_page(mem, 4096, {}) == mem

    def test_piece_address_is_rebased(self):
        assert load_page(MainMemory(), 0, {4097: 9}).store == {1: 9}

    def test_unaligned_page_rejected(self):
        with pytest.raises(ValueError):
            load_page(MainMemory(), 100, {0: 1})

    def test_extract_restricts_to_page(self):
        mem = MainMemory({4096: 7, 8192: 8})
        assert extract_page(mem, 4096) == {4096: 7}
        assert extract_page(MainMemory(), 0) == {}

    @given(st.dictionaries(st.integers(0, 4095), st.integers(0, LIMIT_PSU), max_size=20),
           st.integers(0, 64).map(lambda n: n * 4096))
    def test_extract_inverts_load(self, piece, page):
        mem = load_page(MainMemory(), page, piece)
        assert extract_page(mem, page) == {page + a: w for a, w in piece.items()}


class TestInterruptController:
    def test_deliver_clock_tick(self):
        ic = InterruptController()
        d = ic.raise_interrupt(0, 1)
        assert (d.kind, d.line) == (DecisionKind.DELIVER, 0)

    def test_pend_when_interrupts_disabled(self):
        assert InterruptController().raise_interrupt(2, 0).kind is DecisionKind.PEND

    def test_masked_line_latches(self):
        ic = InterruptController()
        ic.mask_interrupt(3, True)
        assert ic.raise_interrupt(3).kind is DecisionKind.NONE
        assert ic.irr == {3}

    def test_nesting_only_by_smaller_lines(self):
        ic = InterruptController(isr={2})
        assert ic.raise_interrupt(5).kind is DecisionKind.NONE
        d = ic.raise_interrupt(1)
        assert (d.kind, d.line) == (DecisionKind.DELIVER, 1)

    def test_complete_idle_controller(self):
        ic = InterruptController(isr={0})
        assert ic.complete_interrupt(0).kind is DecisionKind.NONE

    def test_complete_demands_next_request(self):
        ic = InterruptController(isr={0}, irr={2})
        d = ic.complete_interrupt(0)
        assert (d.kind, d.line) == (DecisionKind.DELIVER, 2)

    def test_complete_with_outer_in_service(self):
        assert InterruptController(isr={0, 1}).complete_interrupt(0).kind is DecisionKind.NONE

    def test_complete_requires_in_service(self):
        with pytest.raises(ValueError):
            InterruptController().complete_interrupt(4)

    def test_masked_request_runs_after_unmask_and_complete(self):
        ic = InterruptController()
        ic.mask_interrupt(3, True)
        ic.raise_interrupt(0)
        ic.raise_interrupt(3)
        ic.mask_interrupt(3, False)
        d = ic.complete_interrupt(0)
        assert (d.kind, d.line) == (DecisionKind.DELIVER, 3)

    def test_mask_unmask_restores(self):
        ic = InterruptController()
        before = ic.snapshot()
        ic.mask_interrupt(4, True)
        ic.mask_interrupt(4, False)
        assert ic.snapshot() == before

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.sampled_from(["raise", "mask", "unmask", "complete"]),
                              st.integers(0, 7), st.integers(0, 1)), max_size=40))
    def test_matches_reference_queue(self, ops):
        ic, ref = InterruptController(8), RefController(8)
        for op, i, cpu_if in ops:
            if op == "raise":
                got, want = ic.raise_interrupt(i, cpu_if), ref.raise_(i, cpu_if)
            elif op in ("mask", "unmask"):
                ic.mask_interrupt(i, op == "mask")
                ref.mask(i, op == "mask")
                continue
            else:
                if not ref.in_service:
                    continue
                line = ref.in_service[-1]
                got, want = ic.complete_interrupt(line, cpu_if), ref.complete(line, cpu_if)
            assert (got.kind.value, got.line) == want
            assert ic.isr == set(ref.in_service)
            assert ic.irr == ref.pending


class TestClocks:
    def test_ticks_at_multiples(self):
        clocks = ClockBank(timer_period=10)
        events = clock_advance(clocks, 25)
        assert [e.time for e in events] == [10, 20]
        assert clocks.rt_value == 25 and clocks.timer_value == 5

    def test_no_alarm_when_disabled(self):
        clocks = ClockBank(timer_period=10)
        assert all(not e.alarm for e in clock_advance(clocks, 100))

    def test_alarm_counts_from_reset(self):
        clocks = ClockBank(timer_period=1000)
        clock_advance(clocks, 5)
        hp_timer_control(clocks, HpCommand.RESET)
        hp_timer_control(clocks, HpCommand.SET_ALARM, 7)
        events = clock_advance(clocks, 20)
        assert [(e.time, e.source) for e in events] == [(12, "alarm")]

    def test_reset_state(self):
        clocks = ClockBank(timer_period=10, rt_value=33)
        hp_timer_control(clocks, HpCommand.RESET)
        assert (clocks.hp_value, clocks.hp_alarm) == (0, LIMIT_PSU)

    def test_end_disables_alarm(self):
        clocks = ClockBank(timer_period=10)
        hp_timer_control(clocks, HpCommand.SET_ALARM, 5)
        hp_timer_control(clocks, HpCommand.END)
        assert clocks.alarm_due is None and clocks.hp_alarm == LIMIT_PSU

    def test_alarm_at_current_value_fires_next_step(self):
        clocks = ClockBank(timer_period=10)
        hp_timer_control(clocks, HpCommand.SET_ALARM, 0)
        assert [e.time for e in clock_advance(clocks, 5)] == [1]

    def test_coincident_alarm_merges_with_tick(self):
        clocks = ClockBank(timer_period=10)
        hp_timer_control(clocks, HpCommand.SET_ALARM, 10)
        events = clock_advance(clocks, 10)
        assert len(events) == 1 and events[0].source == "timer+alarm"

    def test_time_cannot_go_back(self):
        clocks = ClockBank(timer_period=10, rt_value=50)
        with pytest.raises(ValueError):
            clock_advance(clocks, 40)

    @given(st.integers(1, 50), st.integers(0, 400), st.integers(0, 400))
    def test_tick_count_formula(self, interval, t1, span):
        clocks = ClockBank(timer_period=interval)
        clock_advance(clocks, t1)
        events = clock_advance(clocks, t1 + span)
        assert [e.time for e in events] == ticks_between(t1, t1 + span, interval)
        assert len(events) == (t1 + span) // interval - t1 // interval
