from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arinc653sim.constants import DEFAULT_LIMITS, TIME_MAX
from arinc653sim.his_layer import (
    AreaMemoryManagement,
    ExeFile,
    ExitKind,
    InterruptHandlerState,
    MemoryBlock,
    OutOfMemory,
    alloc_block,
    alloc_pages,
    create_process_virtual_memory,
    dealloc_pages,
    enter_interrupt,
    exit_interrupt,
    finish_kernel_invocation,
    full_load_process_pages,
    interrupted_context,
    isr_clock_tick,
    max_free_block,
    page_math,
    pagecount,
    paging,
    sizecount,
    system_clock_init,
    totalpage,
)
from arinc653sim.hw_core import Context, CpuRegisters, InterruptController, MainMemory, PageTable
from oracles import system_time_after

PAGE = 4096


def test_page_math():
    pm = page_math(3 * PAGE + 17)
    assert (pm.page, pm.offset, pm.nextpage) == (3 * PAGE, 17, 4 * PAGE)


@pytest.mark.parametrize("n, pages", [(0, 0), (1, 1), (PAGE, 1), (PAGE + 1, 2)])
def test_pagecount(n, pages):
    assert pagecount(n) == pages
    assert sizecount(n) == pages * PAGE


def test_paging_keeps_addresses():
    pieces = paging(list(range(PAGE + 3)))
    assert len(pieces) == 2
    assert sorted(pieces[1]) == [PAGE, PAGE + 1, PAGE + 2]


class TestAllocator:
    def test_over_starts_all_free(self):
        area = AreaMemoryManagement.over(MemoryBlock(0, 8 * PAGE))
        assert area.allocated == set() and len(area.free) == 8 and area.consistent()

    def test_unaligned_memory_rejected(self):
        with pytest.raises(ValueError):
            AreaMemoryManagement.over(MemoryBlock(100, PAGE))

    def test_out_of_memory(self):
        area = AreaMemoryManagement.over(MemoryBlock(0, 2 * PAGE))
        with pytest.raises(OutOfMemory):
            alloc_pages(area, 3)

    def test_block_needs_contiguous_run(self):
        area = AreaMemoryManagement.over(MemoryBlock(0, 4 * PAGE))
        alloc_pages(area, 4)
        dealloc_pages(area, {0, 2 * PAGE})
        with pytest.raises(OutOfMemory):
            alloc_block(area, 2 * PAGE)
        assert max_free_block(area).size == PAGE

    def test_max_free_block_on_full_area(self):
        area = AreaMemoryManagement.over(MemoryBlock(0, PAGE))
        alloc_pages(area, 1)
        assert max_free_block(area).size == 0

    def test_dealloc_unknown_rejected(self):
        area = AreaMemoryManagement.over(MemoryBlock(0, PAGE))
        with pytest.raises(ValueError):
            dealloc_pages(area, {0})

    @settings(max_examples=150)
    @given(st.lists(st.tuples(st.sampled_from(["pages", "block", "free"]), st.integers(1, 6)), max_size=30))
    def test_conservation(self, ops):
        area = AreaMemoryManagement.over(MemoryBlock(4 * PAGE, 32 * PAGE))
        held: list[set[int]] = []
        for op, n in ops:
            try:
                if op == "pages":
                    held.append(alloc_pages(area, n))
                elif op == "block":
                    b = alloc_block(area, n * PAGE)
                    assert b.start % PAGE == 0 and area.memory.contains(b)
                    held.append(totalpage(b))
                elif held:
                    dealloc_pages(area, held.pop(n % len(held)))
            except OutOfMemory:
                pass
            assert area.consistent()
            assert area.allocated == set().union(set(), *held)
            biggest = max_free_block(area)
            assert totalpage(biggest) <= area.free


class TestProcessMemory:
    def test_layout(self):
        pvm = create_process_virtual_memory(range(0, 4 * PAGE, PAGE), PAGE, PAGE, 2 * PAGE)
        start = DEFAULT_LIMITS.process_vas_start
        assert pvm.stack == MemoryBlock(start, PAGE)
        assert pvm.data == MemoryBlock(start + PAGE, PAGE)
        assert pvm.code == MemoryBlock(start + 2 * PAGE, 2 * PAGE)

    def test_empty_data_segment_is_null(self):
        pvm = create_process_virtual_memory({0, PAGE}, PAGE, 0, PAGE)
        assert pvm.data.size == 0

    def test_base_page_count_must_match(self):
        with pytest.raises(ValueError):
            create_process_virtual_memory({0}, PAGE, 0, PAGE)

    def test_full_load_maps_and_copies(self):
        base = [40 * PAGE, 41 * PAGE, 42 * PAGE]
        pvm = create_process_virtual_memory(base, PAGE, PAGE, PAGE)
        pt, mem = full_load_process_pages(MainMemory(), pvm, pvm.code.start, ExeFile(b"\x05", b"\x09\x08"))
        assert sorted(pt.values()) == base
        assert mem.store == {41 * PAGE: 5, 42 * PAGE: 9, 42 * PAGE + 1: 8}

    def test_entry_point_outside_code(self):
        pvm = create_process_virtual_memory({0, PAGE}, PAGE, 0, PAGE)
        with pytest.raises(ValueError):
            full_load_process_pages(MainMemory(), pvm, pvm.stack.start, ExeFile())


class TestSystemClock:
    def test_init(self):
        s = system_clock_init(0, 1000)
        assert (s.time, s.interrupt_time, s.tick_counter) == (-2000, TIME_MAX, 0)

    def test_off_boundary_reading_only_records(self):
        s = system_clock_init(0, 1000)
        assert isr_clock_tick(s, 1500) is False
        assert (s.time, s.interrupt_time) == (-2000, 1500)

    @given(st.integers(1, 10_000), st.integers(0, 60))
    def test_time_after_k_ticks(self, interval, k):
        s = system_clock_init(0, interval)
        for i in range(1, k + 1):
            assert isr_clock_tick(s, i * interval)
        assert s.time == system_time_after(k, interval) == -2 * interval + k * interval


class TestInterruptHandler:
    def _state(self):
        return InterruptHandlerState(PageTable({0: 0}), MemoryBlock(64 * PAGE, 4 * PAGE))

    def test_first_level_switches_stack(self):
        ihs = self._state()
        outer = Context(CpuRegisters(ss=5, sp=9).with_flag("IF", 1))
        hd = enter_interrupt(ihs, 0, outer)
        assert not hd.nested and hd.depth == 1
        assert hd.cpu.regs.ss == 64 * PAGE and hd.cpu.regs.flag("IF") == 1
        assert interrupted_context(ihs) == outer

    def test_nested_entry_stays_on_stack(self):
        ihs = self._state()
        first = enter_interrupt(ihs, 0, Context(CpuRegisters()))
        second = enter_interrupt(ihs, 0, first.cpu)
        assert second.nested and second.depth == 2

    def test_unknown_line(self):
        with pytest.raises(ValueError):
            enter_interrupt(self._state(), 3, Context(CpuRegisters()))

    def test_exit_paths(self):
        ihs, ic = self._state(), InterruptController()
        ic.raise_interrupt(1)
        outer = Context(CpuRegisters(ss=1))
        first = enter_interrupt(ihs, 0, outer)
        enter_interrupt(ihs, 0, first.cpu)
        ic.raise_interrupt(0)
        nested_exit = exit_interrupt(ihs, ic, 0)
        assert nested_exit.kind is ExitKind.RESUME and nested_exit.context == first.cpu
        top = exit_interrupt(ihs, ic, 1)
        assert top.kind is ExitKind.INVOKE_KERNEL
        assert finish_kernel_invocation(ihs) == outer and ihs.depth == 0

    def test_exit_without_entry(self):
        with pytest.raises(RuntimeError):
            exit_interrupt(self._state(), InterruptController(), 0)
