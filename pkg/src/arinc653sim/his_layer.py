"""Hardware-interface software: paging, area allocator, process memory, system clock, interrupt handler."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .constants import CLOCK_TICK, DEFAULT_LIMITS, TIME_MAX, Limits
from .hw_core import (
    Context,
    CpuRegisters,
    DispatchDecision,
    InterruptController,
    MainMemory,
    PageTable,
    load_page,
)


class OutOfMemory(Exception):
    pass


# ---------------------------------------------------------------------------
# Page arithmetic


@dataclass(frozen=True)
class PageMath:
    page: int
    offset: int
    nextpage: int


def page_math(a: int, page_size: int = 4096) -> PageMath:
    off = a % page_size
    page = a - off
    return PageMath(page, off, page + page_size)


def pagecount(n: int, page_size: int = 4096) -> int:
    return (n + page_size - 1) // page_size


def sizecount(n: int, page_size: int = 4096) -> int:
    return pagecount(n, page_size) * page_size


def paging(seg: Sequence[int], page_size: int = 4096) -> list[dict[int, int]]:
    """Split a segment addressed 0..len-1 into per-page pieces keeping their original addresses."""
    pieces = []
    for i in range(pagecount(len(seg), page_size)):
        lo = i * page_size
        hi = min(lo + page_size, len(seg))
        pieces.append({a: seg[a] for a in range(lo, hi)})
    return pieces


# ---------------------------------------------------------------------------
# Memory blocks and the area allocator


@dataclass(frozen=True, order=True)
class MemoryBlock:
    start: int
    size: int

    @property
    def end(self) -> int:
        return self.start + self.size

    def pages(self, page_size: int = 4096) -> list[int]:
        return list(range(self.start, self.end, page_size))

    def contains(self, other: MemoryBlock) -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: MemoryBlock) -> bool:
        return self.size > 0 and other.size > 0 and self.start < other.end and other.start < self.end

    def as_dict(self) -> dict:
        return {"start": self.start, "size": self.size}


NULL_BLOCK = MemoryBlock(0, 0)


def totalpage(block: MemoryBlock, page_size: int = 4096) -> set[int]:
    return set(range(block.start, block.end, page_size))


def check_block(block: MemoryBlock, page_size: int) -> None:
    if block.size % page_size or block.start % page_size:
        raise ValueError(f"block {block} not page aligned")


@dataclass
class AreaMemoryManagement:
    memory: MemoryBlock
    page_size: int = 4096
    allocated: set[int] = field(default_factory=set)
    free: set[int] = field(default_factory=set)

    @classmethod
    def over(cls, memory: MemoryBlock, page_size: int = 4096) -> AreaMemoryManagement:
        check_block(memory, page_size)
        return cls(memory, page_size, set(), totalpage(memory, page_size))

    def consistent(self) -> bool:
        return not (self.allocated & self.free) and (self.allocated | self.free) == totalpage(
            self.memory, self.page_size
        )

    def free_runs(self) -> list[MemoryBlock]:
        runs: list[MemoryBlock] = []
        ps = self.page_size
        start = prev = None
        for p in sorted(self.free):
            if prev is not None and p == prev + ps:
                prev = p
                continue
            if start is not None:
                runs.append(MemoryBlock(start, prev + ps - start))
            start = prev = p
        if start is not None:
            runs.append(MemoryBlock(start, prev + ps - start))
        return runs

    def copy(self) -> AreaMemoryManagement:
        return AreaMemoryManagement(self.memory, self.page_size, set(self.allocated), set(self.free))


def alloc_pages(area: AreaMemoryManagement, n: int) -> set[int]:
    if n < 0:
        raise ValueError("negative page count")
    if len(area.free) < n:
        raise OutOfMemory(f"{n} pages requested, {len(area.free)} free")
    chosen = set(sorted(area.free)[:n])
    area.free -= chosen
    area.allocated |= chosen
    return chosen


def alloc_block(area: AreaMemoryManagement, size: int) -> MemoryBlock:
    if size <= 0 or size % area.page_size:
        raise ValueError(f"block size {size} is not a positive page multiple")
    for run in area.free_runs():
        if run.size >= size:
            block = MemoryBlock(run.start, size)
            pages = totalpage(block, area.page_size)
            area.free -= pages
            area.allocated |= pages
            return block
    raise OutOfMemory(f"no contiguous run of {size} bytes")


def dealloc_pages(area: AreaMemoryManagement, pages: Iterable[int]) -> None:
    pages = set(pages)
    if not pages <= area.allocated:
        raise ValueError("deallocating pages that are not allocated")
    area.allocated -= pages
    area.free |= pages


def max_free_block(area: AreaMemoryManagement) -> MemoryBlock:
    best = NULL_BLOCK
    for run in area.free_runs():
        if run.size > best.size:
            best = run
    return best


# ---------------------------------------------------------------------------
# Process virtual memory


@dataclass(frozen=True)
class ExeFile:
    data: bytes = b""
    code: bytes = b""


@dataclass
class ProcessVirtualMemory:
    memory: MemoryBlock
    base: frozenset[int]
    page_table: PageTable
    stack: MemoryBlock
    data: MemoryBlock
    code: MemoryBlock


def create_process_virtual_memory(
    base: Iterable[int],
    stack_size: int,
    data_size: int,
    code_size: int,
    limits: Limits = DEFAULT_LIMITS,
) -> ProcessVirtualMemory:
    ps = limits.page_size
    for s in (stack_size, data_size, code_size):
        if s < 0 or s % ps:
            raise ValueError(f"segment size {s} is not a page multiple")
    base = frozenset(base)
    total = stack_size + data_size + code_size
    if len(base) * ps != total:
        raise ValueError(f"{len(base)} base pages do not match {total} bytes of segments")
    if total > limits.process_vas_size:
        raise ValueError("process image exceeds the process address space")
    start = limits.process_vas_start
    stack = MemoryBlock(start, stack_size)
    data = MemoryBlock(stack.end, data_size) if data_size else NULL_BLOCK
    code = MemoryBlock(stack.end + data_size, code_size)
    return ProcessVirtualMemory(MemoryBlock(start, total), base, PageTable(), stack, data, code)


def full_load_process_pages(
    mem: MainMemory,
    pvm: ProcessVirtualMemory,
    entrypoint: int,
    exefile: ExeFile,
    page_size: int = 4096,
) -> tuple[PageTable, MainMemory]:
    """Map every virtual page onto the base pages (lowest to lowest) and copy data and code in."""
    if not pvm.code.start <= entrypoint < pvm.code.end:
        raise ValueError(f"entry point {entrypoint:#x} outside the code block")
    if len(exefile.data) > pvm.data.size or len(exefile.code) > pvm.code.size:
        raise ValueError("executable file does not fit its segments")
    vpages = sorted(totalpage(pvm.memory, page_size))
    pt = PageTable(dict(zip(vpages, sorted(pvm.base))), page_size)
    vstart = pvm.memory.start
    stack_pages = pagecount(pvm.stack.size, page_size)
    data_pages = pagecount(pvm.data.size, page_size)
    for seg, slide in ((exefile.data, stack_pages), (exefile.code, stack_pages + data_pages)):
        for i, piece in enumerate(paging(seg, page_size)):
            mem = load_page(mem, pt[vstart + (slide + i) * page_size], piece, page_size)
    return pt, mem


# ---------------------------------------------------------------------------
# System clock


@dataclass
class SystemClockState:
    base_time: int = 0
    tick_interval: int = 1_000_000
    time: int = -2_000_000
    interrupt_time: int = TIME_MAX
    tick_counter: int = 0


def system_clock_init(base: int, tick_interval: int) -> SystemClockState:
    return SystemClockState(base, tick_interval, -2 * tick_interval, TIME_MAX, 0)


def system_clock_tick(s: SystemClockState) -> SystemClockState:
    s.time += s.tick_interval
    s.tick_counter += 1
    return s


def capture_interrupt_time(s: SystemClockState, hp: int) -> SystemClockState:
    s.interrupt_time = hp
    return s


def isr_clock_tick(s: SystemClockState, hpt: int) -> bool:
    """Record the high-precision reading; only a reading on a tick boundary advances system time."""
    capture_interrupt_time(s, hpt)
    if hpt % s.tick_interval == 0:
        system_clock_tick(s)
        return True
    return False


# ---------------------------------------------------------------------------
# Interrupt handler


SERVICE_ROUTINES = {CLOCK_TICK: "ISR_ClockTick"}


@dataclass
class InterruptHandlerState:
    kernel_page_table: PageTable
    interrupt_stack: MemoryBlock
    temp_contexts: list[Context] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.temp_contexts)


@dataclass(frozen=True)
class HandlerDispatch:
    routine: str
    depth: int
    cpu: Context
    nested: bool


def enter_interrupt(ihs: InterruptHandlerState, i: int, current: Context) -> HandlerDispatch:
    if i not in SERVICE_ROUTINES:
        raise ValueError(f"no service routine for interrupt {i}")
    saved = current
    ihs.temp_contexts.insert(0, saved)
    regs = current.regs.with_flag("IF", 0)
    if regs.ss != ihs.interrupt_stack.start:
        regs = regs.replace(
            ss=ihs.interrupt_stack.start, sl=ihs.interrupt_stack.size, bp=0, sp=0
        )
        nested = False
    else:
        regs = regs.replace(sp=regs.sp + 1)
        nested = True
    cpu = Context(regs.with_flag("IF", 1), ihs.kernel_page_table)
    return HandlerDispatch(SERVICE_ROUTINES[i], ihs.depth, cpu, nested)


class ExitKind(enum.Enum):
    RESUME = "RESUME"
    INVOKE_KERNEL = "INVOKE_KERNEL"


@dataclass(frozen=True)
class ExitAction:
    kind: ExitKind
    context: Context | None
    follow_up: DispatchDecision


def exit_interrupt(ihs: InterruptHandlerState, ic: InterruptController, i: int) -> ExitAction:
    """Complete ``i``; a nested return pops the outer context, a first-level return hands over to the kernel."""
    if ihs.depth == 0:
        raise RuntimeError("exit_interrupt with no saved context")
    follow = ic.complete_interrupt(i)
    if ihs.depth > 1:
        return ExitAction(ExitKind.RESUME, ihs.temp_contexts.pop(0), follow)
    return ExitAction(ExitKind.INVOKE_KERNEL, None, follow)


def interrupted_context(ihs: InterruptHandlerState) -> Context:
    if not ihs.temp_contexts:
        raise RuntimeError("no interrupted context")
    return ihs.temp_contexts[0]


def finish_kernel_invocation(ihs: InterruptHandlerState) -> Context:
    """Drop the first-level saved context once the kernel has restored or claimed it."""
    if ihs.depth != 1:
        raise RuntimeError(f"kernel invocation at depth {ihs.depth}")
    return ihs.temp_contexts.pop(0)


def initial_registers(limits: Limits) -> CpuRegisters:
    return CpuRegisters.zero(limits.amount_gpr)

