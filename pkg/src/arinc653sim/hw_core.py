"""Simulated hardware: words, registers, MMU, main memory, clocks and the interrupt controller."""

from __future__ import annotations

import dataclasses
import enum
from collections.abc import Mapping
from dataclasses import dataclass, field

from .constants import CLOCK_TICK, LIMIT_PSU, WORD_BITS

# ---------------------------------------------------------------------------
# Words and two's complement


def to_word(value: int) -> int:
    """Wrap an integer into the unsigned machine-word range."""
    return value & LIMIT_PSU


def unsigned_to_bits(value: int, width: int = WORD_BITS) -> tuple[int, ...]:
    if not 0 <= value < (1 << width):
        raise ValueError(f"{value} does not fit in {width} unsigned bits")
    return tuple((value >> k) & 1 for k in range(width))


def bits_to_unsigned(bits: tuple[int, ...]) -> int:
    return sum(b << k for k, b in enumerate(bits))


def signed_to_bits(value: int, width: int = WORD_BITS) -> tuple[int, ...]:
    lo, hi = -(1 << (width - 1)), (1 << (width - 1)) - 1
    if not lo <= value <= hi:
        raise ValueError(f"{value} does not fit in {width} signed bits")
    return unsigned_to_bits(value & ((1 << width) - 1), width)


def bits_to_signed(bits: tuple[int, ...]) -> int:
    raw = bits_to_unsigned(bits)
    if bits and bits[-1]:
        return raw - (1 << len(bits))
    return raw


# ---------------------------------------------------------------------------
# CPU registers and contexts

PSW_FLAGS = ("CF", "PF", "AF", "ZF", "SF", "OF", "TF", "DF", "IF")


@dataclass(frozen=True)
class CpuRegisters:
    gp: tuple[int, ...] = (0,) * 16
    ss: int = 0
    sl: int = 0
    bp: int = 0
    sp: int = 0
    ds: int = 0
    dl: int = 0
    si: int = 0
    di: int = 0
    cs: int = 0
    cl: int = 0
    ip: int = 0
    flags: Mapping[str, int] = field(default_factory=lambda: {f: 0 for f in PSW_FLAGS})

    def __post_init__(self) -> None:
        for name in PSW_FLAGS:
            if self.flags.get(name, 0) not in (0, 1):
                raise ValueError(f"flag {name} must be 0 or 1")

    @classmethod
    def zero(cls, amount_gpr: int = 16) -> CpuRegisters:
        return cls(gp=(0,) * amount_gpr)

    def flag(self, name: str) -> int:
        return self.flags.get(name, 0)

    def with_flag(self, name: str, bit: int) -> CpuRegisters:
        flags = dict(self.flags)
        flags[name] = bit
        return dataclasses.replace(self, flags=flags)

    def replace(self, **changes) -> CpuRegisters:
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["gp"] = list(self.gp)
        out["flags"] = {k: self.flag(k) for k in PSW_FLAGS}
        return out


def save_part(regs: CpuRegisters) -> CpuRegisters:
    """Partial save: segment and pointer registers survive, general registers read as zero."""
    return regs.replace(gp=(0,) * len(regs.gp))


def save_all(regs: CpuRegisters) -> CpuRegisters:
    return regs


class PageTable:
    """Injective virtual-page to physical-page map."""

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[int, int] | None = None, page_size: int | None = None):
        data = dict(entries or {})
        if len(set(data.values())) != len(data):
            raise ValueError("page table is not injective")
        if page_size is not None:
            for k, v in data.items():
                if k % page_size or v % page_size:
                    raise ValueError(f"page table entry {k:#x}->{v:#x} not page aligned")
        self._entries = data

    def __getitem__(self, page: int) -> int:
        return self._entries[page]

    def __contains__(self, page: object) -> bool:
        return page in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PageTable) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"PageTable({len(self._entries)} entries)"

    def items(self):
        return self._entries.items()

    def values(self):
        return self._entries.values()

    def to_dict(self) -> dict[int, int]:
        return dict(self._entries)

    def merged(self, more: Mapping[int, int]) -> PageTable:
        data = dict(self._entries)
        data.update(more)
        return PageTable(data)

    def without(self, pages) -> PageTable:
        drop = set(pages)
        return PageTable({k: v for k, v in self._entries.items() if k not in drop})


EMPTY_PAGE_TABLE = PageTable()


@dataclass(frozen=True)
class Context:
    regs: CpuRegisters
    page_table: PageTable = EMPTY_PAGE_TABLE


def make_context(regs: CpuRegisters, page_table: PageTable) -> Context:
    return Context(regs, page_table)


# ---------------------------------------------------------------------------
# MMU and main memory


class FaultKind(enum.Enum):
    PAGE_FAULT = "PAGE_FAULT"
    ACCESS_VIOLATION = "ACCESS_VIOLATION"


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    address: int


def translate_address(
    pt: PageTable, seg: int, limit: int, offset: int, page_size: int = 4096
) -> int | Fault:
    if offset > limit:
        return Fault(FaultKind.ACCESS_VIOLATION, seg + offset)
    la = seg + offset
    off = la % page_size
    page = la - off
    if page not in pt:
        return Fault(FaultKind.PAGE_FAULT, la)
    return pt[page] + off


@dataclass(frozen=True)
class MainMemory:
    store: Mapping[int, int] = field(default_factory=dict)


def load_page(
    mem: MainMemory, page: int, piece: Mapping[int, int], page_size: int = 4096
) -> MainMemory:
    if page % page_size:
        raise ValueError(f"page {page:#x} not aligned to {page_size}")
    if len(piece) > page_size:
        raise ValueError("piece larger than one page")
    if not piece:
        return mem
    store = dict(mem.store)
    for addr, word in piece.items():
        store[page + addr % page_size] = to_word(word)
    return MainMemory(store)


def extract_page(mem: MainMemory, page: int, page_size: int = 4096) -> dict[int, int]:
    if page % page_size:
        raise ValueError(f"page {page:#x} not aligned to {page_size}")
    end = page + page_size
    return {a: w for a, w in mem.store.items() if page <= a < end}


# ---------------------------------------------------------------------------
# Interrupt controller


class DecisionKind(enum.Enum):
    DELIVER = "DELIVER"
    PEND = "PEND"
    NONE = "NONE"


@dataclass(frozen=True)
class DispatchDecision:
    kind: DecisionKind
    line: int | None = None


NO_DISPATCH = DispatchDecision(DecisionKind.NONE)


@dataclass
class InterruptController:
    """IRR/IMR/ISR bit sets for lines 0..amount_i-1; line 0 is the clock tick and has top priority."""

    amount_i: int = 8
    irr: set[int] = field(default_factory=set)
    imr: set[int] = field(default_factory=set)
    isr: set[int] = field(default_factory=set)

    def _check(self, i: int) -> None:
        if not 0 <= i < self.amount_i:
            raise ValueError(f"interrupt line {i} outside 0..{self.amount_i - 1}")

    def _resolve(self, i: int, cpu_if: int) -> DispatchDecision:
        if i in self.imr:
            return NO_DISPATCH
        if self.isr and min(self.isr) <= i:
            return NO_DISPATCH
        self.isr.add(i)
        self.irr.discard(i)
        return DispatchDecision(DecisionKind.DELIVER if cpu_if else DecisionKind.PEND, i)

    def raise_interrupt(self, i: int, cpu_if: int = 1) -> DispatchDecision:
        self._check(i)
        self.irr.add(i)
        if i != min(self.irr):
            return NO_DISPATCH
        return self._resolve(i, cpu_if)

    def complete_interrupt(self, i: int, cpu_if: int = 1) -> DispatchDecision:
        self._check(i)
        if i not in self.isr:
            raise ValueError(f"interrupt {i} is not in service")
        self.isr.discard(i)
        if self.isr or not self.irr:
            return NO_DISPATCH
        return self._resolve(min(self.irr), cpu_if)

    def mask_interrupt(self, i: int, on: bool) -> None:
        self._check(i)
        if on:
            self.imr.add(i)
        else:
            self.imr.discard(i)

    def snapshot(self) -> dict:
        return {"irr": sorted(self.irr), "imr": sorted(self.imr), "isr": sorted(self.isr)}


def raise_interrupt(ic: InterruptController, i: int, cpu_if: int = 1) -> DispatchDecision:
    return ic.raise_interrupt(i, cpu_if)


def complete_interrupt(ic: InterruptController, i: int, cpu_if: int = 1) -> DispatchDecision:
    return ic.complete_interrupt(i, cpu_if)


def mask_interrupt(ic: InterruptController, i: int, on: bool) -> InterruptController:
    ic.mask_interrupt(i, on)
    return ic


# ---------------------------------------------------------------------------
# Clocks


@dataclass(frozen=True)
class ClockEvent:
    time: int
    periodic: bool
    alarm: bool
    line: int = CLOCK_TICK

    @property
    def source(self) -> str:
        if self.periodic and self.alarm:
            return "timer+alarm"
        return "timer" if self.periodic else "alarm"


@dataclass
class ClockBank:
    """Real-time clock, periodic timer and high-precision timer sharing one time base.

    The high-precision value is kept as an offset from the real-time clock, so
    jumping rt forward moves it too. ``alarm_due`` is the absolute rt at which
    the programmed alarm matches.
    """

    timer_period: int = 1_000_000
    rt_value: int = 0
    hp_base: int = 0
    hp_alarm: int = LIMIT_PSU
    alarm_due: int | None = None

    def __post_init__(self) -> None:
        if self.timer_period <= 0:
            raise ValueError("timer period must be positive")

    @property
    def timer_value(self) -> int:
        return self.rt_value % self.timer_period

    @property
    def hp_value(self) -> int:
        return self.rt_value - self.hp_base

    def snapshot(self) -> dict:
        return {
            "rt_value": self.rt_value,
            "timer_value": self.timer_value,
            "timer_period": self.timer_period,
            "hp_value": self.hp_value,
            "hp_alarm": self.hp_alarm,
        }


class HpCommand(enum.Enum):
    RESET = "RESET"
    SET_ALARM = "SET_ALARM"
    END = "END"


def hp_timer_control(clocks: ClockBank, cmd: HpCommand, alarm: int | None = None) -> ClockBank:
    if cmd is HpCommand.RESET:
        clocks.hp_base = clocks.rt_value
        clocks.hp_alarm = LIMIT_PSU
        clocks.alarm_due = None
    elif cmd is HpCommand.END:
        clocks.hp_alarm = LIMIT_PSU
        clocks.alarm_due = None
    elif cmd is HpCommand.SET_ALARM:
        if alarm is None or not 0 <= alarm <= LIMIT_PSU:
            raise ValueError("SetAlarm needs a word-sized value")
        clocks.hp_alarm = alarm
        if alarm == LIMIT_PSU:
            clocks.alarm_due = None
        elif alarm > clocks.hp_value:
            clocks.alarm_due = clocks.rt_value + (alarm - clocks.hp_value)
        else:
            # Already passed: the next counter step performs the comparison.
            clocks.alarm_due = clocks.rt_value + 1
    else:
        raise ValueError(f"unknown command {cmd!r}")
    return clocks


def next_clock_event(clocks: ClockBank) -> ClockEvent:
    period = clocks.timer_period
    tick = (clocks.rt_value // period + 1) * period
    due = clocks.alarm_due
    if due is not None and due < tick:
        return ClockEvent(due, periodic=False, alarm=True)
    return ClockEvent(tick, periodic=True, alarm=due == tick)


def fire_clock_event(clocks: ClockBank, event: ClockEvent) -> None:
    """Move the clocks to ``event.time`` and consume the alarm if it fired."""
    if event.time < clocks.rt_value:
        raise ValueError("clock cannot move backwards")
    clocks.rt_value = event.time
    if event.alarm:
        clocks.alarm_due = None


def clock_advance(clocks: ClockBank, target_ns: int) -> list[ClockEvent]:
    if target_ns < clocks.rt_value:
        raise ValueError(f"time moving backwards: {target_ns} < {clocks.rt_value}")
    events = []
    while True:
        ev = next_clock_event(clocks)
        if ev.time > target_ns:
            break
        fire_clock_event(clocks, ev)
        events.append(ev)
    clocks.rt_value = target_ns
    return events
