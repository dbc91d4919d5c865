"""Module-level kernel: configuration checks, boot, major time frame and partition scheduling."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .config import ModuleConfig, Violation
from .constants import (
    IDLE_PROCESS_ID,
    NULL_PARTITION_ID,
    TIME_MAX,
    Limits,
    OperatingMode,
    ProcessState,
    StartCondition,
)
from .hw_core import PageTable
from .his_layer import AreaMemoryManagement, MemoryBlock, alloc_block, totalpage
from .partition_kernel import ProcessControlBlock, idle_pcb


class ConfigError(Exception):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass
class PartitionControlBlock:
    name: str
    memory: MemoryBlock
    period: int
    duration: int
    lock_level: int
    operating_mode: OperatingMode
    start_condition: StartCondition


@dataclass(frozen=True)
class Window:
    partition_id: int
    period: int
    duration: int
    offset: int
    periodic_start: bool

    @property
    def end(self) -> int:
        return self.offset + self.duration


@dataclass(frozen=True)
class MajorTimeFrame:
    windows: tuple[Window, ...]
    length: int


@dataclass
class CoreKernelState:
    limits: Limits
    memory_management: AreaMemoryManagement
    kernel_page_table: PageTable
    process_table: dict[int, ProcessControlBlock]
    current_process: int
    partitions: dict[int, PartitionControlBlock]
    frame: MajorTimeFrame
    current_partition: int = NULL_PARTITION_ID
    interrupt_stack: MemoryBlock | None = None


# ---------------------------------------------------------------------------
# Configuration checks


def build_frame(cfg: ModuleConfig) -> MajorTimeFrame:
    """Lay windows out in sequence order: a new partition follows the previous window,
    a repeated partition lands one of its own periods after its last window."""
    windows: list[Window] = []
    last_of: dict[int, Window] = {}
    for entry in cfg.schedule:
        pid = cfg.partition_id(entry.partition)
        part = cfg.partition(pid)
        if not windows:
            offset = 0
        elif pid in last_of:
            offset = last_of[pid].offset + last_of[pid].period
        else:
            offset = windows[-1].end
        w = Window(pid, part.period, part.duration, offset, entry.periodic_start)
        windows.append(w)
        last_of[pid] = w
    length = max(p.period for p in cfg.partitions)
    return MajorTimeFrame(tuple(windows), length)


def validate_module_config(cfg: ModuleConfig) -> list[Violation]:
    out: list[Violation] = []
    lim = cfg.limits
    ps = lim.page_size
    tick = lim.clock_tick_interval

    def bad(predicate: str, message: str) -> None:
        out.append(Violation(predicate, message))

    for problem in lim.problems():
        bad("limits", problem)
    if out:
        return out

    phys, kmem, image = cfg.physical_memory, cfg.kernel_memory, cfg.kernel_image
    for label, block in (("physical memory", phys), ("kernel memory", kmem), ("kernel image", image)):
        if block.start % ps or block.size % ps:
            bad("page_alignment", f"{label} {block} is not page aligned")
    if phys.start != 0:
        bad("physical_memory_at_zero", f"physical memory starts at {phys.start:#x}")
    if kmem.start != 0:
        bad("kernel_memory_at_zero", f"kernel memory starts at {kmem.start:#x}")
    if not (kmem.start < image.start and image.end < kmem.end):
        bad("kernel_image_inside_kernel_memory", f"image {image} not strictly inside {kmem}")
    if not kmem.size < phys.size:
        bad("kernel_smaller_than_physical", "kernel memory must be smaller than physical memory")
    if phys.size > lim.kernel_vas_size:
        bad("physical_within_kernel_space", "physical memory exceeds the kernel address space")
    largest_gap = max(image.start - kmem.start, kmem.end - image.end)
    if lim.interrupt_stack_size > largest_gap:
        bad("interrupt_stack_fits", "no room for the interrupt stack in kernel memory")

    parts = cfg.partitions
    if not parts:
        bad("partition_count", "at least one partition is required")
        return out
    if len(parts) > lim.partition_number_limit:
        bad("partition_count", f"{len(parts)} partitions exceed {lim.partition_number_limit}")
    names = [p.name for p in parts]
    for name in sorted({n for n in names if names.count(n) > 1}):
        bad("unique_partition_names", f"partition name {name!r} repeated")

    for p in parts:
        m = p.memory
        if m.size <= 0:
            bad("partition_memory_nonempty", f"{p.name} has no memory")
        if m.start % ps or m.size % ps:
            bad("page_alignment", f"{p.name} memory {m} is not page aligned")
        if m.overlaps(kmem):
            bad("partition_memory_disjoint", f"{p.name} memory overlaps kernel memory")
        if not phys.contains(m):
            bad("partition_memory_in_physical", f"{p.name} memory lies outside physical memory")
        if not 0 < p.duration <= p.period:
            bad("periodicity_range", f"{p.name} needs 0 < duration <= period")
        if p.period % tick or p.duration % tick:
            bad("tick_multiple", f"{p.name} period and duration must be multiples of {tick}")
        if p.total_process < 1 or p.total_process + 1 > lim.process_number_limit:
            bad("process_number_limit", f"{p.name} total_process {p.total_process} out of range")
    for i, a in enumerate(parts):
        for b in parts[i + 1:]:
            if a.memory.overlaps(b.memory):
                bad("partition_memory_disjoint", f"{a.name} and {b.name} memories overlap")
            if a.period > 0 and b.period > 0:
                hi, lo = max(a.period, b.period), min(a.period, b.period)
                if hi % lo:
                    bad("harmonic_periods", f"{a.name} ({a.period}) and {b.name} ({b.period})")
    covered = sum(p.memory.size for p in parts) + kmem.size
    if covered != phys.size:
        bad("memory_coverage", f"kernel and partitions cover {covered} of {phys.size} bytes")

    if not cfg.schedule:
        bad("schedule_nonempty", "the operation sequence is empty")
    unknown = sorted({w.partition for w in cfg.schedule} - set(names))
    for name in unknown:
        bad("sequence_names_known", f"schedule names unknown partition {name!r}")
    if out:
        return out

    frame = build_frame(cfg)
    ordered = sorted(frame.windows, key=lambda w: w.offset)
    for w in ordered:
        if w.offset < 0 or w.end > frame.length:
            name = cfg.partition(w.partition_id).name
            bad("window_within_frame", f"{name} window [{w.offset}, {w.end}) exceeds frame {frame.length}")
    for a, b in zip(ordered, ordered[1:]):
        if a.end > b.offset:
            bad("windows_non_overlapping", f"windows at {a.offset} and {b.offset} overlap")
    return out


# ---------------------------------------------------------------------------
# Boot


def init_core_kernel(cfg: ModuleConfig) -> CoreKernelState:
    violations = validate_module_config(cfg)
    if violations:
        raise ConfigError(violations)
    lim = cfg.limits
    ps = lim.page_size
    kernel_mm = AreaMemoryManagement.over(cfg.kernel_memory, ps)
    image_pages = totalpage(cfg.kernel_image, ps)
    kernel_mm.free -= image_pages
    kernel_mm.allocated |= image_pages
    kpt = PageTable({lim.kernel_vas_start + p: p for p in range(0, cfg.physical_memory.size, ps)})
    idle = idle_pcb(lim)
    partitions = {
        pid: PartitionControlBlock(
            p.name, p.memory, p.period, p.duration, lim.min_lock_level,
            OperatingMode.IDLE, StartCondition.NORMAL_START,
        )
        for pid, p in enumerate(cfg.partitions, start=1)
    }
    return CoreKernelState(
        limits=lim,
        memory_management=kernel_mm,
        kernel_page_table=kpt,
        process_table={IDLE_PROCESS_ID: idle},
        current_process=IDLE_PROCESS_ID,
        partitions=partitions,
        frame=build_frame(cfg),
    )


def allocate_interrupt_stack(state: CoreKernelState) -> MemoryBlock:
    block = alloc_block(state.memory_management, state.limits.interrupt_stack_size)
    state.interrupt_stack = block
    return block


def boot_kernel_idle(state: CoreKernelState) -> None:
    idle = state.process_table[IDLE_PROCESS_ID]
    idle.kernel_temp_context = []
    idle.state = ProcessState.RUNNING
    state.current_process = IDLE_PROCESS_ID


# ---------------------------------------------------------------------------
# Partition scheduling


def get_next_partition(frame: MajorTimeFrame, t: int) -> int:
    r = t % frame.length
    for w in frame.windows:
        if w.offset <= r < w.end:
            return w.partition_id
    return NULL_PARTITION_ID


class ActionKind(enum.Enum):
    CONTINUE = "CONTINUE"
    SWITCH = "SWITCH"


@dataclass(frozen=True)
class SchedulingAction:
    kind: ActionKind
    suspend: int = NULL_PARTITION_ID
    resume: int = NULL_PARTITION_ID
    resume_mode: OperatingMode | None = None


def partition_scheduler_step(state: CoreKernelState, t: int) -> SchedulingAction:
    nxt = get_next_partition(state.frame, t)
    cur = state.current_partition
    if nxt == cur:
        return SchedulingAction(ActionKind.CONTINUE, cur, cur,
                                state.partitions[cur].operating_mode if cur else None)
    state.current_partition = nxt
    mode = state.partitions[nxt].operating_mode if nxt else None
    return SchedulingAction(ActionKind.SWITCH, cur, nxt, mode)


# ---------------------------------------------------------------------------
# Core services offered to partition kernels


def partition_status(state: CoreKernelState, partid: int) -> dict:
    pcb = _partition(state, partid)
    return {
        "identifier": partid,
        "period": pcb.period,
        "duration": pcb.duration,
        "lock_level": pcb.lock_level,
        "operating_mode": pcb.operating_mode.value,
        "start_condition": pcb.start_condition.value,
    }


def _partition(state: CoreKernelState, partid: int) -> PartitionControlBlock:
    try:
        return state.partitions[partid]
    except KeyError:
        raise KeyError(f"unknown partition {partid}") from None


def set_operating_mode(state: CoreKernelState, partid: int, mode: OperatingMode) -> None:
    pcb = _partition(state, partid)
    pcb.operating_mode = mode
    if mode in (OperatingMode.IDLE, OperatingMode.NORMAL):
        pcb.lock_level = state.limits.min_lock_level
    else:
        pcb.lock_level = state.limits.max_lock_level


def next_periodic_start(state: CoreKernelState, partid: int, threshold: int) -> int:
    """Earliest flagged window start of ``partid`` at or after ``threshold``."""
    frame = state.frame
    best = None
    for w in frame.windows:
        if w.partition_id != partid or not w.periodic_start:
            continue
        n = max(0, -((w.offset - threshold) // frame.length))
        start = w.offset + n * frame.length
        if best is None or start < best:
            best = start
    if best is None or best > TIME_MAX:
        return TIME_MAX
    return best


def get_next_periodic_start(state: CoreKernelState, partid: int, ct: int) -> int:
    return next_periodic_start(state, partid, ct)


def get_delayed_periodic_start(state: CoreKernelState, partid: int, ct: int, dt: int) -> int:
    return next_periodic_start(state, partid, ct + dt)


def get_lock_level(state: CoreKernelState, partid: int) -> int:
    return _partition(state, partid).lock_level


def reset_lock_level(state: CoreKernelState, partid: int) -> int:
    pcb = _partition(state, partid)
    pcb.lock_level = state.limits.min_lock_level
    return pcb.lock_level


def increase_lock_level(state: CoreKernelState, partid: int) -> tuple[int, bool]:
    """Returns the new level and whether the request was clamped at the maximum."""
    pcb = _partition(state, partid)
    if pcb.lock_level >= state.limits.max_lock_level:
        return pcb.lock_level, True
    pcb.lock_level += 1
    return pcb.lock_level, False


def decrease_lock_level(state: CoreKernelState, partid: int) -> tuple[int, bool]:
    pcb = _partition(state, partid)
    if pcb.lock_level <= state.limits.min_lock_level:
        return pcb.lock_level, True
    pcb.lock_level -= 1
    return pcb.lock_level, False


@dataclass
class CoreServices:
    """Table-driven front door: ``call(partid, "GetLockLevel")`` and friends."""

    state: CoreKernelState
    calls: dict = field(init=False)

    def __post_init__(self) -> None:
        self.calls = {
            "GetOperatingMode": lambda pid: _partition(self.state, pid).operating_mode,
            "GetPartitionStatus": lambda pid: partition_status(self.state, pid),
            "SetOperatingMode": lambda pid, m: set_operating_mode(self.state, pid, m),
            "GetNextPeriodicStart": lambda pid, ct: get_next_periodic_start(self.state, pid, ct),
            "GetDelayedPeriodicStart": lambda pid, ct, dt: get_delayed_periodic_start(self.state, pid, ct, dt),
            "GetLockLevel": lambda pid: get_lock_level(self.state, pid),
            "ResetLockLevel": lambda pid: reset_lock_level(self.state, pid),
            "IncreaseLockLevel": lambda pid: increase_lock_level(self.state, pid),
            "DecreaseLockLevel": lambda pid: decrease_lock_level(self.state, pid),
        }

    def call(self, partid: int, name: str, *args):
        if partid not in self.state.partitions:
            raise KeyError(f"unknown partition {partid}")
        return self.calls[name](partid, *args)


def core_service(state: CoreKernelState, partid: int, call: str, *args):
    return CoreServices(state).call(partid, call, *args)

