"""Per-partition kernel: process table, queues, time counters, process scheduling and system calls."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol

from .constants import (
    DEFAULT_LIMITS,
    DEFAULT_PRIORITY,
    DEFAULT_TIME,
    IDLE_PROCESS_ID,
    IDLE_PROCESS_NAME,
    NULL_PROCESS_ID,
    DeadlineKind,
    Limits,
    OperatingMode,
    ProcessKind,
    ProcessState,
    in_time_range,
)
from .hw_core import Context, CpuRegisters, MainMemory, PageTable, save_part
from .his_layer import (
    NULL_BLOCK,
    AreaMemoryManagement,
    ExeFile,
    MemoryBlock,
    OutOfMemory,
    ProcessVirtualMemory,
    alloc_block,
    alloc_pages,
    create_process_virtual_memory,
    full_load_process_pages,
    max_free_block,
    pagecount,
    sizecount,
)


class KernelError(Exception):
    """A call the model leaves undefined (bad caller, empty context stack, ...)."""


# ---------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class ProcessAttributes:
    name: str
    kind: ProcessKind = ProcessKind.APERIODIC
    stack_size: int = 4096
    base_priority: int = 1
    period: int = -1
    time_capacity: int = -1
    deadline: DeadlineKind = DeadlineKind.SOFT
    entry_point: int | None = None
    exe_path: str = ""
    swap_path: str = ""


@dataclass
class ProcessControlBlock:
    name: str
    kind: ProcessKind
    exe_path: str
    swap_path: str
    entry_point: int
    kernel_stack: MemoryBlock
    virtual_memory: ProcessVirtualMemory | None
    period: int
    time_capacity: int
    deadline: DeadlineKind
    base_priority: int
    current_priority: int
    release_point: int
    deadline_time: int
    state: ProcessState
    stack_size: int = 0
    user_temp_context: list[Context] = field(default_factory=list)
    kernel_temp_context: list[Context] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.kernel_temp_context)


def bootstrap_context(limits: Limits) -> Context:
    return Context(CpuRegisters.zero(limits.amount_gpr).with_flag("IF", 1), PageTable())


def idle_pcb(limits: Limits = DEFAULT_LIMITS) -> ProcessControlBlock:
    return ProcessControlBlock(
        name=IDLE_PROCESS_NAME,
        kind=ProcessKind.APERIODIC,
        exe_path="",
        swap_path="",
        entry_point=0,
        kernel_stack=NULL_BLOCK,
        virtual_memory=None,
        period=-1,
        time_capacity=-1,
        deadline=DeadlineKind.SOFT,
        base_priority=DEFAULT_PRIORITY,
        current_priority=DEFAULT_PRIORITY,
        release_point=DEFAULT_TIME,
        deadline_time=DEFAULT_TIME,
        state=ProcessState.READY,
        kernel_temp_context=[bootstrap_context(limits)],
    )


@dataclass(frozen=True)
class TimeCounter:
    pid: int
    alarm: int


@dataclass(frozen=True)
class PartitionKernelConfig:
    memory: MemoryBlock
    period: int
    duration: int
    total_process: int


# ---------------------------------------------------------------------------
# Pure queue operations


def enq_ready_head(queue: Sequence[int], pid: int) -> list[int]:
    return [pid, *queue]


def enq_ready_tail(queue: Sequence[int], pid: int) -> list[int]:
    return [*queue, pid]


def deq(queue: Sequence[int], pid: int) -> list[int]:
    return [p for p in queue if p != pid]


enq_waiting = enq_ready_tail
deq_ready = deq
deq_waiting = deq


def time_counter_enq(queue: Sequence[TimeCounter], pid: int, alarm: int) -> list[TimeCounter]:
    if any(tc.pid == pid for tc in queue):
        raise KernelError(f"process {pid} already has a time counter")
    key = abs(alarm)
    cut = 0
    while cut < len(queue) and abs(queue[cut].alarm) <= key:
        cut += 1
    return [*queue[:cut], TimeCounter(pid, alarm), *queue[cut:]]


def time_counter_deq(queue: Sequence[TimeCounter], pid: int) -> list[TimeCounter]:
    return [tc for tc in queue if tc.pid != pid]


def alarm_of(queue: Sequence[TimeCounter], pid: int) -> int:
    for tc in queue:
        if tc.pid == pid:
            return tc.alarm
    raise KernelError(f"process {pid} has no time counter")


def turn_over(queue: Sequence[TimeCounter], pid: int) -> list[TimeCounter]:
    alarm_of(queue, pid)
    return [TimeCounter(tc.pid, -tc.alarm) if tc.pid == pid else tc for tc in queue]


def update_time_counter_queue(
    queue: Sequence[TimeCounter], hpt: int
) -> tuple[list[int], list[TimeCounter]]:
    """Drop the expired prefix; only counters still positive release their owner."""
    cut = 0
    while cut < len(queue) and abs(queue[cut].alarm) <= hpt:
        cut += 1
    released = [tc.pid for tc in queue[:cut] if tc.alarm > 0]
    return released, list(queue[cut:])


def align_time_counters(queue: Sequence[TimeCounter], period: int) -> list[TimeCounter]:
    """Rebase window-relative alarms onto the next window of the same partition.

    Magnitudes shrink by one period; a turned-over counter keeps its sign and
    never reaches zero, so it cannot be mistaken for a releasable one.
    """
    out = []
    for tc in queue:
        if tc.alarm > 0:
            out.append(TimeCounter(tc.pid, max(tc.alarm - period, 0)))
        else:
            out.append(TimeCounter(tc.pid, -max(-tc.alarm - period, 1)))
    return out


def check_release_points(table: dict[int, ProcessControlBlock], t: int) -> list[int]:
    return sorted(pid for pid, pcb in table.items() if pid != IDLE_PROCESS_ID and pcb.release_point == t)


def get_highest_priority(table: dict[int, ProcessControlBlock], ready: Sequence[int]) -> int:
    if not ready:
        raise KernelError("highest priority of an empty ready queue")
    return max(abs(table[p].current_priority) for p in ready)


# ---------------------------------------------------------------------------
# Kernel bus: everything the partition kernel asks of the core and hardware


class KernelBus(Protocol):
    limits: Limits

    def cpu_context(self) -> Context: ...
    def set_cpu_context(self, ctx: Context) -> None: ...
    def claim_interrupted_context(self) -> Context: ...
    def hp_reset(self) -> None: ...
    def hp_end(self) -> None: ...
    def hp_set_alarm(self, alarm: int) -> None: ...
    def hp_time(self) -> int: ...
    def system_time(self) -> int: ...
    def interrupt_time(self) -> int: ...
    def kernel_page_table(self) -> PageTable: ...
    def load_process(self, pvm: ProcessVirtualMemory, entry: int, exe: ExeFile) -> PageTable: ...
    def get_operating_mode(self) -> OperatingMode: ...
    def set_operating_mode(self, mode: OperatingMode) -> None: ...
    def get_partition_status(self) -> dict: ...
    def get_lock_level(self) -> int: ...
    def reset_lock_level(self) -> int: ...
    def increase_lock_level(self) -> int: ...
    def decrease_lock_level(self) -> int: ...
    def get_next_periodic_start(self, ct: int) -> int: ...
    def get_delayed_periodic_start(self, ct: int, dt: int) -> int: ...
    def trace(self, category: str, **fields: Any) -> None: ...
    def health_monitor(self, pid: int, reason: str) -> None: ...
    def notify(self, pid: int, event: str) -> None: ...


@dataclass
class Dispatch:
    pid: int
    reason: str


# Calls that never return to the caller, so there is no return step.
NON_RETURNING = frozenset({"SET_OPERATING_MODE", "STOP_SELF"})


class PartitionKernel:
    def __init__(self, pid: int, cfg: PartitionKernelConfig, bus: KernelBus):
        self.partition_id = pid
        self.cfg = cfg
        self.bus = bus
        self.limits = bus.limits
        if cfg.total_process + 1 > self.limits.process_number_limit:
            raise KernelError("total_process + 1 exceeds the process number limit")
        if cfg.memory.size <= 0:
            raise KernelError("partition memory must be non-empty")
        self.errored_process = NULL_PROCESS_ID
        self.dispatch_log: list[Dispatch] = []
        self.reset()

    # -- state -------------------------------------------------------------

    def reset(self) -> None:
        self.memory = AreaMemoryManagement.over(self.cfg.memory, self.limits.page_size)
        self.process_table: dict[int, ProcessControlBlock] = {IDLE_PROCESS_ID: idle_pcb(self.limits)}
        self.time_counters: list[TimeCounter] = []
        self.ready_queue: list[int] = []
        self.waiting_queue: list[int] = []
        self.current = NULL_PROCESS_ID
        self.errored_process = NULL_PROCESS_ID
        self.notes: dict[int, str] = {}

    @property
    def total_process(self) -> int:
        return self.cfg.total_process

    @property
    def period(self) -> int:
        return self.cfg.period

    def pcb(self, pid: int) -> ProcessControlBlock:
        try:
            return self.process_table[pid]
        except KeyError:
            raise KernelError(f"unknown process {pid} in partition {self.partition_id}") from None

    def mode(self) -> OperatingMode:
        return self.bus.get_operating_mode()

    def is_timing(self, pid: int) -> bool:
        return any(tc.pid == pid for tc in self.time_counters)

    def pid_by_name(self, name: str) -> int | None:
        for pid, pcb in self.process_table.items():
            if pcb.name == name:
                return pid
        return None

    def ct(self) -> int:
        return self.bus.system_time() + self.bus.hp_time() % self.limits.clock_tick_interval

    # -- time counters with alarm side effects ----------------------------

    def _program_alarm(self) -> None:
        if self.mode() is not OperatingMode.NORMAL:
            return
        if self.time_counters:
            self.bus.hp_set_alarm(abs(self.time_counters[0].alarm))
        else:
            self.bus.hp_end()

    def add_time_counter(self, pid: int, alarm: int) -> None:
        self.time_counters = time_counter_enq(self.time_counters, pid, alarm)
        if self.time_counters[0].pid == pid:
            self._program_alarm()

    def remove_time_counter(self, pid: int) -> None:
        was_head = bool(self.time_counters) and self.time_counters[0].pid == pid
        self.time_counters = time_counter_deq(self.time_counters, pid)
        if was_head:
            self._program_alarm()

    def update_time_counters(self, hpt: int) -> list[int]:
        released, self.time_counters = update_time_counter_queue(self.time_counters, hpt)
        timed_out = [
            p for p in released if self.pcb(p).current_priority > 0 and self.pcb(p).depth > 1
        ]
        self._make_ready(released)
        for p in timed_out:
            self.notes[p] = "timed_out"
            self.bus.notify(p, "time_out_expired")
        self._program_alarm()
        return released

    def _make_ready(self, pids: Iterable[int]) -> None:
        for p in pids:
            pcb = self.pcb(p)
            pcb.state = ProcessState.READY
            pcb.current_priority = abs(pcb.current_priority)
            if p not in self.ready_queue:
                self.ready_queue.append(p)

    # -- dispatching -------------------------------------------------------

    def _push_cpu(self, pid: int) -> None:
        if pid == NULL_PROCESS_ID:
            return
        self.pcb(pid).kernel_temp_context.insert(0, self.bus.cpu_context())

    def schedule_process(self, pid: int, reason: str) -> None:
        pcb = self.pcb(pid)
        if not pcb.kernel_temp_context:
            raise KernelError(f"dispatching process {pid} with an empty context stack")
        if pid != IDLE_PROCESS_ID:
            idle = self.process_table[IDLE_PROCESS_ID]
            if idle.state is ProcessState.RUNNING:
                idle.state = ProcessState.READY
        self.current = pid
        self.bus.set_cpu_context(pcb.kernel_temp_context.pop(0))
        pcb.state = ProcessState.RUNNING
        self.dispatch_log.append(Dispatch(pid, reason))
        self.bus.trace("SCHED", partition=self.partition_id, pid=pid, name=pcb.name,
                       prio=pcb.current_priority, reason=reason)

    def schedule_ready_process(self, hp: int, reason: str) -> None:
        table = self.process_table
        queue = [p for p in self.ready_queue if table[p].current_priority == hp]
        queue += [p for p in self.ready_queue if table[p].current_priority == -hp]
        if not queue:
            raise KernelError(f"no ready process at priority {hp}")
        pid = queue[0]
        self.ready_queue = deq(self.ready_queue, pid)
        table[pid].current_priority = abs(table[pid].current_priority)
        self.schedule_process(pid, reason)

    def must_scheduling(self, reason: str) -> None:
        if not self.ready_queue:
            self.schedule_process(IDLE_PROCESS_ID, reason)
            return
        self.schedule_ready_process(get_highest_priority(self.process_table, self.ready_queue), reason)

    def _idle_yields(self) -> bool:
        """The idle process steps aside whenever anything is ready."""
        if self.current == IDLE_PROCESS_ID and self.ready_queue:
            self.process_table[IDLE_PROCESS_ID].state = ProcessState.READY
            return True
        return False

    def general_scheduling(self) -> None:
        cur = self.current
        self._push_cpu(cur)
        pcb = self.pcb(cur)
        if pcb.state is not ProcessState.RUNNING:
            if not self.ready_queue:
                self.schedule_process(IDLE_PROCESS_ID, "general-idle")
            else:
                self.must_scheduling("general-must")
            return
        if self._idle_yields():
            self.must_scheduling("general-must")
            return
        if not self.ready_queue:
            pcb.current_priority = abs(pcb.current_priority)
            self.schedule_process(cur, "general-keep")
            return
        self.need_scheduling()

    def need_scheduling(self) -> None:
        cur = self.current
        pcb = self.pcb(cur)
        hp = get_highest_priority(self.process_table, self.ready_queue)
        prio = pcb.current_priority
        if abs(prio) > hp:
            pcb.current_priority = abs(prio)
            self.schedule_process(cur, "need-keep")
        elif abs(prio) == hp:
            if prio > 0:
                self.schedule_process(cur, "need-keep")
            else:
                pcb.current_priority = abs(prio)
                pcb.state = ProcessState.READY
                self.ready_queue = enq_ready_tail(self.ready_queue, cur)
                self.schedule_ready_process(hp, "need-rotate")
        elif prio > 0:
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_head(self.ready_queue, cur)
            self.schedule_ready_process(hp, "need-preempt")
        else:
            pcb.current_priority = abs(prio)
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_tail(self.ready_queue, cur)
            self.schedule_ready_process(hp, "need-demote")

    def special_scheduling(self, pid: int) -> None:
        self._push_cpu(self.current)
        self.ready_queue = deq(self.ready_queue, pid)
        self.schedule_process(pid, "specific")

    def check_scheduling_condition(self) -> None:
        if self.bus.get_lock_level() == self.limits.min_lock_level:
            self.general_scheduling()

    # -- partition control (window boundaries) ----------------------------

    def prepare_execution(self) -> None:
        self.bus.hp_reset()
        pid = IDLE_PROCESS_ID if self.current == NULL_PROCESS_ID else self.current
        self.schedule_process(pid, "prepare")

    def idle_execution(self) -> None:
        self.schedule_process(IDLE_PROCESS_ID, "idle-mode")

    def start_execution(self, t: int) -> None:
        released = [
            p for p in check_release_points(self.process_table, t)
            if self.pcb(p).state is ProcessState.WAITING and p not in self.ready_queue
        ]
        self._make_ready(released)
        self.time_counters = align_time_counters(self.time_counters, self.period)
        self.bus.hp_reset()
        self.update_time_counters(0)
        cur = self.current
        if self.bus.get_lock_level() > self.limits.min_lock_level or not self.ready_queue:
            self.schedule_process(cur, "window-keep")
            return
        if cur == IDLE_PROCESS_ID:
            self.process_table[IDLE_PROCESS_ID].state = ProcessState.READY
            self.must_scheduling("window-must")
            return
        hp = get_highest_priority(self.process_table, self.ready_queue)
        pcb = self.pcb(cur)
        if hp > abs(pcb.current_priority) and pcb.current_priority > 0:
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_head(self.ready_queue, cur)
            self.schedule_ready_process(hp, "window-preempt")
        else:
            self.schedule_process(cur, "window-keep")

    def continue_execution(self) -> bool:
        """Returns True when the interrupted context was claimed by a switch."""
        if self.mode() is not OperatingMode.NORMAL:
            return False
        self.update_time_counters(self.bus.interrupt_time())
        if self.bus.get_lock_level() > self.limits.min_lock_level or not self.ready_queue:
            return False
        cur = self.current
        if cur == IDLE_PROCESS_ID:
            self._claim_into(cur)
            self.process_table[IDLE_PROCESS_ID].state = ProcessState.READY
            self.must_scheduling("tick-must")
            return True
        hp = get_highest_priority(self.process_table, self.ready_queue)
        pcb = self.pcb(cur)
        if hp > abs(pcb.current_priority) and pcb.current_priority > 0:
            self._claim_into(cur)
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_head(self.ready_queue, cur)
            self.schedule_ready_process(hp, "tick-preempt")
            return True
        return False

    def _claim_into(self, pid: int) -> None:
        self.pcb(pid).kernel_temp_context.insert(0, self.bus.claim_interrupted_context())

    def suspend_execution(self) -> None:
        self.bus.hp_end()
        self._claim_into(IDLE_PROCESS_ID if self.current == NULL_PROCESS_ID else self.current)
        if self.current == NULL_PROCESS_ID:
            self.current = IDLE_PROCESS_ID

    # -- mode transitions --------------------------------------------------

    def _all_dormant(self) -> None:
        self.time_counters = []
        self.ready_queue = []
        self.waiting_queue = []
        for pid, pcb in self.process_table.items():
            if pid != IDLE_PROCESS_ID:
                pcb.state = ProcessState.DORMANT

    def terminate_partition(self) -> None:
        self.bus.hp_end()
        self._all_dormant()
        self.schedule_process(IDLE_PROCESS_ID, "terminate")

    def cold_start_partition(self) -> None:
        self.bus.hp_end()
        self.reset()
        self.schedule_process(IDLE_PROCESS_ID, "cold-start")

    def warm_start_partition(self) -> None:
        self.bus.hp_end()
        self._all_dormant()
        self.schedule_process(IDLE_PROCESS_ID, "warm-start")

    def launch_partition(self) -> None:
        ct = self.ct()
        hpt = self.bus.hp_time()
        for pid in list(self.ready_queue):
            self._update_started(pid, ct)
        for pid in [tc.pid for tc in self.time_counters]:
            self._update_delayed_started(pid, ct, hpt)
        if self.total_process in self.process_table:
            self.bus.trace("SCHED", partition=self.partition_id, pid=self.total_process,
                           reason="error-handler-enabled")
        self._program_alarm()
        self.must_scheduling("launch")

    def _update_started(self, pid: int, ct: int) -> None:
        pcb = self.pcb(pid)
        if pcb.kind is ProcessKind.PERIODIC:
            self.ready_queue = deq(self.ready_queue, pid)
            nps = self.bus.get_next_periodic_start(ct)
            if in_time_range(nps + pcb.time_capacity):
                pcb.release_point = nps
                pcb.deadline_time = nps + pcb.time_capacity
            else:
                self.invoke_health_monitor(pid, "deadline-overflow")
        elif in_time_range(ct + pcb.time_capacity):
            pcb.state = ProcessState.READY
            pcb.release_point = ct
            pcb.deadline_time = ct + pcb.time_capacity
        else:
            self.ready_queue = deq(self.ready_queue, pid)
            self.invoke_health_monitor(pid, "deadline-overflow")

    def _update_delayed_started(self, pid: int, ct: int, hpt: int) -> None:
        pcb = self.pcb(pid)
        alarm = alarm_of(self.time_counters, pid)
        self.time_counters = time_counter_deq(self.time_counters, pid)
        delay = abs(alarm)
        if pcb.kind is ProcessKind.PERIODIC:
            dps = self.bus.get_delayed_periodic_start(ct, delay)
            if in_time_range(dps + pcb.time_capacity):
                pcb.release_point = dps
                pcb.deadline_time = dps + pcb.time_capacity
            else:
                self.invoke_health_monitor(pid, "deadline-overflow")
            return
        if in_time_range(ct + delay + pcb.time_capacity):
            sign = 1 if alarm > 0 else -1
            self.time_counters = time_counter_enq(self.time_counters, pid, sign * (hpt + delay))
            pcb.release_point = ct + delay
            pcb.deadline_time = ct + delay + pcb.time_capacity
        else:
            self.invoke_health_monitor(pid, "deadline-overflow")

    def invoke_health_monitor(self, pid: int, reason: str) -> None:
        self.ready_queue = deq(self.ready_queue, pid)
        self.waiting_queue = deq(self.waiting_queue, pid)
        self.time_counters = time_counter_deq(self.time_counters, pid)
        self.pcb(pid).state = ProcessState.DORMANT
        self.errored_process = pid
        self.bus.health_monitor(pid, reason)

    # -- system call entry -------------------------------------------------

    def syscall(self, caller: int, name: str, *args: Any) -> Any:
        pcb = self.pcb(caller)
        routine = getattr(self, "sc_" + name.lower(), None)
        if routine is None:
            raise KernelError(f"unknown system call {name}")
        cpu = self.bus.cpu_context()
        pcb.kernel_temp_context.insert(0, Context(save_part(cpu.regs), cpu.page_table))
        ks = pcb.kernel_stack
        self.bus.set_cpu_context(Context(
            cpu.regs.replace(ss=ks.start, sl=ks.size, bp=0, sp=0), self.bus.kernel_page_table()
        ))
        self.bus.trace("SYSCALL", partition=self.partition_id, pid=caller, call=name,
                       args=",".join(_fmt(a) for a in args))
        return routine(caller, *args)

    def syscall_return(self, caller: int) -> str | None:
        """Restore the caller's saved context; hands back any wake-up note left for it."""
        pcb = self.pcb(caller)
        if not pcb.kernel_temp_context:
            raise KernelError(f"system call return for {caller} with no saved context")
        self.bus.set_cpu_context(pcb.kernel_temp_context.pop(0))
        return self.notes.pop(caller, None)

    # -- partition services ------------------------------------------------

    def sc_get_operating_mode(self, caller):
        return self.mode()

    def sc_get_partition_status(self, caller):
        return self.bus.get_partition_status()

    def sc_set_operating_mode(self, caller, mode: OperatingMode):
        self.bus.set_operating_mode(mode)
        if mode is OperatingMode.IDLE:
            self.terminate_partition()
        elif mode is OperatingMode.COLD_START:
            self.cold_start_partition()
        elif mode is OperatingMode.WARM_START:
            self.warm_start_partition()
        else:
            self.launch_partition()

    # -- process services --------------------------------------------------

    def app_ids(self) -> list[int]:
        return [p for p in range(1, self.total_process) if p in self.process_table]

    def sc_get_process_names(self, caller):
        return {pcb.name: pid for pid, pcb in self.process_table.items() if pid != IDLE_PROCESS_ID}

    def sc_get_process_ids(self, caller):
        return self.app_ids()

    def sc_get_free_process_ids(self, caller):
        return [p for p in range(1, self.total_process) if p not in self.process_table]

    def sc_get_free_space(self, caller):
        return len(self.memory.free) * self.limits.page_size, max_free_block(self.memory).size

    def sc_get_partition_period(self, caller):
        return self.period

    def sc_get_process_state(self, caller, pid):
        return self.pcb(pid).state

    def sc_get_process_kind(self, caller, pid):
        return self.pcb(pid).kind

    def sc_get_process_period(self, caller, pid):
        return self.pcb(pid).period

    def sc_get_process_time_capacity(self, caller, pid):
        return self.pcb(pid).time_capacity

    def sc_get_next_periodic_start(self, caller, ct):
        return self.bus.get_next_periodic_start(ct)

    def sc_get_delayed_periodic_start(self, caller, ct, dt):
        return self.bus.get_delayed_periodic_start(ct, dt)

    def sc_get_partition_lock_level(self, caller):
        return self.bus.get_lock_level()

    def sc_get_process_id(self, caller, name):
        pid = self.pid_by_name(name)
        return NULL_PROCESS_ID if pid is None else pid

    def sc_get_process_status(self, caller, pid):
        return process_status(self.pcb(pid))

    def sc_get_errored_process(self, caller):
        return self.errored_process

    def sc_create_process(self, caller, attrs: ProcessAttributes, exe: ExeFile):
        """Returns the new id, or None when memory or ids run out (nothing is changed then)."""
        ps = self.limits.page_size
        if attrs.kind is ProcessKind.ERROR_HANDLER:
            pid = self.total_process
            if pid in self.process_table:
                return None
        else:
            free = self.sc_get_free_process_ids(caller)
            if not free:
                return None
            pid = free[0]
        data_size = sizecount(len(exe.data), ps)
        code_size = max(sizecount(len(exe.code), ps), ps)
        stack_size = sizecount(attrs.stack_size, ps)
        staged = self.memory.copy()
        try:
            kblock = alloc_block(staged, self.limits.kernel_stack_size)
            base = alloc_pages(staged, pagecount(stack_size + data_size + code_size, ps))
        except OutOfMemory:
            return None
        pvm = create_process_virtual_memory(base, stack_size, data_size, code_size, self.limits)
        entry = pvm.code.start if attrs.entry_point is None else attrs.entry_point
        if not pvm.code.start <= entry < pvm.code.end:
            return None
        pvm.page_table = self.bus.load_process(pvm, entry, exe)
        self.memory = staged
        kernel_stack = MemoryBlock(self.limits.kernel_vas_start + kblock.start, kblock.size)
        self.process_table[pid] = ProcessControlBlock(
            name=attrs.name,
            kind=attrs.kind,
            exe_path=attrs.exe_path,
            swap_path=attrs.swap_path,
            entry_point=entry,
            kernel_stack=kernel_stack,
            virtual_memory=pvm,
            period=attrs.period,
            time_capacity=attrs.time_capacity,
            deadline=attrs.deadline,
            base_priority=attrs.base_priority,
            current_priority=DEFAULT_PRIORITY,
            release_point=DEFAULT_TIME,
            deadline_time=DEFAULT_TIME,
            state=ProcessState.DORMANT,
            stack_size=stack_size,
        )
        return pid

    def sc_set_priority(self, caller, pid, p):
        pcb = self.pcb(pid)
        cur = pcb.current_priority
        if p == cur:
            return
        if pid == caller:
            if p > cur:
                pcb.current_priority = p
            else:
                pcb.current_priority = -p
                self.check_scheduling_condition()
        elif p > cur:
            pcb.current_priority = p
            self.check_scheduling_condition()
        else:
            pcb.current_priority = p

    def sc_suspend_self(self, caller, hpt, delta):
        pcb = self.pcb(caller)
        self.notes.pop(caller, None)
        if delta == 0:
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_tail(self.ready_queue, caller)
        elif delta < 0:
            pcb.state = ProcessState.WAITING
        else:
            pcb.state = ProcessState.WAITING
            self.add_time_counter(caller, hpt + delta)
        self.general_scheduling()

    def sc_suspend(self, caller, pid) -> bool:
        pcb = self.pcb(pid)
        if pid in self.ready_queue:
            self.ready_queue = deq(self.ready_queue, pid)
            pcb.state = ProcessState.WAITING
            return True
        if pcb.current_priority < 0 or not self.is_timing(pid):
            return False
        if pcb.depth == 1:
            self.time_counters = turn_over(self.time_counters, pid)
            return True
        return False

    def sc_resume(self, caller, pid):
        pcb = self.pcb(pid)
        if pid in self.waiting_queue:
            return
        if not self.is_timing(pid):
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_tail(self.ready_queue, pid)
            self.check_scheduling_condition()
            return
        if pcb.current_priority < 0:
            return
        if pcb.depth > 1:
            self.remove_time_counter(pid)
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_tail(self.ready_queue, pid)
            self.notes[pid] = "resumed"
            self.bus.notify(pid, "suspended_process_get_resumed")
            self.check_scheduling_condition()
        elif alarm_of(self.time_counters, pid) < 0:
            self.time_counters = turn_over(self.time_counters, pid)

    def sc_stop_self(self, caller):
        if caller == IDLE_PROCESS_ID:
            self.bus.trace("FAULT", partition=self.partition_id, kind="IDLE_STOP_SELF")
            self.syscall_return(caller)
            return
        pcb = self.pcb(caller)
        pcb.state = ProcessState.DORMANT
        self.ready_queue = deq(self.ready_queue, caller)
        self.time_counters = time_counter_deq(self.time_counters, caller)
        if pcb.kind is not ProcessKind.ERROR_HANDLER:
            self.bus.reset_lock_level()
            self.general_scheduling()
            return
        errored = self.errored_process
        if self.bus.get_lock_level() == self.limits.min_lock_level:
            self.general_scheduling()
        elif errored in self.process_table and self.pcb(errored).state is not ProcessState.DORMANT:
            self.special_scheduling(errored)
        else:
            self.general_scheduling()

    def sc_stop(self, caller, pid):
        pcb = self.pcb(pid)
        if self.pcb(caller).kind is ProcessKind.ERROR_HANDLER and pid == self.errored_process:
            self.ready_queue = deq(self.ready_queue, pid)
            self.waiting_queue = deq(self.waiting_queue, pid)
            self.remove_time_counter(pid)
        elif pcb.state is ProcessState.READY:
            self.ready_queue = deq(self.ready_queue, pid)
        elif pcb.state is ProcessState.WAITING:
            self.waiting_queue = deq(self.waiting_queue, pid)
            self.ready_queue = deq(self.ready_queue, pid)
            if self.is_timing(pid):
                self.remove_time_counter(pid)
        pcb.state = ProcessState.DORMANT

    def _fresh_start(self, pcb: ProcessControlBlock) -> None:
        pcb.current_priority = pcb.base_priority
        vm = pcb.virtual_memory
        regs = CpuRegisters.zero(self.limits.amount_gpr).replace(
            ip=pcb.entry_point,
            ss=vm.stack.start, sl=vm.stack.size, sp=vm.stack.size, bp=vm.stack.size,
            ds=vm.data.start, dl=vm.data.size,
            cs=vm.code.start, cl=vm.code.size,
        ).with_flag("IF", 1)
        pcb.kernel_temp_context = [Context(regs, vm.page_table)]

    def sc_start(self, caller, pid, rp, dt):
        self._start(pid, rp, 0, dt)

    def sc_delayed_start(self, caller, pid, rp, delta, dt):
        self._start(pid, rp, delta, dt)

    def _start(self, pid, rp, delta, dt) -> None:
        pcb = self.pcb(pid)
        self._fresh_start(pcb)
        if self.mode() is not OperatingMode.NORMAL:
            pcb.state = ProcessState.WAITING
            if delta == 0:
                self.ready_queue = enq_ready_tail(self.ready_queue, pid)
            else:
                self.add_time_counter(pid, delta)
            return
        if pcb.kind is ProcessKind.PERIODIC:
            pcb.state = ProcessState.WAITING
            pcb.release_point = rp
            pcb.deadline_time = dt
            return
        pcb.deadline_time = dt
        if delta == 0:
            pcb.state = ProcessState.READY
            pcb.release_point = rp
            self.ready_queue = enq_ready_tail(self.ready_queue, pid)
            self.check_scheduling_condition()
        else:
            pcb.state = ProcessState.WAITING
            pcb.release_point = rp + delta
            self.add_time_counter(pid, self.bus.hp_time() + delta)

    def sc_lock_preemption(self, caller):
        return self.bus.increase_lock_level()

    def sc_unlock_preemption(self, caller):
        ll = self.bus.decrease_lock_level()
        if ll == self.limits.min_lock_level:
            self.general_scheduling()
        return ll

    def sc_get_my_id(self, caller):
        return caller

    # -- time services -----------------------------------------------------

    def sc_get_current_time(self, caller):
        return self.ct()

    def sc_get_partition_time(self, caller):
        return self.bus.hp_time()

    def sc_get_time(self, caller):
        return self.bus.system_time()

    def sc_get_next_release_point(self, caller, pid):
        pcb = self.pcb(pid)
        return pcb.release_point + pcb.period

    def sc_timed_wait(self, caller, hpt, delta):
        pcb = self.pcb(caller)
        pcb.current_priority = -pcb.current_priority
        if delta == 0:
            pcb.state = ProcessState.READY
            self.ready_queue = enq_ready_tail(self.ready_queue, caller)
        else:
            pcb.state = ProcessState.WAITING
            self.add_time_counter(caller, hpt + delta)
        self.general_scheduling()

    def sc_periodic_wait(self, caller, rp, dt):
        pcb = self.pcb(caller)
        pcb.state = ProcessState.WAITING
        pcb.release_point = rp
        pcb.deadline_time = dt
        self.general_scheduling()

    def sc_replenish(self, caller, ct, delta):
        pcb = self.pcb(caller)
        if delta < 0:
            pcb.deadline_time = delta
        elif delta > 0:
            pcb.deadline_time = ct + delta

    # -- dumps -------------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "current_process": self.current,
            "ready_queue": list(self.ready_queue),
            "waiting_queue": list(self.waiting_queue),
            "time_counters": [[tc.pid, tc.alarm] for tc in self.time_counters],
            "free_pages": len(self.memory.free),
            "allocated_pages": len(self.memory.allocated),
            "processes": {str(pid): pcb_snapshot(pcb) for pid, pcb in sorted(self.process_table.items())},
        }


def process_status(pcb: ProcessControlBlock) -> dict:
    return {
        "deadline_time": pcb.deadline_time,
        "current_priority": pcb.current_priority,
        "process_state": pcb.state.value,
        "attributes": {
            "name": pcb.name,
            "kind": pcb.kind.value,
            "period": pcb.period,
            "time_capacity": pcb.time_capacity,
            "stack_size": pcb.stack_size,
            "base_priority": pcb.base_priority,
            "deadline": pcb.deadline.value,
            "entry_point": pcb.entry_point,
        },
    }


def pcb_snapshot(pcb: ProcessControlBlock) -> dict:
    vm = pcb.virtual_memory
    out = {
        "name": pcb.name,
        "kind": pcb.kind.value,
        "state": pcb.state.value,
        "base_priority": pcb.base_priority,
        "current_priority": pcb.current_priority,
        "period": pcb.period,
        "time_capacity": pcb.time_capacity,
        "release_point": pcb.release_point,
        "deadline_time": pcb.deadline_time,
        "kernel_stack": pcb.kernel_stack.as_dict(),
        "context_depth": pcb.depth,
    }
    if vm is not None:
        out["base_pages"] = sorted(vm.base)
    return out


def _fmt(value: Any) -> str:
    if hasattr(value, "value") and not isinstance(value, (int, str)):
        return str(value.value)
    if isinstance(value, ProcessAttributes):
        return value.name
    if isinstance(value, ExeFile):
        return f"exe[{len(value.data)}+{len(value.code)}]"
    return str(value)



class LocalBus:
    """Self-contained bus for driving one partition kernel without the engine."""

    def __init__(self, limits: Limits = DEFAULT_LIMITS, mode: OperatingMode = OperatingMode.NORMAL):
        self.limits = limits
        self.mode = mode
        self.lock_level = limits.min_lock_level
        self.cpu = bootstrap_context(limits)
        self.interrupted = bootstrap_context(limits)
        self.hp = 0
        self.alarm: int | None = None
        self.now = 0
        self.irq_time = 0
        self.memory = MainMemory()
        self.periodic_start = 0
        self.events: list[tuple[str, dict]] = []

    def cpu_context(self) -> Context:
        return self.cpu

    def set_cpu_context(self, ctx: Context) -> None:
        self.cpu = ctx

    def claim_interrupted_context(self) -> Context:
        return self.interrupted

    def hp_reset(self) -> None:
        self.hp = 0
        self.alarm = None

    def hp_end(self) -> None:
        self.alarm = None

    def hp_set_alarm(self, alarm: int) -> None:
        self.alarm = alarm

    def hp_time(self) -> int:
        return self.hp

    def system_time(self) -> int:
        return self.now

    def interrupt_time(self) -> int:
        return self.irq_time

    def kernel_page_table(self) -> PageTable:
        return PageTable()

    def load_process(self, pvm: ProcessVirtualMemory, entry: int, exe: ExeFile) -> PageTable:
        pt, self.memory = full_load_process_pages(self.memory, pvm, entry, exe, self.limits.page_size)
        return pt

    def get_operating_mode(self) -> OperatingMode:
        return self.mode

    def set_operating_mode(self, mode: OperatingMode) -> None:
        self.mode = mode
        if mode in (OperatingMode.IDLE, OperatingMode.NORMAL):
            self.lock_level = self.limits.min_lock_level
        else:
            self.lock_level = self.limits.max_lock_level

    def get_partition_status(self) -> dict:
        return {"operating_mode": self.mode.value, "lock_level": self.lock_level}

    def get_lock_level(self) -> int:
        return self.lock_level

    def reset_lock_level(self) -> int:
        self.lock_level = self.limits.min_lock_level
        return self.lock_level

    def increase_lock_level(self) -> int:
        self.lock_level = min(self.lock_level + 1, self.limits.max_lock_level)
        return self.lock_level

    def decrease_lock_level(self) -> int:
        self.lock_level = max(self.lock_level - 1, self.limits.min_lock_level)
        return self.lock_level

    def get_next_periodic_start(self, ct: int) -> int:
        return max(self.periodic_start, ct)

    def get_delayed_periodic_start(self, ct: int, dt: int) -> int:
        return max(self.periodic_start, ct + dt)

    def trace(self, category: str, **fields: Any) -> None:
        self.events.append((category, fields))

    def health_monitor(self, pid: int, reason: str) -> None:
        self.events.append(("HM", {"pid": pid, "reason": reason}))

    def notify(self, pid: int, event: str) -> None:
        self.events.append(("NOTIFY", {"pid": pid, "event": event}))
