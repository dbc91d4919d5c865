"""State predicates checked between engine steps; each violation carries a stable predicate name."""

from __future__ import annotations

from collections.abc import Mapping

from ..config import Violation
from ..constants import (
    IDLE_PROCESS_ID,
    NULL_PARTITION_ID,
    NULL_PROCESS_ID,
    ProcessKind,
    ProcessState,
)
from ..core_kernel import CoreKernelState
from ..his_layer import AreaMemoryManagement, InterruptHandlerState, MemoryBlock, totalpage
from ..partition_kernel import PartitionKernel


def _allocator(area: AreaMemoryManagement, label: str, out: list[Violation]) -> None:
    if area.allocated & area.free:
        out.append(Violation("allocator_conservation", f"{label}: pages both free and allocated"))
    if (area.allocated | area.free) != totalpage(area.memory, area.page_size):
        out.append(Violation("allocator_conservation", f"{label}: pages escaped the managed block"))


def check_core(core: CoreKernelState, ihs: InterruptHandlerState | None = None) -> list[Violation]:
    out: list[Violation] = []
    lim = core.limits
    parts = sorted(core.partitions.items())
    for i, (a, pa) in enumerate(parts):
        if not 0 < pa.duration <= pa.period:
            out.append(Violation("periodicity_range", f"partition {a}"))
        if not lim.min_lock_level <= pa.lock_level <= lim.max_lock_level:
            out.append(Violation("lock_level_range", f"partition {a} at {pa.lock_level}"))
        for b, pb in parts[i + 1:]:
            if pa.memory.overlaps(pb.memory):
                out.append(Violation("partition_memory_disjoint", f"partitions {a} and {b}"))
    running = [p for p, pcb in core.process_table.items() if pcb.state is ProcessState.RUNNING]
    if len(running) > 1 or any(p != core.current_process for p in running):
        out.append(Violation("core_single_running", f"running kernel processes {running}"))
    if core.current_partition != NULL_PARTITION_ID and core.current_partition not in core.partitions:
        out.append(Violation("core_current_partition", f"unknown partition {core.current_partition}"))
    _allocator(core.memory_management, "kernel memory", out)
    if ihs is not None and ihs.depth:
        out.append(Violation("interrupt_depth_quiescent", f"{ihs.depth} saved contexts between steps"))
    return out


def check_partition(k: PartitionKernel, active: bool = False) -> list[Violation]:
    out: list[Violation] = []
    lim = k.limits
    label = f"partition {k.partition_id}"
    table = k.process_table
    total = k.total_process

    def bad(name: str, msg: str) -> None:
        out.append(Violation(name, f"{label}: {msg}"))

    if IDLE_PROCESS_ID not in table:
        bad("idle_present", "idle process missing")
    for pid, pcb in table.items():
        if not 0 <= pid <= total:
            bad("process_id_range", f"id {pid} outside 0..{total}")
        if (pcb.kind is ProcessKind.ERROR_HANDLER) != (pid == total):
            bad("error_handler_id", f"process {pid} of kind {pcb.kind.value}")

    live = [(pid, pcb) for pid, pcb in sorted(table.items()) if pid != IDLE_PROCESS_ID]
    stacks: list[tuple[int, MemoryBlock]] = []
    bases: dict[int, frozenset[int]] = {}
    for pid, pcb in live:
        ks = pcb.kernel_stack
        if ks.size != lim.kernel_stack_size:
            bad("kernel_stack_shape", f"process {pid} kernel stack size {ks.size}")
        kvas = MemoryBlock(lim.kernel_vas_start, lim.kernel_vas_size)
        if not kvas.contains(ks):
            bad("kernel_stack_shape", f"process {pid} kernel stack outside the kernel address space")
        stacks.append((pid, ks))
        if pcb.virtual_memory is not None:
            bases[pid] = pcb.virtual_memory.base
    for i, (a, sa) in enumerate(stacks):
        for b, sb in stacks[i + 1:]:
            if sa.overlaps(sb):
                bad("kernel_stack_disjoint", f"processes {a} and {b}")
    ids = sorted(bases)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if bases[a] & bases[b]:
                bad("virtual_base_disjoint", f"processes {a} and {b}")
    owned = set().union(*bases.values()) if bases else set()
    for pid, ks in stacks:
        owned |= {ks.start - lim.kernel_vas_start + off for off in range(0, ks.size, lim.page_size)}
    if not owned <= totalpage(k.cfg.memory, lim.page_size):
        bad("memory_in_partition", "a process owns pages outside the partition block")
    if not owned <= k.memory.allocated:
        bad("memory_in_partition", "a process owns pages the allocator marks free")
    _allocator(k.memory, label, out)

    tcs = k.time_counters
    for x, y in zip(tcs, tcs[1:]):
        if abs(x.alarm) > abs(y.alarm):
            bad("time_counter_order", f"|{x.alarm}| > |{y.alarm}|")
    owners = [tc.pid for tc in tcs]
    if len(owners) != len(set(owners)):
        bad("time_counter_unique", f"duplicate owners {owners}")
    for p in owners:
        if p not in table or p == IDLE_PROCESS_ID:
            bad("time_counter_live", f"counter for process {p}")

    for name, queue, allowed in (
        ("ready_queue_state", k.ready_queue, (ProcessState.READY, ProcessState.WAITING)),
        ("waiting_queue_state", k.waiting_queue, (ProcessState.WAITING,)),
    ):
        if len(queue) != len(set(queue)):
            bad(name, f"duplicates in {queue}")
        for p in queue:
            if p not in table or table[p].state not in allowed:
                bad(name, f"process {p} in queue with state {table[p].state.value if p in table else '?'}")
    if IDLE_PROCESS_ID in k.ready_queue:
        bad("idle_not_ready", "idle process in the ready queue")

    running = [p for p, pcb in table.items() if pcb.state is ProcessState.RUNNING]
    if len(running) > 1:
        bad("single_running", f"running processes {sorted(running)}")
    if k.current != NULL_PROCESS_ID and k.current not in table:
        bad("current_process_member", f"current {k.current} not in table")
    if active and k.current in table and table[k.current].state is not ProcessState.RUNNING:
        bad("current_running", f"current {k.current} is {table[k.current].state.value}")
    if running and running[0] != k.current:
        bad("current_running", f"running {running[0]} differs from current {k.current}")
    return out


def check_all(
    core: CoreKernelState,
    kernels: Mapping[int, PartitionKernel],
    ihs: InterruptHandlerState | None = None,
) -> list[Violation]:
    out = check_core(core, ihs)
    for pid, k in sorted(kernels.items()):
        out += check_partition(k, active=pid == core.current_partition)
    return out


def check_state(sim) -> list[Violation]:
    """Evaluate every predicate over a simulator's core, partition kernels and interrupt handler."""
    return check_all(sim.core, sim.kernels, sim.ihs)
