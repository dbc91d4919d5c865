"""Builders shared by the kernel, APEX and engine tests."""

from __future__ import annotations

import textwrap

from arinc653sim.apex import call_service
from arinc653sim.config import ModuleConfig, PartitionConfig, WindowConfig
from arinc653sim.constants import DEFAULT_LIMITS, IDLE_PROCESS_ID, OperatingMode, ProcessKind
from arinc653sim.his_layer import ExeFile, MemoryBlock
from arinc653sim.partition_kernel import (
    LocalBus,
    PartitionKernel,
    PartitionKernelConfig,
    ProcessAttributes,
)

MS = 1_000_000
PAGE = 4096
PARTITION_BASE = 1 << 20


def cold_kernel(total: int = 8, pages: int = 256, period: int = 10 * MS, limits=DEFAULT_LIMITS):
    bus = LocalBus(limits, OperatingMode.COLD_START)
    bus.set_operating_mode(OperatingMode.COLD_START)
    cfg = PartitionKernelConfig(MemoryBlock(PARTITION_BASE, pages * PAGE), period, period, total)
    k = PartitionKernel(1, cfg, bus)
    k.prepare_execution()
    return k, bus


def create(k, name: str, prio: int = 10, kind: ProcessKind = ProcessKind.APERIODIC,
           period: int = -1, capacity: int = 5 * MS, stack: int = PAGE,
           exe: ExeFile = ExeFile(b"", b"")) -> int:
    attrs = ProcessAttributes(name=name, kind=kind, stack_size=stack, base_priority=prio,
                              period=period, time_capacity=capacity)
    out = call_service(k, k.current, "CREATE_PROCESS", attributes=attrs, exe=exe)
    assert out.reply is not None and out.reply.code.value == "NO_ERROR", out.reply
    return out.reply.payload


def start(k, pid: int, caller: int | None = None):
    return call_service(k, k.current if caller is None else caller, "START", pid=pid)


def launch(k):
    return call_service(k, k.current, "SET_PARTITION_MODE", mode=OperatingMode.NORMAL)


def normal_kernel(specs: list[tuple[str, int]], total: int = 8, **kw):
    """A NORMAL-mode kernel whose aperiodic processes (name, priority) were started during cold start."""
    k, bus = cold_kernel(total=total, **kw)
    pids = {}
    for name, prio in specs:
        pids[name] = create(k, name, prio)
        start(k, pids[name], IDLE_PROCESS_ID)
    launch(k)
    return k, bus, pids


def names(k, pids) -> list[str]:
    inv = {v: n for n, v in pids.items()}
    inv[IDLE_PROCESS_ID] = "idle"
    return [inv[d.pid] for d in k.dispatch_log]


def module_config(periods=(10 * MS, 20 * MS), durations=(4 * MS, 5 * MS),
                  sequence=None, pages_per_partition: int = 96, total_process: int = 8,
                  flagged: bool = True) -> ModuleConfig:
    kernel = MemoryBlock(0, 64 * PAGE)
    parts = []
    start_addr = kernel.end
    for i, (p, d) in enumerate(zip(periods, durations)):
        parts.append(PartitionConfig(f"P{i + 1}", MemoryBlock(start_addr, pages_per_partition * PAGE),
                                     p, d, total_process))
        start_addr += pages_per_partition * PAGE
    if sequence is None:
        sequence = [f"P{i + 1}" for i in range(len(parts))]
    return ModuleConfig(
        physical_memory=MemoryBlock(0, start_addr),
        kernel_memory=kernel,
        kernel_image=MemoryBlock(PAGE, 16 * PAGE),
        partitions=tuple(parts),
        schedule=tuple(WindowConfig(n, flagged) for n in sequence),
    )


CONFIG_YAML = textwrap.dedent("""\
    module: {id: 7, name: bench}
    memory:
      physical: {start: 0, size: 1048576}
      kernel: {start: 0, size: 262144}
      kernel_image: {start: 4096, size: 65536}
    partitions:
      - {name: A, memory: {start: 262144, size: 393216}, period: 10000000, duration: 4000000, total_process: 8}
      - {name: B, memory: {start: 655360, size: 393216}, period: 20000000, duration: 5000000, total_process: 8}
    schedule:
      - {partition: A, periodic_start: true}
      - {partition: B, periodic_start: true}
      - {partition: A, periodic_start: true}
""")
