"""APEX services: argument validation and return codes layered over partition-kernel system calls.

Every service is a generator. It yields ``Syscall`` requests, receives each
call's result via ``send``, and yields exactly one ``Reply`` unless the
service never returns to its caller (STOP_SELF, and SET_PARTITION_MODE once
the mode change runs).
"""

from __future__ import annotations

from collections.abc import Callable, Generator
from dataclasses import dataclass, field
from typing import Any

from .constants import (
    DEFAULT_TIME,
    IDLE_PROCESS_ID,
    NULL_PROCESS_ID,
    Limits,
    OperatingMode,
    ProcessKind,
    ProcessState,
    ReturnCode,
    in_time_range,
)
from .his_layer import ExeFile
from .partition_kernel import NON_RETURNING, PartitionKernel, ProcessAttributes

OK = ReturnCode.NO_ERROR
NO_ACTION = ReturnCode.NO_ACTION
INVALID_PARAM = ReturnCode.INVALID_PARAM
INVALID_CONFIG = ReturnCode.INVALID_CONFIG
INVALID_MODE = ReturnCode.INVALID_MODE
TIMED_OUT = ReturnCode.TIMED_OUT

STARTING = (OperatingMode.COLD_START, OperatingMode.WARM_START)


@dataclass(frozen=True)
class Syscall:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Reply:
    code: ReturnCode
    payload: Any = None


@dataclass(frozen=True)
class ApexRequest:
    partition: str
    caller: int
    service: str
    args: dict = field(default_factory=dict)


ServiceGen = Generator[Syscall | Reply, Any, None]


def sc(name: str, *args: Any) -> Syscall:
    return Syscall(name, args)


@dataclass(frozen=True)
class ApexContext:
    caller: int
    limits: Limits


# ---------------------------------------------------------------------------
# Partition management


def get_partition_status(ctx: ApexContext) -> ServiceGen:
    status = yield sc("GET_PARTITION_STATUS")
    yield Reply(OK, status)


def set_partition_mode(ctx: ApexContext, mode: Any) -> ServiceGen:
    if not isinstance(mode, OperatingMode):
        yield Reply(INVALID_PARAM)
        return
    om = yield sc("GET_OPERATING_MODE")
    if om is OperatingMode.NORMAL and mode is OperatingMode.NORMAL:
        yield Reply(NO_ACTION)
        return
    if om is OperatingMode.COLD_START and mode is OperatingMode.WARM_START:
        yield Reply(INVALID_MODE)
        return
    yield Reply(OK)
    yield sc("SET_OPERATING_MODE", mode)


# ---------------------------------------------------------------------------
# Process management


def get_process_id(ctx: ApexContext, name: str) -> ServiceGen:
    names = yield sc("GET_PROCESS_NAMES")
    if name not in names:
        yield Reply(INVALID_CONFIG, NULL_PROCESS_ID)
        return
    pid = yield sc("GET_PROCESS_ID", name)
    yield Reply(OK, pid)


def get_process_status(ctx: ApexContext, pid: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids:
        yield Reply(INVALID_PARAM)
        return
    status = yield sc("GET_PROCESS_STATUS", pid)
    yield Reply(OK, status)


def _aperiodic_time_ok(attrs: ProcessAttributes) -> bool:
    return attrs.time_capacity != 0 and in_time_range(attrs.time_capacity)


def _periodic_time_ok(attrs: ProcessAttributes, partition_period: int) -> bool:
    if attrs.time_capacity <= 0 or attrs.time_capacity > attrs.period:
        return False
    return attrs.period % partition_period == 0


def create_process(ctx: ApexContext, attributes: ProcessAttributes, exe: ExeFile) -> ServiceGen:
    lim = ctx.limits
    discontinuous, continuous = yield sc("GET_FREE_SPACE")
    needed = attributes.stack_size + len(exe.data) + len(exe.code)
    if continuous < lim.kernel_stack_size or discontinuous < needed:
        yield Reply(INVALID_CONFIG, NULL_PROCESS_ID)
        return
    om = yield sc("GET_OPERATING_MODE")
    if om is OperatingMode.NORMAL:
        yield Reply(INVALID_MODE, NULL_PROCESS_ID)
        return
    names = yield sc("GET_PROCESS_NAMES")
    if attributes.name in names:
        yield Reply(NO_ACTION, NULL_PROCESS_ID)
        return
    stack_ok = (
        lim.min_stack_size <= attributes.stack_size <= lim.max_stack_size
        and attributes.stack_size % lim.page_size == 0
    )
    prio_ok = lim.min_priority <= attributes.base_priority <= lim.max_priority
    if not (stack_ok and prio_ok):
        yield Reply(INVALID_PARAM, NULL_PROCESS_ID)
        return
    if attributes.kind is ProcessKind.PERIODIC:
        partp = yield sc("GET_PARTITION_PERIOD")
        time_ok = _periodic_time_ok(attributes, partp)
    else:
        time_ok = _aperiodic_time_ok(attributes)
    if not time_ok:
        yield Reply(INVALID_PARAM, NULL_PROCESS_ID)
        return
    pid = yield sc("CREATE_PROCESS", attributes, exe)
    if pid is None:
        yield Reply(INVALID_CONFIG, NULL_PROCESS_ID)
        return
    yield Reply(OK, pid)


def set_priority(ctx: ApexContext, pid: int, priority: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids or not ctx.limits.min_priority <= priority <= ctx.limits.max_priority:
        yield Reply(INVALID_PARAM)
        return
    state = yield sc("GET_PROCESS_STATE", pid)
    if state is ProcessState.DORMANT:
        yield Reply(INVALID_MODE)
        return
    yield sc("SET_PRIORITY", pid, priority)
    yield Reply(OK)


def suspend_self(ctx: ApexContext, timeout: int) -> ServiceGen:
    ll = yield sc("GET_PARTITION_LOCK_LEVEL")
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    if (
        ll > ctx.limits.min_lock_level
        or kind in (ProcessKind.PERIODIC, ProcessKind.ERROR_HANDLER)
        or ctx.caller == IDLE_PROCESS_ID
    ):
        yield Reply(INVALID_MODE)
        return
    pt = yield sc("GET_PARTITION_TIME")
    if timeout > 0 and not in_time_range(pt + timeout):
        yield Reply(INVALID_PARAM)
        return
    outcome = yield sc("SUSPEND_SELF", pt, timeout)
    yield Reply(TIMED_OUT if outcome == "timed_out" else OK)


def suspend(ctx: ApexContext, pid: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids or pid == ctx.caller:
        yield Reply(INVALID_PARAM)
        return
    kind = yield sc("GET_PROCESS_KIND", pid)
    state = yield sc("GET_PROCESS_STATE", pid)
    if kind is ProcessKind.PERIODIC or state is ProcessState.DORMANT:
        yield Reply(INVALID_MODE)
        return
    mykind = yield sc("GET_PROCESS_KIND", ctx.caller)
    if mykind is ProcessKind.ERROR_HANDLER:
        ll = yield sc("GET_PARTITION_LOCK_LEVEL")
        errored = yield sc("GET_ERRORED_PROCESS")
        if ll > ctx.limits.min_lock_level and pid == errored:
            yield Reply(INVALID_MODE)
            return
    took = yield sc("SUSPEND", pid)
    yield Reply(OK if took else NO_ACTION)


def resume(ctx: ApexContext, pid: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids:
        yield Reply(INVALID_PARAM)
        return
    kind = yield sc("GET_PROCESS_KIND", pid)
    state = yield sc("GET_PROCESS_STATE", pid)
    if kind is ProcessKind.PERIODIC or state is ProcessState.DORMANT:
        yield Reply(INVALID_MODE)
        return
    if state is not ProcessState.WAITING:
        yield Reply(NO_ACTION)
        return
    yield sc("RESUME", pid)
    yield Reply(OK)


def stop_self(ctx: ApexContext) -> ServiceGen:
    if ctx.caller == IDLE_PROCESS_ID:
        yield Reply(INVALID_MODE)
        return
    yield sc("STOP_SELF")


def stop(ctx: ApexContext, pid: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids or pid == ctx.caller:
        yield Reply(INVALID_PARAM)
        return
    state = yield sc("GET_PROCESS_STATE", pid)
    if state is ProcessState.DORMANT:
        yield Reply(NO_ACTION)
        return
    yield sc("STOP", pid)
    yield Reply(OK)


def start(ctx: ApexContext, pid: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids:
        yield Reply(INVALID_PARAM)
        return
    state = yield sc("GET_PROCESS_STATE", pid)
    if state is not ProcessState.DORMANT:
        yield Reply(NO_ACTION)
        return
    om = yield sc("GET_OPERATING_MODE")
    if om in STARTING:
        yield sc("START", pid, DEFAULT_TIME, DEFAULT_TIME)
        yield Reply(OK)
        return
    kind = yield sc("GET_PROCESS_KIND", pid)
    cap = yield sc("GET_PROCESS_TIME_CAPACITY", pid)
    ct = yield sc("GET_CURRENT_TIME")
    if kind is ProcessKind.PERIODIC:
        rp = yield sc("GET_NEXT_PERIODIC_START", ct)
    else:
        rp = ct
    if not in_time_range(rp + cap):
        yield Reply(INVALID_CONFIG)
        return
    yield sc("START", pid, rp, rp + cap)
    yield Reply(OK)


def delayed_start(ctx: ApexContext, pid: int, delay: int) -> ServiceGen:
    ids = yield sc("GET_PROCESS_IDS")
    if pid not in ids or delay < 0 or not in_time_range(delay):
        yield Reply(INVALID_PARAM)
        return
    state = yield sc("GET_PROCESS_STATE", pid)
    if state is not ProcessState.DORMANT:
        yield Reply(NO_ACTION)
        return
    kind = yield sc("GET_PROCESS_KIND", pid)
    if kind is ProcessKind.PERIODIC:
        period = yield sc("GET_PROCESS_PERIOD", pid)
        if delay >= period:
            yield Reply(INVALID_PARAM)
            return
    om = yield sc("GET_OPERATING_MODE")
    if om in STARTING:
        yield sc("DELAYED_START", pid, DEFAULT_TIME, delay, DEFAULT_TIME)
        yield Reply(OK)
        return
    cap = yield sc("GET_PROCESS_TIME_CAPACITY", pid)
    ct = yield sc("GET_CURRENT_TIME")
    if kind is ProcessKind.PERIODIC:
        rp = yield sc("GET_DELAYED_PERIODIC_START", ct, delay)
        deadline = rp + cap
    else:
        rp = ct
        deadline = ct + delay + cap
    if not in_time_range(deadline):
        yield Reply(INVALID_CONFIG)
        return
    yield sc("DELAYED_START", pid, rp, delay, deadline)
    yield Reply(OK)


def lock_preemption(ctx: ApexContext) -> ServiceGen:
    om = yield sc("GET_OPERATING_MODE")
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    ll = yield sc("GET_PARTITION_LOCK_LEVEL")
    if om in STARTING or kind is ProcessKind.ERROR_HANDLER:
        yield Reply(NO_ACTION, ll)
        return
    if ll >= ctx.limits.max_lock_level:
        yield Reply(INVALID_CONFIG, ll)
        return
    ll = yield sc("LOCK_PREEMPTION")
    yield Reply(OK, ll)


def unlock_preemption(ctx: ApexContext) -> ServiceGen:
    om = yield sc("GET_OPERATING_MODE")
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    ll = yield sc("GET_PARTITION_LOCK_LEVEL")
    if om in STARTING or kind is ProcessKind.ERROR_HANDLER or ll == ctx.limits.min_lock_level:
        yield Reply(NO_ACTION, ll)
        return
    ll = yield sc("UNLOCK_PREEMPTION")
    yield Reply(OK, ll)


def get_my_id(ctx: ApexContext) -> ServiceGen:
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    if kind is ProcessKind.ERROR_HANDLER:
        yield Reply(INVALID_MODE, NULL_PROCESS_ID)
        return
    pid = yield sc("GET_MY_ID")
    yield Reply(OK, pid)


# ---------------------------------------------------------------------------
# Time management


def timed_wait(ctx: ApexContext, delay: int) -> ServiceGen:
    ll = yield sc("GET_PARTITION_LOCK_LEVEL")
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    if ll > ctx.limits.min_lock_level or kind is ProcessKind.ERROR_HANDLER or ctx.caller == IDLE_PROCESS_ID:
        yield Reply(INVALID_MODE)
        return
    pt = yield sc("GET_PARTITION_TIME")
    if delay < 0 or not in_time_range(pt + delay):
        yield Reply(INVALID_PARAM)
        return
    yield sc("TIMED_WAIT", pt, delay)
    yield Reply(OK)


def periodic_wait(ctx: ApexContext) -> ServiceGen:
    ll = yield sc("GET_PARTITION_LOCK_LEVEL")
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    if (
        ll > ctx.limits.min_lock_level
        or kind in (ProcessKind.APERIODIC, ProcessKind.ERROR_HANDLER)
        or ctx.caller == IDLE_PROCESS_ID
    ):
        yield Reply(INVALID_MODE)
        return
    nrp = yield sc("GET_NEXT_RELEASE_POINT", ctx.caller)
    cap = yield sc("GET_PROCESS_TIME_CAPACITY", ctx.caller)
    if not in_time_range(nrp + cap):
        yield Reply(INVALID_CONFIG)
        return
    yield sc("PERIODIC_WAIT", nrp, nrp + cap)
    yield Reply(OK)


def get_time(ctx: ApexContext) -> ServiceGen:
    t = yield sc("GET_TIME")
    yield Reply(OK, t)


def replenish(ctx: ApexContext, budget: int) -> ServiceGen:
    om = yield sc("GET_OPERATING_MODE")
    kind = yield sc("GET_PROCESS_KIND", ctx.caller)
    if om in STARTING or kind is ProcessKind.ERROR_HANDLER:
        yield Reply(NO_ACTION)
        return
    if budget == 0:
        yield Reply(OK)
        return
    ct = yield sc("GET_CURRENT_TIME")
    if kind is ProcessKind.APERIODIC:
        if budget > 0 and not in_time_range(ct + budget):
            yield Reply(INVALID_PARAM)
            return
        yield sc("REPLENISH", ct, budget)
        yield Reply(OK)
        return
    if budget < 0 or not in_time_range(ct + budget):
        yield Reply(INVALID_PARAM)
        return
    nrp = yield sc("GET_NEXT_RELEASE_POINT", ctx.caller)
    if ct + budget > nrp:
        yield Reply(INVALID_MODE)
        return
    yield sc("REPLENISH", ct, budget)
    yield Reply(OK)


SERVICES: dict[str, Callable[..., ServiceGen]] = {
    "GET_PARTITION_STATUS": get_partition_status,
    "SET_PARTITION_MODE": set_partition_mode,
    "GET_PROCESS_ID": get_process_id,
    "GET_PROCESS_STATUS": get_process_status,
    "CREATE_PROCESS": create_process,
    "SET_PRIORITY": set_priority,
    "SUSPEND_SELF": suspend_self,
    "SUSPEND": suspend,
    "RESUME": resume,
    "STOP_SELF": stop_self,
    "STOP": stop,
    "START": start,
    "DELAYED_START": delayed_start,
    "LOCK_PREEMPTION": lock_preemption,
    "UNLOCK_PREEMPTION": unlock_preemption,
    "GET_MY_ID": get_my_id,
    "TIMED_WAIT": timed_wait,
    "PERIODIC_WAIT": periodic_wait,
    "GET_TIME": get_time,
    "REPLENISH": replenish,
}


def open_service(service: str, ctx: ApexContext, args: dict) -> ServiceGen:
    try:
        fn = SERVICES[service]
    except KeyError:
        raise ValueError(f"unknown APEX service {service!r}") from None
    return fn(ctx, **args)


# ---------------------------------------------------------------------------
# Synchronous driver for a single partition kernel


@dataclass
class CallOutcome:
    reply: Reply | None
    blocked: bool
    syscalls: list[str] = field(default_factory=list)
    pending: ServiceGen | None = None


def call_service(kernel: PartitionKernel, caller: int, service: str, **args: Any) -> CallOutcome:
    """Run a service to completion while the caller keeps the processor.

    If the caller is descheduled mid-service the outcome is ``blocked`` and
    ``pending`` holds the suspended generator; ``resume_service`` continues it.
    """
    gen = open_service(service, ApexContext(caller, kernel.limits), args)
    return _drive(kernel, caller, gen, None, CallOutcome(None, False))


def resume_service(kernel: PartitionKernel, caller: int, outcome: CallOutcome) -> CallOutcome:
    note = kernel.syscall_return(caller)
    gen = outcome.pending
    outcome.pending = None
    outcome.blocked = False
    return _drive(kernel, caller, gen, note, outcome)


def _drive(kernel, caller, gen, value, outcome: CallOutcome) -> CallOutcome:
    while True:
        try:
            step = gen.send(value)
        except StopIteration:
            return outcome
        if isinstance(step, Reply):
            outcome.reply = step
            value = None
            continue
        outcome.syscalls.append(step.name)
        result = kernel.syscall(caller, step.name, *step.args)
        if step.name in NON_RETURNING:
            gen.close()
            return outcome
        if kernel.current != caller:
            outcome.blocked = True
            outcome.pending = gen
            return outcome
        note = kernel.syscall_return(caller)
        value = note if step.name == "SUSPEND_SELF" else result
