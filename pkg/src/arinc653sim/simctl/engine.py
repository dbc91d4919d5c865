"""Discrete-event engine: clocks and interrupts drive the core and partition kernels; scenario directives drive APEX."""

from __future__ import annotations

import dataclasses
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any

from ..apex import SERVICES, ApexContext, Reply, ServiceGen, open_service
from ..config import ModuleConfig, Violation
from ..constants import (
    IDLE_PROCESS_ID,
    NULL_PARTITION_ID,
    NULL_PROCESS_ID,
    DeadlineKind,
    OperatingMode,
    ProcessKind,
    ProcessState,
    ReturnCode,
)
from ..core_kernel import (
    ActionKind,
    CoreKernelState,
    allocate_interrupt_stack,
    boot_kernel_idle,
    core_service,
    init_core_kernel,
    partition_scheduler_step,
)
from ..hw_core import (
    ClockBank,
    ClockEvent,
    Context,
    DecisionKind,
    DispatchDecision,
    HpCommand,
    InterruptController,
    MainMemory,
    PageTable,
    fire_clock_event,
    hp_timer_control,
    next_clock_event,
)
from ..his_layer import (
    SERVICE_ROUTINES,
    ExeFile,
    InterruptHandlerState,
    ProcessVirtualMemory,
    enter_interrupt,
    exit_interrupt,
    finish_kernel_invocation,
    full_load_process_pages,
    initial_registers,
    interrupted_context,
    isr_clock_tick,
    system_clock_init,
)
from ..partition_kernel import (
    NON_RETURNING,
    PartitionKernel,
    PartitionKernelConfig,
    ProcessAttributes,
    ProcessControlBlock,
)
from .invariants import check_state
from .loader import Directive, Scenario
from .trace import Trace

EXIT_OK = 0
EXIT_EXPECTATION = 1
EXIT_INVARIANT = 2
EXIT_CONFIG = 3

CHECK_MODES = ("off", "final", "step")


class ScenarioError(Exception):
    """A directive names something that does not exist."""


class InvariantViolation(Exception):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass
class Request:
    partition: int
    caller: int
    service: str
    args: dict
    expect: dict | None
    index: int


@dataclass
class Parked:
    request: Request
    gen: ServiceGen
    pcb: ProcessControlBlock
    last_call: str
    result: Any = None


@dataclass
class RunResult:
    trace: Trace
    dump: str
    status: int
    failures: list[str] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)

    @property
    def trace_text(self) -> str:
        return self.trace.text()


class EngineBus:
    """What one partition kernel sees of the core kernel and the hardware."""

    def __init__(self, sim: Simulator, partition_id: int):
        self.sim = sim
        self.pid = partition_id
        self.limits = sim.limits

    def cpu_context(self) -> Context:
        return self.sim.cpu

    def set_cpu_context(self, ctx: Context) -> None:
        self.sim.cpu = ctx

    def claim_interrupted_context(self) -> Context:
        self.sim.claimed = True
        return interrupted_context(self.sim.ihs)

    def hp_reset(self) -> None:
        hp_timer_control(self.sim.clocks, HpCommand.RESET)

    def hp_end(self) -> None:
        hp_timer_control(self.sim.clocks, HpCommand.END)

    def hp_set_alarm(self, alarm: int) -> None:
        hp_timer_control(self.sim.clocks, HpCommand.SET_ALARM, alarm)

    def hp_time(self) -> int:
        return self.sim.clocks.hp_value

    def system_time(self) -> int:
        return self.sim.sysclock.time

    def interrupt_time(self) -> int:
        return self.sim.sysclock.interrupt_time

    def kernel_page_table(self) -> PageTable:
        return self.sim.core.kernel_page_table

    def load_process(self, pvm: ProcessVirtualMemory, entry: int, exe: ExeFile) -> PageTable:
        pt, self.sim.memory = full_load_process_pages(
            self.sim.memory, pvm, entry, exe, self.limits.page_size
        )
        return pt

    def _core(self, name: str, *args: Any) -> Any:
        return core_service(self.sim.core, self.pid, name, *args)

    def get_operating_mode(self) -> OperatingMode:
        return self._core("GetOperatingMode")

    def set_operating_mode(self, mode: OperatingMode) -> None:
        self._core("SetOperatingMode", mode)
        self.sim.emit("MODE", partition=self.pid, mode=mode,
                      lock_level=self._core("GetLockLevel"))

    def get_partition_status(self) -> dict:
        return self._core("GetPartitionStatus")

    def get_lock_level(self) -> int:
        return self._core("GetLockLevel")

    def reset_lock_level(self) -> int:
        return self._core("ResetLockLevel")

    def _step_lock(self, name: str) -> int:
        ll, clamped = self._core(name)
        if clamped:
            self.sim.emit("FAULT", partition=self.pid, kind="LOCK_LEVEL_CLAMP", lock_level=ll)
        return ll

    def increase_lock_level(self) -> int:
        return self._step_lock("IncreaseLockLevel")

    def decrease_lock_level(self) -> int:
        return self._step_lock("DecreaseLockLevel")

    def _future_start(self, start: int, ct: int) -> int:
        # A start equal to now belongs to the window already running, whose
        # release check has passed; use the following flagged start instead.
        if start == ct and self.sim.core.current_partition == self.pid:
            return self._core("GetNextPeriodicStart", ct + 1)
        return start

    def get_next_periodic_start(self, ct: int) -> int:
        return self._future_start(self._core("GetNextPeriodicStart", ct), ct)

    def get_delayed_periodic_start(self, ct: int, dt: int) -> int:
        return self._future_start(self._core("GetDelayedPeriodicStart", ct, dt), ct)

    def trace(self, category: str, **fields: Any) -> None:
        self.sim.emit(category, **fields)

    def health_monitor(self, pid: int, reason: str) -> None:
        self.sim.emit("HM", partition=self.pid, pid=pid, reason=reason, action="DORMANT")

    def notify(self, pid: int, event: str) -> None:
        self.sim.emit("SCHED", partition=self.pid, pid=pid, event=event)


class Simulator:
    def __init__(self, cfg: ModuleConfig, scenario: Scenario | None = None, check: str = "off"):
        if check not in CHECK_MODES:
            raise ValueError(f"check mode must be one of {CHECK_MODES}")
        self.cfg = cfg
        self.limits = cfg.limits
        self.scenario = scenario or Scenario()
        self.check = check
        self.trace = Trace()
        self.failures: list[str] = []
        self.queues: dict[tuple[int, int], deque[Request]] = {}
        self.parked: dict[tuple[int, int], Parked] = {}
        self.claimed = False
        self.clocks = ClockBank(self.limits.clock_tick_interval)
        self.ic = InterruptController(self.limits.amount_i)
        self.memory = MainMemory()
        self.core: CoreKernelState = init_core_kernel(cfg)
        self.kernels = {
            pid: PartitionKernel(
                pid,
                PartitionKernelConfig(p.memory, p.period, p.duration, p.total_process),
                EngineBus(self, pid),
            )
            for pid, p in enumerate(cfg.partitions, start=1)
        }
        self.ihs = InterruptHandlerState(self.core.kernel_page_table, allocate_interrupt_stack(self.core))
        self.sysclock = system_clock_init(self.scenario.base_time, self.limits.clock_tick_interval)
        for pid, k in self.kernels.items():
            k.bus.set_operating_mode(OperatingMode.COLD_START)
        boot_kernel_idle(self.core)
        self.cpu = Context(initial_registers(self.limits).with_flag("IF", 1), self.core.kernel_page_table)
        hp_timer_control(self.clocks, HpCommand.RESET)

    # -- small helpers -----------------------------------------------------

    @property
    def now(self) -> int:
        return self.clocks.rt_value

    def emit(self, category: str, **fields: Any) -> None:
        self.trace.emit(self.now, category, **fields)

    def partition_id(self, name: str) -> int:
        try:
            return self.cfg.partition_id(name)
        except KeyError:
            raise ScenarioError(f"unknown partition {name!r}") from None

    def process_id(self, partition: int, name: Any) -> int:
        if isinstance(name, int) and not isinstance(name, bool):
            return name
        pid = self.kernels[partition].pid_by_name(str(name))
        if pid is None:
            raise ScenarioError(f"unknown process {name!r} in partition {partition}")
        return pid

    def _checkpoint(self) -> None:
        if self.check == "step":
            violations = check_state(self)
            if violations:
                raise InvariantViolation(violations)

    # -- clock and interrupts ---------------------------------------------

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise ScenarioError(f"cannot move time back to {t} from {self.now}")
        while True:
            ev = next_clock_event(self.clocks)
            if ev.time > t:
                break
            self._clock_event(ev)
            self._pump()
            self._checkpoint()
        self.clocks.rt_value = t

    def _clock_event(self, ev: ClockEvent) -> None:
        fire_clock_event(self.clocks, ev)
        self._raise(0, source=ev.source)

    def inject(self, line: int) -> None:
        self._raise(line, source="inject")
        self._pump()
        self._checkpoint()

    def _raise(self, line: int, source: str) -> None:
        decision = self.ic.raise_interrupt(line, self.cpu.regs.flag("IF"))
        self.emit("IRQ", line=line, source=source, decision=decision.kind)
        self._dispatch(decision)

    def _dispatch(self, decision: DispatchDecision) -> None:
        while decision.kind is DecisionKind.DELIVER:
            decision = self._service(decision.line)
            if decision.kind is not DecisionKind.NONE:
                self.emit("IRQ", line=decision.line, source="follow-up", decision=decision.kind)

    def _service(self, line: int) -> DispatchDecision:
        if line not in SERVICE_ROUTINES:
            self.emit("FAULT", kind="NO_SERVICE_ROUTINE", line=line)
            return self.ic.complete_interrupt(line, self.cpu.regs.flag("IF"))
        entry = enter_interrupt(self.ihs, line, self.cpu)
        self.cpu = entry.cpu
        hpt = self.clocks.hp_value
        ticked = isr_clock_tick(self.sysclock, hpt)
        self.emit("TICK", hp=hpt, system_time=self.sysclock.time, updated=ticked,
                  routine=entry.routine, depth=entry.depth)
        action = exit_interrupt(self.ihs, self.ic, line)
        if action.context is not None:
            self.cpu = action.context
            return action.follow_up
        self._invoke_kernel()
        return action.follow_up

    def _invoke_kernel(self) -> None:
        self.claimed = False
        t = self.sysclock.time
        act = partition_scheduler_step(self.core, t)
        if act.kind is ActionKind.CONTINUE:
            if act.resume != NULL_PARTITION_ID:
                self.kernels[act.resume].continue_execution()
        else:
            self.emit("SCHED", level="partition", suspend=act.suspend, resume=act.resume,
                      mode=act.resume_mode)
            self._suspend_side(act.suspend)
            self._resume_side(act.resume, act.resume_mode, t)
        if not self.claimed:
            self.cpu = interrupted_context(self.ihs)
        finish_kernel_invocation(self.ihs)

    def _suspend_side(self, partition: int) -> None:
        if partition != NULL_PARTITION_ID:
            self.kernels[partition].suspend_execution()
            return
        idle = self.core.process_table[IDLE_PROCESS_ID]
        self.claimed = True
        idle.kernel_temp_context.insert(0, interrupted_context(self.ihs))
        idle.state = ProcessState.READY

    def _resume_side(self, partition: int, mode: OperatingMode | None, t: int) -> None:
        if partition == NULL_PARTITION_ID:
            idle = self.core.process_table[IDLE_PROCESS_ID]
            self.cpu = idle.kernel_temp_context.pop(0)
            idle.state = ProcessState.RUNNING
            self.core.current_process = IDLE_PROCESS_ID
            return
        k = self.kernels[partition]
        if mode is OperatingMode.IDLE:
            k.idle_execution()
        elif mode is OperatingMode.NORMAL:
            k.start_execution(t)
        else:
            k.prepare_execution()

    # -- APEX routing ------------------------------------------------------

    def submit(self, partition: str, process: Any, service: str, args: dict | None = None,
               expect: dict | None = None, index: int = -1) -> None:
        if service not in SERVICES:
            raise ScenarioError(f"unknown APEX service {service!r}")
        part = self.partition_id(partition)
        caller = self.process_id(part, process)
        req = Request(part, caller, service, dict(args or {}), expect, index)
        self.queues.setdefault((part, caller), deque()).append(req)
        self.emit("APEX", partition=part, pid=caller, service=service, event="queued")
        self._pump()
        self._checkpoint()

    def _drop_stale(self, part: int) -> None:
        k = self.kernels[part]
        for key in [key for key in self.parked if key[0] == part]:
            entry = self.parked[key]
            pcb = k.process_table.get(key[1])
            if pcb is not entry.pcb or pcb.state is ProcessState.DORMANT:
                del self.parked[key]
                self.emit("APEX", partition=part, pid=key[1], service=entry.request.service,
                          event="abandoned")
                self._finish(entry.request, None)

    def _pump(self) -> None:
        while True:
            part = self.core.current_partition
            if part == NULL_PARTITION_ID:
                return
            self._drop_stale(part)
            k = self.kernels[part]
            pid = k.current
            if pid == NULL_PROCESS_ID or k.pcb(pid).state is not ProcessState.RUNNING:
                return
            key = (part, pid)
            if key in self.parked:
                entry = self.parked.pop(key)
                note = k.syscall_return(pid)
                value = note if entry.last_call == "SUSPEND_SELF" else entry.result
                self._drive(k, entry.request, entry.gen, value)
            elif self.queues.get(key):
                req = self.queues[key].popleft()
                self._start(k, req)
            else:
                return

    def _start(self, k: PartitionKernel, req: Request) -> None:
        args = self._service_args(k, req)
        self.emit("APEX", partition=req.partition, pid=req.caller, service=req.service,
                  event="call", args=_render_args(req.args))
        gen = open_service(req.service, ApexContext(req.caller, self.limits), args)
        self._drive(k, req, gen, None)

    def _drive(self, k: PartitionKernel, req: Request, gen: ServiceGen, value: Any) -> None:
        caller = req.caller
        replied = False
        while True:
            try:
                step = gen.send(value)
            except StopIteration:
                break
            if isinstance(step, Reply):
                replied = True
                self._reply(req, step)
                value = None
                continue
            result = k.syscall(caller, step.name, *step.args)
            if step.name in NON_RETURNING:
                gen.close()
                if step.name == "SET_OPERATING_MODE" and step.args[0] is not OperatingMode.NORMAL:
                    self._drop_all_parked(req.partition)
                break
            if k.current != caller or k.pcb(caller).state is not ProcessState.RUNNING:
                self.parked[(req.partition, caller)] = Parked(req, gen, k.pcb(caller), step.name, result)
                self.emit("APEX", partition=req.partition, pid=caller, service=req.service,
                          event="blocked", call=step.name)
                return
            note = k.syscall_return(caller)
            value = note if step.name == "SUSPEND_SELF" else result
        if not replied:
            self.emit("APEX", partition=req.partition, pid=caller, service=req.service,
                      event="no_return")
            self._finish(req, None)

    def _drop_all_parked(self, part: int) -> None:
        for key in sorted(key for key in self.parked if key[0] == part):
            entry = self.parked.pop(key)
            self.emit("APEX", partition=part, pid=key[1], service=entry.request.service,
                      event="abandoned")
            self._finish(entry.request, None)

    def _reply(self, req: Request, reply: Reply) -> None:
        self.emit("APEX", partition=req.partition, pid=req.caller, service=req.service,
                  event="return", code=reply.code, payload=_render_payload(reply.payload))
        self._finish(req, reply)

    def _finish(self, req: Request, reply: Reply | None) -> None:
        exp = req.expect
        if not exp:
            return
        where = f"directive {req.index} ({req.service})"
        if reply is None:
            self.failures.append(f"{where}: no reply")
            self.emit("FAULT", kind="EXPECT_FAILED", directive=req.index, reason="no-reply")
            return
        problems = []
        if "return_code" in exp and reply.code.value != exp["return_code"]:
            problems.append(f"return code {reply.code.value} != {exp['return_code']}")
        if "payload" in exp and _normalize(reply.payload) != _normalize(exp["payload"]):
            problems.append(f"payload {_normalize(reply.payload)!r} != {exp['payload']!r}")
        if problems:
            self.failures.append(f"{where}: " + "; ".join(problems))
            self.emit("FAULT", kind="EXPECT_FAILED", directive=req.index, reason="; ".join(problems))

    def _service_args(self, k: PartitionKernel, req: Request) -> dict:
        raw = dict(req.args)
        if req.service == "CREATE_PROCESS":
            return self._create_args(raw)
        if req.service == "SET_PARTITION_MODE":
            mode = raw.get("mode")
            try:
                return {"mode": OperatingMode(mode)}
            except ValueError:
                return {"mode": mode}
        if "pid" in raw:
            raw["pid"] = self.process_id(req.partition, raw["pid"])
        return raw

    def _create_args(self, raw: dict) -> dict:
        file = raw.get("file")
        if file is None:
            exe = ExeFile()
        elif file in self.scenario.files:
            exe = self.scenario.files[file]
        else:
            raise ScenarioError(f"unknown executable file {file!r}")
        try:
            attrs = ProcessAttributes(
                name=str(raw["name"]),
                kind=ProcessKind(raw.get("kind", "APERIODIC")),
                stack_size=int(raw.get("stack_size", self.limits.min_stack_size)),
                base_priority=int(raw.get("base_priority", self.limits.min_priority)),
                period=int(raw.get("period", -1)),
                time_capacity=int(raw.get("time_capacity", -1)),
                deadline=DeadlineKind(raw.get("deadline", "SOFT")),
                entry_point=raw.get("entry_point"),
                exe_path=str(file or ""),
            )
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad CREATE_PROCESS attributes: {exc}") from None
        return {"attributes": attrs, "exe": exe}

    # -- directives --------------------------------------------------------

    def assertion(self, predicate: str, args: dict, index: int = -1) -> bool:
        ok, detail = self._evaluate(predicate, args or {})
        if not ok:
            self.failures.append(f"directive {index} assert {predicate}: {detail}")
            self.emit("FAULT", kind="ASSERT_FAILED", predicate=predicate, detail=detail)
        return ok

    def _evaluate(self, predicate: str, args: dict) -> tuple[bool, str]:
        if predicate == "invariants":
            violations = check_state(self)
            return not violations, "; ".join(str(v) for v in violations)
        if predicate == "system_time":
            got = self.sysclock.time
            return got == args["time"], f"system time {got}"
        if predicate == "current_partition":
            want = args.get("partition")
            got = self.core.current_partition
            want_id = NULL_PARTITION_ID if want is None else self.partition_id(want)
            return got == want_id, f"current partition {got}"
        part = self.partition_id(args["partition"])
        k = self.kernels[part]
        status = self.core.partitions[part]
        if predicate == "operating_mode":
            return status.operating_mode.value == args["mode"], f"mode {status.operating_mode.value}"
        if predicate == "lock_level":
            return status.lock_level == args["level"], f"lock level {status.lock_level}"
        if predicate == "current_process":
            want = self.process_id(part, args["process"])
            return k.current == want, f"current process {k.current}"
        if predicate == "process_state":
            pid = self.process_id(part, args["process"])
            got = k.pcb(pid).state.value
            return got == args["state"], f"state {got}"
        if predicate == "ready_queue":
            want = [self.process_id(part, p) for p in args["queue"]]
            return k.ready_queue == want, f"ready queue {k.ready_queue}"
        raise ScenarioError(f"unknown assertion predicate {predicate!r}")

    def apply(self, d: Directive) -> None:
        if d.at is not None:
            self.advance_to(d.at)
        if d.kind == "advance_to":
            self.advance_to(d.body)
        elif d.kind == "inject":
            self.inject(d.body)
        elif d.kind == "apex":
            b = d.body
            self.submit(b["partition"], b["process"], b["service"], b.get("args"), b.get("expect"), d.index)
        else:
            self.assertion(d.body["predicate"], d.body.get("args") or {}, d.index)
            self._checkpoint()

    def run(self) -> RunResult:
        violations: list[Violation] = []
        try:
            self._pump()
            self._checkpoint()
            for d in self.scenario.directives:
                self.apply(d)
            for key in sorted(self.parked):
                self._finish(self.parked[key].request, None)
            for key in sorted(self.queues):
                for req in self.queues[key]:
                    self._finish(req, None)
            if self.check != "off":
                violations = check_state(self)
        except InvariantViolation as exc:
            violations = exc.violations
        for v in violations:
            self.emit("FAULT", kind="INVARIANT", predicate=v.predicate, detail=v.message)
        if violations:
            status = EXIT_INVARIANT
        elif self.failures:
            status = EXIT_EXPECTATION
        else:
            status = EXIT_OK
        return RunResult(self.trace, self.dump(), status, list(self.failures), violations)

    # -- dumps -------------------------------------------------------------

    def snapshot(self) -> dict:
        core = self.core
        return {
            "time": self.now,
            "clocks": self.clocks.snapshot(),
            "system_clock": dataclasses.asdict(self.sysclock),
            "interrupt_controller": self.ic.snapshot(),
            "interrupt_stack": core.interrupt_stack.as_dict() if core.interrupt_stack else None,
            "core": {
                "current_partition": core.current_partition,
                "current_process": core.current_process,
                "kernel_idle_state": core.process_table[IDLE_PROCESS_ID].state.value,
                "kernel_free_pages": len(core.memory_management.free),
                "frame": {
                    "length": core.frame.length,
                    "windows": [
                        {"partition": w.partition_id, "offset": w.offset, "duration": w.duration,
                         "period": w.period, "periodic_start": w.periodic_start}
                        for w in core.frame.windows
                    ],
                },
                "partitions": {
                    str(pid): {
                        "name": p.name,
                        "memory": p.memory.as_dict(),
                        "period": p.period,
                        "duration": p.duration,
                        "lock_level": p.lock_level,
                        "operating_mode": p.operating_mode.value,
                        "start_condition": p.start_condition.value,
                    }
                    for pid, p in core.partitions.items()
                },
            },
            "partition_kernels": {str(pid): k.snapshot() for pid, k in self.kernels.items()},
            "pending": {
                "parked": [f"{p}:{c}:{e.request.service}" for (p, c), e in sorted(self.parked.items())],
                "queued": [f"{p}:{c}:{r.service}" for (p, c), q in sorted(self.queues.items()) for r in q],
            },
        }

    def dump(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True, indent=2) + "\n"


def dump_state(sim: Simulator) -> str:
    return sim.dump()


def run(cfg: ModuleConfig, scenario: Scenario | None = None, check: str = "off") -> RunResult:
    return Simulator(cfg, scenario, check).run()


def _normalize(value: Any) -> Any:
    if isinstance(value, ReturnCode | OperatingMode | ProcessState | ProcessKind):
        return value.value
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    return value


def _render_payload(value: Any) -> str:
    if value is None:
        return "-"
    return json.dumps(_normalize(value), sort_keys=True, separators=(",", ":"))


def _render_args(args: dict) -> str:
    return json.dumps(_normalize(args), sort_keys=True, separators=(",", ":"))
