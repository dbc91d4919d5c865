"""Simulator engine, file loaders, trace and invariant checks."""

from .engine import (
    EXIT_CONFIG,
    EXIT_EXPECTATION,
    EXIT_INVARIANT,
    EXIT_OK,
    InvariantViolation,
    RunResult,
    ScenarioError,
    Simulator,
    dump_state,
    run,
)
from .invariants import check_state
from .loader import (
    LoadError,
    Scenario,
    load_module_config,
    load_module_config_file,
    load_scenario,
    load_scenario_file,
)
from .trace import Trace, TraceRecord, emit_trace
