"""YAML readers for module configurations and scenarios."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..config import ModuleConfig, PartitionConfig, Violation, WindowConfig
from ..constants import DEFAULT_LIMITS, Limits
from ..core_kernel import validate_module_config
from ..his_layer import ExeFile, MemoryBlock


class LoadError(Exception):
    """Malformed document or failed validation; ``violations`` lists named problems."""

    def __init__(self, message: str, violations: list[Violation] | None = None):
        self.violations = violations or []
        super().__init__(message)


def _parse_yaml(text: str, what: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise LoadError(f"{what} is not valid YAML{where}: {exc}") from None


def _require(doc: dict, key: str, where: str) -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise LoadError(f"{where}: missing key {key!r}")
    return doc[key]


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise LoadError(f"{where}: expected an integer, got {value!r}")
    return value


def _block(doc: Any, where: str) -> MemoryBlock:
    return MemoryBlock(_int(_require(doc, "start", where), where + ".start"),
                       _int(_require(doc, "size", where), where + ".size"))


_LIMIT_FIELDS = {f.name for f in dataclasses.fields(Limits)}


def parse_module_config(doc: Any) -> ModuleConfig:
    if not isinstance(doc, dict):
        raise LoadError("configuration must be a mapping")
    overrides = dict(doc.get("constants") or {})
    if "interrupt_stack_pages" in doc:
        overrides["interrupt_stack_pages"] = doc["interrupt_stack_pages"]
    unknown = sorted(set(overrides) - _LIMIT_FIELDS)
    if unknown:
        raise LoadError(f"constants: unknown names {unknown}")
    limits = dataclasses.replace(
        DEFAULT_LIMITS, **{k: _int(v, f"constants.{k}") for k, v in overrides.items()}
    )
    module = doc.get("module") or {}
    mem = _require(doc, "memory", "config")
    partitions = []
    for i, p in enumerate(_require(doc, "partitions", "config") or []):
        where = f"partitions[{i}]"
        partitions.append(PartitionConfig(
            name=str(_require(p, "name", where)),
            memory=_block(_require(p, "memory", where), where + ".memory"),
            period=_int(_require(p, "period", where), where + ".period"),
            duration=_int(_require(p, "duration", where), where + ".duration"),
            total_process=_int(_require(p, "total_process", where), where + ".total_process"),
        ))
    schedule = []
    for i, w in enumerate(_require(doc, "schedule", "config") or []):
        where = f"schedule[{i}]"
        schedule.append(WindowConfig(str(_require(w, "partition", where)),
                                     bool(w.get("periodic_start", False))))
    return ModuleConfig(
        physical_memory=_block(_require(mem, "physical", "memory"), "memory.physical"),
        kernel_memory=_block(_require(mem, "kernel", "memory"), "memory.kernel"),
        kernel_image=_block(_require(mem, "kernel_image", "memory"), "memory.kernel_image"),
        partitions=tuple(partitions),
        schedule=tuple(schedule),
        module_id=_int(module.get("id", 1), "module.id"),
        module_name=str(module.get("name", "module")),
        limits=limits,
    )


def load_module_config(text: str) -> ModuleConfig:
    cfg = parse_module_config(_parse_yaml(text, "configuration"))
    violations = validate_module_config(cfg)
    if violations:
        raise LoadError("configuration failed validation", violations)
    return cfg


def load_module_config_file(path: str | Path) -> ModuleConfig:
    return load_module_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Scenarios

DIRECTIVE_KINDS = ("advance_to", "apex", "inject", "assert")


@dataclass(frozen=True)
class Directive:
    kind: str
    at: int | None
    body: Any
    index: int


@dataclass
class Scenario:
    directives: list[Directive] = field(default_factory=list)
    files: dict[str, ExeFile] = field(default_factory=dict)
    base_time: int = 0


def _segment(value: Any, where: str) -> bytes:
    if value is None:
        return b""
    if isinstance(value, str):
        return value.encode()
    if isinstance(value, dict) and "size" in value:
        return bytes(_int(value["size"], where + ".size"))
    if isinstance(value, dict) and "hex" in value:
        return bytes.fromhex(str(value["hex"]))
    raise LoadError(f"{where}: segment must be a string, {{size: n}} or {{hex: ...}}")


def parse_scenario(doc: Any) -> Scenario:
    if doc is None:
        return Scenario()
    if not isinstance(doc, dict):
        raise LoadError("scenario must be a mapping")
    files = {
        str(name): ExeFile(_segment((f or {}).get("data"), f"files.{name}.data"),
                           _segment((f or {}).get("code"), f"files.{name}.code"))
        for name, f in (doc.get("files") or {}).items()
    }
    directives: list[Directive] = []
    last = None
    for i, raw in enumerate(doc.get("directives") or []):
        where = f"directives[{i}]"
        if not isinstance(raw, dict):
            raise LoadError(f"{where}: directive must be a mapping")
        kinds = [k for k in DIRECTIVE_KINDS if k in raw]
        if len(kinds) != 1:
            raise LoadError(f"{where}: exactly one of {DIRECTIVE_KINDS} is required")
        kind = kinds[0]
        at = raw.get("at")
        if at is not None:
            at = _int(at, where + ".at")
        body = raw[kind]
        if kind == "advance_to":
            body = _int(body, where + ".advance_to")
        elif kind == "inject":
            body = _int(body, where + ".inject")
        elif kind == "apex":
            for key in ("partition", "process", "service"):
                _require(body, key, where + ".apex")
        else:
            _require(body, "predicate", where + ".assert")
        stamp = body if kind == "advance_to" else at
        if stamp is not None:
            if last is not None and stamp < last:
                raise LoadError(f"{where}: directive times must be nondecreasing")
            last = stamp
        directives.append(Directive(kind, at, body, i))
    return Scenario(directives, files, _int(doc.get("base_time", 0), "base_time"))


def load_scenario(text: str) -> Scenario:
    return parse_scenario(_parse_yaml(text, "scenario"))


def load_scenario_file(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text())
