"""Event trace records and their tab-separated rendering."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from typing import Any, TextIO

CATEGORIES = ("TICK", "IRQ", "SCHED", "SYSCALL", "APEX", "MODE", "HM", "FAULT")


@dataclass(frozen=True)
class TraceRecord:
    time: int
    seq: int
    category: str
    fields: tuple[tuple[str, str], ...]

    def render(self) -> str:
        parts = [str(self.time), self.category]
        parts += [f"{k}={v}" for k, v in self.fields]
        return "\t".join(parts)

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.fields:
            if k == key:
                return v
        return default


def render_value(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(render_value(v) for v in value) + "]"
    text = str(value)
    return text.replace("\t", " ").replace("\n", " ")


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def emit(self, time: int, category: str, **fields: Any) -> TraceRecord:
        if category not in CATEGORIES:
            raise ValueError(f"unknown trace category {category!r}")
        if self.records and time < self.records[-1].time:
            raise ValueError(f"trace time went backwards: {time} < {self.records[-1].time}")
        rec = TraceRecord(
            time, len(self.records), category,
            tuple((k, render_value(v)) for k, v in fields.items()),
        )
        self.records.append(rec)
        return rec

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of(self, category: str) -> list[TraceRecord]:
        return [r for r in self.records if r.category == category]

    def lines(self) -> list[str]:
        return [r.render() for r in self.records]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())


def emit_trace(records: Iterable[TraceRecord], sink: TextIO) -> int:
    n = 0
    for rec in records:
        sink.write(rec.render() + "\n")
        n += 1
    return n
