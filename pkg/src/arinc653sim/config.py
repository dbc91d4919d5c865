"""Module configuration records shared by the kernel layers and the loader."""

from __future__ import annotations

from dataclasses import dataclass, field

from .constants import DEFAULT_LIMITS, Limits
from .his_layer import MemoryBlock


@dataclass(frozen=True)
class PartitionConfig:
    name: str
    memory: MemoryBlock
    period: int
    duration: int
    total_process: int


@dataclass(frozen=True)
class WindowConfig:
    partition: str
    periodic_start: bool = False


@dataclass(frozen=True)
class ModuleConfig:
    physical_memory: MemoryBlock
    kernel_memory: MemoryBlock
    kernel_image: MemoryBlock
    partitions: tuple[PartitionConfig, ...]
    schedule: tuple[WindowConfig, ...]
    module_id: int = 1
    module_name: str = "module"
    limits: Limits = field(default=DEFAULT_LIMITS)

    def partition_id(self, name: str) -> int:
        """Partition ids are 1-based in declaration order."""
        for pid, p in enumerate(self.partitions, start=1):
            if p.name == name:
                return pid
        raise KeyError(name)

    def partition(self, pid: int) -> PartitionConfig:
        return self.partitions[pid - 1]


@dataclass(frozen=True)
class Violation:
    predicate: str
    message: str

    def __str__(self) -> str:
        return f"{self.predicate}: {self.message}"
