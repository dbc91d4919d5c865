"""Shared enumerations, sentinels and tunable limits."""

from __future__ import annotations

import enum
from dataclasses import dataclass

WORD_BITS = 64
LIMIT_PSU = (1 << WORD_BITS) - 1

TIME_MIN = -(1 << (WORD_BITS - 1))
TIME_MAX = (1 << (WORD_BITS - 1)) - 1
DEFAULT_TIME = -1

CLOCK_TICK = 0

NULL_PARTITION_ID = 0
NULL_PROCESS_ID = -1
IDLE_PROCESS_ID = 0
IDLE_PROCESS_NAME = "IdleProcess"
DEFAULT_PRIORITY = 0


def in_time_range(value: int) -> bool:
    return TIME_MIN <= value <= TIME_MAX


class OperatingMode(enum.Enum):
    IDLE = "IDLE"
    COLD_START = "COLD_START"
    WARM_START = "WARM_START"
    NORMAL = "NORMAL"


class StartCondition(enum.Enum):
    NORMAL_START = "NORMAL_START"
    PARTITION_RESTART = "PARTITION_RESTART"
    HM_MODULE_RESTART = "HM_MODULE_RESTART"
    HM_PARTITION_RESTART = "HM_PARTITION_RESTART"


class ProcessKind(enum.Enum):
    PERIODIC = "PERIODIC"
    APERIODIC = "APERIODIC"
    ERROR_HANDLER = "ERROR_HANDLER"


class ProcessState(enum.Enum):
    DORMANT = "DORMANT"
    READY = "READY"
    RUNNING = "RUNNING"
    WAITING = "WAITING"


class DeadlineKind(enum.Enum):
    SOFT = "SOFT"
    HARD = "HARD"


class ReturnCode(enum.Enum):
    NO_ERROR = "NO_ERROR"
    NO_ACTION = "NO_ACTION"
    NOT_AVAILABLE = "NOT_AVAILABLE"
    INVALID_PARAM = "INVALID_PARAM"
    INVALID_CONFIG = "INVALID_CONFIG"
    INVALID_MODE = "INVALID_MODE"
    TIMED_OUT = "TIMED_OUT"


@dataclass(frozen=True)
class Limits:
    """Every numeric constant the model leaves open, with simulator defaults."""

    page_size: int = 4096
    clock_tick_interval: int = 1_000_000
    amount_gpr: int = 16
    amount_i: int = 8
    amount_e: int = 2
    interrupt_stack_pages: int = 4
    kernel_stack_pages: int = 2
    partition_number_limit: int = 32
    process_number_limit: int = 128
    min_priority: int = 1
    max_priority: int = 239
    min_lock_level: int = 0
    max_lock_level: int = 16
    min_stack_size: int = 4096
    max_stack_size: int = 1 << 20
    process_vas_start: int = 1 << 12
    process_vas_size: int = (1 << 47) - (1 << 12)
    kernel_vas_start: int = 1 << 47
    kernel_vas_size: int = 1 << 47

    @property
    def kernel_stack_size(self) -> int:
        return self.kernel_stack_pages * self.page_size

    @property
    def interrupt_stack_size(self) -> int:
        return self.interrupt_stack_pages * self.page_size

    def problems(self) -> list[str]:
        out = []
        ps = self.page_size
        if ps <= 0 or ps & (ps - 1):
            out.append("page_size must be a positive power of two")
            return out
        if self.clock_tick_interval <= 0:
            out.append("clock_tick_interval must be positive")
        if self.amount_i < 1:
            out.append("amount_i must be at least 1")
        if self.kernel_stack_pages <= 0 or self.interrupt_stack_pages <= 0:
            out.append("stack page counts must be positive")
        if not 0 < self.min_priority < self.max_priority:
            out.append("priority range must satisfy 0 < min < max")
        if not self.min_lock_level == 0 < self.max_lock_level:
            out.append("lock levels must satisfy min = 0 < max")
        if not 0 < self.min_stack_size < self.max_stack_size:
            out.append("stack size range must satisfy 0 < min < max")
        for name in ("process_vas_start", "process_vas_size", "kernel_vas_start", "kernel_vas_size"):
            if getattr(self, name) % ps:
                out.append(f"{name} must be page aligned")
        if self.process_vas_start == 0 or self.kernel_vas_start == 0:
            out.append("virtual address spaces must exclude address 0")
        p_end = self.process_vas_start + self.process_vas_size
        k_end = self.kernel_vas_start + self.kernel_vas_size
        if self.process_vas_start < k_end and self.kernel_vas_start < p_end:
            out.append("process and kernel virtual address spaces overlap")
        return out


DEFAULT_LIMITS = Limits()
