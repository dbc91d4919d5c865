"""Seeded random scenarios over a fixed three-partition module."""

from __future__ import annotations

import random

import yaml

MS = 1_000_000
PAGE = 4096

THREE_PARTITIONS = {
    "module": {"id": 3, "name": "random"},
    "memory": {
        "physical": {"start": 0, "size": (64 + 3 * 96) * PAGE},
        "kernel": {"start": 0, "size": 64 * PAGE},
        "kernel_image": {"start": PAGE, "size": 16 * PAGE},
    },
    "partitions": [
        {"name": "P1", "memory": {"start": 64 * PAGE, "size": 96 * PAGE},
         "period": 10 * MS, "duration": 3 * MS, "total_process": 8},
        {"name": "P2", "memory": {"start": 160 * PAGE, "size": 96 * PAGE},
         "period": 20 * MS, "duration": 3 * MS, "total_process": 8},
        {"name": "P3", "memory": {"start": 256 * PAGE, "size": 96 * PAGE},
         "period": 20 * MS, "duration": 3 * MS, "total_process": 8},
    ],
    "schedule": [
        {"partition": "P1", "periodic_start": True},
        {"partition": "P2", "periodic_start": True},
        {"partition": "P3", "periodic_start": False},
        {"partition": "P1", "periodic_start": True},
    ],
}

CONFIG_TEXT = yaml.safe_dump(THREE_PARTITIONS, sort_keys=False)
PERIODS = {p["name"]: p["period"] for p in THREE_PARTITIONS["partitions"]}


def _apex(partition: str, process, service: str, args: dict | None = None, at: int | None = None) -> dict:
    body = {"partition": partition, "process": process, "service": service}
    if args:
        body["args"] = args
    d = {"apex": body}
    if at is not None:
        d["at"] = at
    return d


def _setup(rng: random.Random, name: str) -> tuple[list[dict], int]:
    out = []
    n = rng.randint(3, 7)
    for i in range(n):
        if rng.random() < 0.3:
            period = PERIODS[name] * rng.choice([1, 2])
            args = {"name": f"{name}p{i}", "kind": "PERIODIC", "base_priority": rng.randint(1, 60),
                    "period": period, "time_capacity": rng.randint(1, 3) * MS}
        else:
            args = {"name": f"{name}a{i}", "kind": "APERIODIC", "base_priority": rng.randint(1, 60),
                    "time_capacity": rng.choice([5 * MS, -1]), "stack_size": PAGE * rng.randint(1, 2)}
        out.append(_apex(name, 0, "CREATE_PROCESS", args))
    if rng.random() < 0.3:
        out.append(_apex(name, 0, "CREATE_PROCESS", {"name": f"{name}eh", "kind": "ERROR_HANDLER",
                                                     "base_priority": 99, "time_capacity": -1}))
    for pid in rng.sample(range(1, n + 1), rng.randint(1, n)):
        if rng.random() < 0.2:
            out.append(_apex(name, 0, "DELAYED_START", {"pid": pid, "delay": rng.choice([MS, 3 * MS])}))
        else:
            out.append(_apex(name, 0, "START", {"pid": pid}))
    out.append(_apex(name, 0, "SET_PARTITION_MODE", {"mode": "NORMAL"}))
    return out, n


def _random_call(rng: random.Random, n: int) -> tuple[object, str, dict]:
    pid = rng.randint(1, n)
    target = rng.randint(1, n)
    roll = rng.random()
    if roll < 0.03:
        return 0, "SET_PARTITION_MODE", {"mode": rng.choice(["COLD_START", "NORMAL"])}
    if roll < 0.05:
        return pid, "SET_PARTITION_MODE", {"mode": rng.choice(["WARM_START", "IDLE", "NORMAL"])}
    service, args = rng.choice([
        ("TIMED_WAIT", {"delay": rng.choice([0, 200_000, MS, 5 * MS])}),
        ("SUSPEND_SELF", {"timeout": rng.choice([0, 500_000, 2 * MS, -1])}),
        ("RESUME", {"pid": target}),
        ("SUSPEND", {"pid": target}),
        ("STOP", {"pid": target}),
        ("START", {"pid": target}),
        ("DELAYED_START", {"pid": target, "delay": rng.choice([0, MS, 3 * MS])}),
        ("SET_PRIORITY", {"pid": target, "priority": rng.randint(1, 60)}),
        ("LOCK_PREEMPTION", {}),
        ("UNLOCK_PREEMPTION", {}),
        ("PERIODIC_WAIT", {}),
        ("GET_TIME", {}),
        ("GET_PROCESS_STATUS", {"pid": target}),
        ("REPLENISH", {"budget": rng.choice([0, MS, -1])}),
        ("STOP_SELF", {}),
        ("GET_MY_ID", {}),
    ])
    return pid, service, args


def random_scenario(seed: int, total: int = 50) -> dict:
    rng = random.Random(seed)
    directives: list[dict] = []
    counts = {}
    for name in PERIODS:
        setup, counts[name] = _setup(rng, name)
        directives += setup
    t = 0
    while len(directives) < total - 1:
        t += rng.randint(0, 3 * MS)
        roll = rng.random()
        if roll < 0.15:
            directives.append({"advance_to": t})
        elif roll < 0.2:
            directives.append({"at": t, "inject": rng.randint(1, 7)})
        elif roll < 0.25:
            directives.append({"at": t, "assert": {"predicate": "invariants"}})
        else:
            name = rng.choice(list(PERIODS))
            caller, service, args = _random_call(rng, counts[name])
            directives.append(_apex(name, caller, service, args, at=t))
    directives.append({"advance_to": t + 60 * MS})
    return {"base_time": 0, "directives": directives[:total]}


def random_scenario_text(seed: int, total: int = 50) -> str:
    return yaml.safe_dump(random_scenario(seed, total), sort_keys=False)
