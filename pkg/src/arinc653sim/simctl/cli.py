"""Command-line front end: ``sim run``, ``sim validate``, ``sim frame``."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from ..core_kernel import build_frame
from .engine import CHECK_MODES, EXIT_CONFIG, ScenarioError, Simulator
from .loader import LoadError, load_module_config_file, load_scenario_file


def _load_config(path: str):
    try:
        return load_module_config_file(path)
    except LoadError as exc:
        click.echo(f"config error: {exc}", err=True)
        for v in exc.violations:
            click.echo(f"  {v}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
def main() -> None:
    """Deterministic simulator of a partitioned avionics core module."""


@main.command("run")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), help="Write the event trace here.")
@click.option("--dump", "dump_path", type=click.Path(dir_okay=False), help="Write the final state dump here.")
@click.option("--check-invariants", type=click.Choice(CHECK_MODES), default="final", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Reserved; runs do not depend on it.")
def run_cmd(config, scenario, trace_path, dump_path, check_invariants, seed) -> None:
    """Run SCENARIO against CONFIG and emit the trace (stdout unless --trace)."""
    cfg = _load_config(config)
    try:
        scen = load_scenario_file(scenario)
        result = Simulator(cfg, scen, check_invariants).run()
    except (LoadError, ScenarioError) as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if trace_path:
        Path(trace_path).write_text(result.trace_text)
    else:
        click.echo(result.trace_text, nl=False)
    if dump_path:
        Path(dump_path).write_text(result.dump)
    for failure in result.failures:
        click.echo(f"expectation failed: {failure}", err=True)
    for v in result.violations:
        click.echo(f"invariant violated: {v}", err=True)
    sys.exit(result.status)


@main.command("validate")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def validate_cmd(config) -> None:
    """Check CONFIG against every module predicate."""
    cfg = _load_config(config)
    click.echo(f"ok: {len(cfg.partitions)} partitions, {len(cfg.schedule)} windows")


@main.command("frame")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
def frame_cmd(config) -> None:
    """Print the major time frame built from CONFIG."""
    cfg = _load_config(config)
    frame = build_frame(cfg)
    click.echo(f"major frame length {frame.length}")
    click.echo("partition\tname\toffset\tduration\tperiod\tperiodic_start")
    for w in sorted(frame.windows, key=lambda w: w.offset):
        name = cfg.partition(w.partition_id).name
        click.echo(f"{w.partition_id}\t{name}\t{w.offset}\t{w.duration}\t{w.period}\t{int(w.periodic_start)}")


if __name__ == "__main__":
    main()
