"""Command-line surface.

Each sub-package exposes a `commands` list of click commands; main.py
discovers them the same way for every area. The helpers here turn the
shared options into a RunConfig, run it and map the outcome to an exit code.
"""
import os
import sys
from typing import Any, Callable, Dict, Iterable, Optional

import click
from pydantic import BaseModel

from nlsq.internal import messages
from nlsq.internal.config import load_run_config
from nlsq.internal.parsing import parse_assignment
from nlsq.libs.domain_model import ConfigError
from nlsq.libs.experiments import RUNNERS, preset_defaults, run_experiment

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2


def run_options(func: Callable) -> Callable:
    """Options every experiment command accepts."""
    decorators = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="KEY=VALUE config file"),
        click.option("--seed", type=int, help="Seed of every random stream (required here or in the config)"),
        click.option("--set", "assignments", multiple=True, metavar="KEY=VALUE", help="Override one config key"),
        click.option("--output-dir", type=click.Path(file_okay=False), help="Directory receiving tables and manifest"),
        click.option("--no-checks", is_flag=True, help="Write results without gating the exit code on checks"),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def collect_overrides(assignments: Iterable[str], request: Optional[BaseModel] = None, **values: Any) -> Dict[str, Any]:
    """Command options first, then --set assignments on top."""
    overrides: Dict[str, Any] = {}
    if request is not None:
        overrides.update(request.model_dump(exclude_none=True))
    overrides.update({k: v for k, v in values.items() if v is not None})
    for text in assignments:
        try:
            key, value = parse_assignment(text)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        overrides[key] = value
    return overrides


def execute(
    experiment: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    assignments: Iterable[str],
    output_dir: Optional[str],
    no_checks: bool = False,
    request: Optional[BaseModel] = None,
    preset: Optional[str] = None,
    recorded: Optional[Dict[str, Any]] = None,
) -> None:
    """Load, validate and run one experiment, then exit with its code."""
    try:
        defaults = preset_defaults(preset) if preset else {}
        defaults.update(recorded or {})
        overrides = collect_overrides(assignments, request, seed=seed, experiment=experiment)
        if no_checks:
            overrides["checks"] = False
        cfg = load_run_config(config_path, defaults, overrides, known_experiments=RUNNERS)
        target = output_dir or os.environ.get("NLSQ_OUTPUT_DIR") or cfg.output_dir
        manifest, code = run_experiment(cfg, target)
    except ConfigError as e:
        messages.error(f"invalid configuration: {e}")
        sys.exit(EXIT_CONFIG_ERROR)
    for check in manifest.checks:
        click.echo(f"{'PASS' if check.passed else 'FAIL'}  {check.name:<40} {check.detail}")
    click.echo(f"manifest: {target}/manifest.json")
    sys.exit(code)
