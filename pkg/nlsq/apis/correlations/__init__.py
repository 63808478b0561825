"""Correlation commands for the classical and quantum Gibbs states and the sweeps comparing them."""
from typing import Optional

import click
from pydantic import BaseModel, Field

from nlsq.apis import execute, run_options


class CorrelationRequest(BaseModel):
    """Options shared by the correlation commands."""
    observable: Optional[str] = Field(None, description="';'-separated observables, one per time or one for all")
    times: Optional[str] = Field(None, description="Comma-separated factor times")
    tau_schedule: Optional[str] = Field(None, description="Comma-separated tau values")
    potential: Optional[str] = Field(None, description="Interaction")
    ensemble_size: Optional[int] = Field(None, description="Monte Carlo samples")
    n_max: Optional[int] = Field(None, description="Particle cutoff")


def correlation_options(func):
    for decorator in reversed([
        click.option("--observable", type=str),
        click.option("--times", type=str),
        click.option("--tau-schedule", type=str),
        click.option("--potential", type=str),
        click.option("--ensemble-size", type=int),
        click.option("--n-max", type=int),
    ]):
        func = decorator(func)
    return func


@click.command("correlate-classical")
@correlation_options
@run_options
def correlate_classical(config_path, seed, assignments, output_dir, no_checks, **options):
    """Monte Carlo multi-time correlation in the classical Gibbs state."""
    execute("correlate-classical", config_path, seed, assignments, output_dir, no_checks, CorrelationRequest(**options))


@click.command("correlate-quantum")
@correlation_options
@run_options
def correlate_quantum(config_path, seed, assignments, output_dir, no_checks, **options):
    """Exact multi-time correlation in the truncated quantum Gibbs state, per tau."""
    execute("correlate-quantum", config_path, seed, assignments, output_dir, no_checks, CorrelationRequest(**options))


@click.command("tau-sweep")
@correlation_options
@run_options
def tau_sweep(config_path, seed, assignments, output_dir, no_checks, **options):
    """Quantum correlations along the tau schedule against the classical value."""
    execute("tau-sweep", config_path, seed, assignments, output_dir, no_checks, CorrelationRequest(**options))


@click.command("local-limit")
@correlation_options
@run_options
def local_limit(config_path, seed, assignments, output_dir, no_checks, **options):
    """Mollified quantum correlations with eps_tau -> 0 against the local classical one."""
    execute("local-limit", config_path, seed, assignments, output_dir, no_checks, CorrelationRequest(**options))


@click.command("tail-bound")
@correlation_options
@click.option("--cutoff-schedule", type=str)
@click.option("--p-schedule", type=str, help="Particle numbers of identity observables, e.g. 1,2")
@run_options
def tail_bound(config_path, seed, assignments, output_dir, no_checks, cutoff_schedule, p_schedule, **options):
    """Large-mass parts of correlations on both sides as the cutoff doubles."""
    request = CorrelationRequest(**options)
    extra = [f"cutoff_schedule={cutoff_schedule}"] if cutoff_schedule else []
    if p_schedule:
        extra.append(f"p_schedule={p_schedule}")
    execute("tail-bound", config_path, seed, [*extra, *assignments], output_dir, no_checks, request)


@click.command("invariance")
@correlation_options
@run_options
def invariance(config_path, seed, assignments, output_dir, no_checks, **options):
    """Time independence of one-factor correlations in both Gibbs states."""
    execute("invariance", config_path, seed, assignments, output_dir, no_checks, CorrelationRequest(**options))


commands = [correlate_classical, correlate_quantum, tau_sweep, local_limit, tail_bound, invariance]
