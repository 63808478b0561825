"""Iterated-commutator expansion commands."""
from typing import Optional

import click
from pydantic import BaseModel, Field

from nlsq.apis import execute, run_options


class DysonRequest(BaseModel):
    """Options of the dyson-check command."""
    observable: Optional[str] = Field(None, description="Observable to expand")
    t_final: Optional[float] = Field(None, description="Expansion time; must lie inside the convergence radius")
    order: Optional[int] = Field(None, description="Highest order L")
    quadrature_order: Optional[int] = Field(None, description="Gauss-Legendre nodes per simplex coordinate")
    number_cutoff: Optional[float] = Field(None, description="Mass bound the series is used on")
    tau_schedule: Optional[str] = Field(None, description="Comma-separated tau values")


@click.command("dyson-check")
@click.option("--observable", type=str)
@click.option("--t-final", type=float)
@click.option("--order", type=int)
@click.option("--quadrature-order", type=int)
@click.option("--number-cutoff", type=float)
@click.option("--tau-schedule", type=str)
@run_options
def dyson_check(config_path, seed, assignments, output_dir, no_checks, **options):
    """Truncated series against direct evolution on the quantum and classical sides."""
    execute("dyson-check", config_path, seed, assignments, output_dir, no_checks, DysonRequest(**options))


commands = [dyson_check]
