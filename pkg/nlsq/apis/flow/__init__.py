"""Classical NLS flow commands: single trajectories, integrator quality and mollifier convergence."""
from typing import Optional

import click
from pydantic import BaseModel, Field

from nlsq.apis import execute, run_options


class FlowRequest(BaseModel):
    t_final: Optional[float] = Field(None, description="Final time")
    dt: Optional[float] = Field(None, description="Integrator step")
    sobolev_s: Optional[float] = Field(None, description="Regularity of the random initial data")
    potential: Optional[str] = Field(None, description="Interaction")


@click.command("evolve")
@click.option("--t-final", type=float)
@click.option("--dt", type=float)
@click.option("--sobolev-s", type=float)
@click.option("--potential", type=str)
@run_options
def evolve(config_path, seed, assignments, output_dir, no_checks, **options):
    """Evolve random Sobolev data and record mass and energy along the way."""
    execute("evolve", config_path, seed, assignments, output_dir, no_checks, FlowRequest(**options))


@click.command("flow-quality")
@click.option("--t-final", type=float)
@click.option("--potential", type=str)
@run_options
def flow_quality(config_path, seed, assignments, output_dir, no_checks, **options):
    """Plane-wave accuracy, mass conservation, energy error order and reversibility."""
    execute("flow-quality", config_path, seed, assignments, output_dir, no_checks, FlowRequest(**options))


@click.command("mollifier-sweep")
@click.option("--t-final", type=float)
@click.option("--dt", type=float)
@click.option("--sobolev-s", type=float)
@run_options
def mollifier_sweep(config_path, seed, assignments, output_dir, no_checks, **options):
    """sup-in-time L2 distance between mollified and local flows along the epsilon schedule."""
    execute("mollifier-sweep", config_path, seed, assignments, output_dir, no_checks, FlowRequest(**options))


commands = [evolve, flow_quality, mollifier_sweep]
