"""Free-field sampling and Gibbs reweighting commands."""
from typing import Optional

import click
from pydantic import BaseModel, Field

from nlsq.apis import execute, run_options


class SampleRequest(BaseModel):
    """Options of the sample command."""
    grid_k: Optional[int] = Field(None, description="Largest mode index K")
    grid_p: Optional[int] = Field(None, description="Physical samples P")
    kappa: Optional[float] = Field(None, description="Chemical potential")
    nu: Optional[float] = Field(None, description="Shift of the sampled free state")
    potential: Optional[str] = Field(None, description="Interaction giving the Gibbs weights")
    ensemble_size: Optional[int] = Field(None, description="Number of samples")


@click.command("sample")
@click.option("--grid-k", type=int)
@click.option("--grid-p", type=int)
@click.option("--kappa", type=float)
@click.option("--nu", type=float)
@click.option("--potential", type=str)
@click.option("--ensemble-size", type=int)
@run_options
def sample(config_path, seed, assignments, output_dir, no_checks, **options):
    """Draw free fields, weight them by exp(-W) and store the ensemble."""
    execute("sample", config_path, seed, assignments, output_dir, no_checks, SampleRequest(**options))


@click.command("wick-oracles")
@click.option("--nu", type=float)
@click.option("--ensemble-size", type=int)
@run_options
def wick_oracles(config_path, seed, assignments, output_dir, no_checks, **options):
    """Free moments of both Gibbs states against their pairing formulas."""
    execute("wick-oracles", config_path, seed, assignments, output_dir, no_checks, SampleRequest(**options))


@click.command("partition-ratio")
@click.option("--nu", type=float)
@click.option("--ensemble-size", type=int)
@run_options
def partition_ratio(config_path, seed, assignments, output_dir, no_checks, **options):
    """Free partition-function ratio against its tau -> infinity limit."""
    execute("partition-ratio", config_path, seed, assignments, output_dir, no_checks, SampleRequest(**options))


commands = [sample, wick_oracles, partition_ratio]
