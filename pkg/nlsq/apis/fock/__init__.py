"""Truncated Fock space commands."""
from typing import Optional

import click
from pydantic import BaseModel, Field

from nlsq.apis import execute, run_options


class AlgebraRequest(BaseModel):
    n_max: Optional[int] = Field(None, description="Particle cutoff of the test space")
    n_random: Optional[int] = Field(None, description="Random kernel pairs to test")


@click.command("operator-algebra")
@click.option("--n-max", type=int)
@click.option("--n-random", type=int)
@run_options
def operator_algebra(config_path, seed, assignments, output_dir, no_checks, **options):
    """Commutation relations, lift products and lift bounds on a two-mode Fock space."""
    execute("operator-algebra", config_path, seed, assignments, output_dir, no_checks, AlgebraRequest(**options))


commands = [operator_algebra]
