"""Space-time norm diagnostics."""
from typing import Optional

import click
from pydantic import BaseModel, Field

from nlsq.apis import execute, run_options


class XsbRequest(BaseModel):
    sigma: Optional[float] = Field(None, description="Spatial regularity")
    xsb_b: Optional[float] = Field(None, description="Temporal weight exponent b")
    q_samples: Optional[int] = Field(None, description="Temporal samples, a power of two")
    n_fields: Optional[int] = Field(None, description="Random fields per envelope")


@click.command("xsb")
@click.option("--sigma", type=float)
@click.option("--xsb-b", type=float)
@click.option("--q-samples", type=int)
@click.option("--n-fields", type=int)
@run_options
def xsb(config_path, seed, assignments, output_dir, no_checks, **options):
    """X^{sigma,b} norms, Strichartz ratios and Slobodeckij envelopes."""
    execute("xsb", config_path, seed, assignments, output_dir, no_checks, XsbRequest(**options))


commands = [xsb]
