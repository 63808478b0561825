"""Preset listing and preset runs."""
import click

from nlsq.apis import execute, run_options
from nlsq.internal.parsing import stringify_basemodel
from nlsq.libs.export import read_manifest
from nlsq.libs.experiments import list_presets


@click.command("list-presets")
@click.option("--json", "as_json", is_flag=True, help="One JSON object per line")
def list_presets_command(as_json):
    """Print the named presets and the experiment each one runs."""
    for info in list_presets():
        if as_json:
            click.echo(stringify_basemodel(info))
        else:
            click.echo(f"{info.name:<24} {info.experiment:<18} {info.description}")


@click.command("run")
@click.option("--preset", type=str, help="Preset supplying the defaults")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False), help="Repeat the run recorded in a manifest")
@run_options
def run(config_path, seed, assignments, output_dir, no_checks, preset, manifest_path):
    """Run a preset, a config file or a recorded manifest; each names its experiment."""
    recorded = read_manifest(manifest_path).config if manifest_path else None
    execute(None, config_path, seed, assignments, output_dir, no_checks, preset=preset, recorded=recorded)


commands = [list_presets_command, run]
