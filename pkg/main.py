import os
import pathlib
import sys

import dotenv

# Load environment files
# First load shared .env file
dotenv.load_dotenv(".env")

# Then load environment-specific file (defaults to dev)
# Environment-specific values will override shared values
environment = os.getenv("ENV", "dev")
env_file = f".env.{environment}"
dotenv.load_dotenv(env_file, override=True)


def preparse_threads(argv: list[str]) -> str | None:
    """--threads N from argv, else NLSQ_THREADS; read before numpy is imported."""
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--threads="):
            return arg.split("=", 1)[1]
    return os.environ.get("NLSQ_THREADS")


from nlsq.internal.utils import apply_thread_budget  # noqa: E402

apply_thread_budget(preparse_threads(sys.argv[1:]))

import click  # noqa: E402

from nlsq import __version__  # noqa: E402
from nlsq.internal import messages  # noqa: E402
from nlsq.internal.config import checked_config  # noqa: E402
from nlsq.libs.domain_model import ConfigError  # noqa: E402


def import_api_commands() -> list[click.Command]:
    """Collect the commands of every nlsq/apis/*/__init__.py."""
    src_path = pathlib.Path(__file__).parent
    apis_path = src_path / "nlsq" / "apis"

    api_names = sorted(
        p.relative_to(apis_path).parent.as_posix()
        for p in apis_path.glob("*/__init__.py")
    )

    api_module_prefix = "nlsq.apis."

    commands = []
    for name in api_names:
        messages.emit("debug", f"Importing API: {name}")
        try:
            api_module = __import__(api_module_prefix + name, fromlist=[name])
            for command in getattr(api_module, "commands", []):
                if isinstance(command, click.Command):
                    commands.append(command)
        except Exception as e:
            messages.emit("error", f"could not import {name}: {e}", topic=messages.Topics.import_error)
            continue

    return commands


def create_cli() -> click.Group:
    """Build the top-level command group from the discovered commands."""

    @click.group()
    @click.version_option(__version__, prog_name="nlsq")
    @click.option("--threads", type=int, help="BLAS/OpenMP thread budget (applied before numpy loads)")
    def cli(threads):
        """Classical and quantum NLS Gibbs states: sampling, flows, Fock lifts and their correspondence."""
        try:
            checked_config()
        except ConfigError as e:
            messages.error(f"invalid environment: {e}")
            sys.exit(2)

    for command in import_api_commands():
        cli.add_command(command)
    return cli


cli = create_cli()


if __name__ == "__main__":
    cli()
