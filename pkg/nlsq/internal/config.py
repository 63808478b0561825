"""Run and environment configuration.

A run is described by a flat KEY=VALUE file (dotenv syntax). Keys are
case-insensitive; list values are comma separated. Values are layered:
preset defaults, then the file, then command-line overrides.
"""
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from nlsq.internal.parsing import parse_float_list
from nlsq.internal.utils import compute_spec_signature, debug_enabled
from nlsq.libs.domain_model import ConfigError

POTENTIAL_KINDS = ("free", "constant", "cosine", "local", "mollified")

LIST_FIELDS = ("tau_schedule", "epsilon_schedule", "cutoff_schedule", "p_schedule", "times", "dt_schedule")


class RunConfig(BaseModel):
    """Everything needed to reproduce one experiment run."""

    model_config = ConfigDict(extra="forbid")

    experiment: str = Field(description="Runner name, see list-presets")
    preset: Optional[str] = Field(None, description="Preset the defaults came from")
    seed: int = Field(description="Seed of every random stream in the run")

    # grid
    grid_k: int = Field(0, ge=0, description="Largest mode index K")
    grid_p: int = Field(16, gt=0, description="Physical samples P")
    kappa: float = Field(1.0, gt=0, description="Chemical potential")

    # interaction
    potential: str = Field("free", description="free, constant, cosine, local or mollified")
    coupling: float = Field(1.0, ge=0, description="Overall interaction strength")
    epsilon: Optional[float] = Field(None, gt=0, le=1, description="Mollifier width")
    mollifier_base: Literal["triangle", "cosine"] = Field("triangle", description="Base profile of the mollifier")
    nu: float = Field(0.0, ge=0, description="Chemical potential shift of the free reference state")

    # schedules
    tau_schedule: List[float] = Field(default_factory=list, description="Quantum semiclassical parameters")
    epsilon_schedule: List[float] = Field(default_factory=list, description="Mollifier widths, decreasing")
    cutoff_schedule: List[float] = Field(default_factory=list, description="Mass cutoffs of the tail checks")
    p_schedule: List[int] = Field(default_factory=list, description="Particle numbers of the identity observables in the tail checks")
    times: List[float] = Field(default_factory=lambda: [0.0], description="Times of the correlation factors")
    dt_schedule: List[float] = Field(default_factory=list, description="Step sizes of the flow-quality check")

    # observables
    observable: str = Field("number", description="number, identity:p, projector:k, hamiltonian or random:p")
    weight_cutoff: Optional[float] = Field(None, gt=0, description="Support bound of the smooth number weight F")

    # sizes
    ensemble_size: int = Field(10_000, ge=1, description="Monte Carlo samples")
    n_max: Optional[int] = Field(None, ge=0, description="Particle cutoff; sized from tail_tol when unset")
    tail_tol: float = Field(1e-12, gt=0, description="Free truncation tail target for N_max")
    t_final: float = Field(1.0, description="Final time of evolutions")
    dt: float = Field(1e-3, gt=0, description="Integrator step")
    sobolev_s: float = Field(0.375, description="Regularity of random initial data")
    mass_target: float = Field(1.0, gt=0, description="Mass of random initial data")
    order: int = Field(3, ge=0, description="Highest Dyson order")
    quadrature_order: int = Field(6, ge=1, description="Gauss-Legendre nodes per simplex coordinate")
    number_cutoff: float = Field(1.0, gt=0, description="Mass bound the Dyson series is used on")
    sigma: float = Field(0.375, description="Spatial regularity of the X^{sigma,b} checks")
    xsb_b: float = Field(0.55, ge=-1, le=1, description="Temporal weight exponent")
    q_samples: int = Field(64, gt=0, description="Temporal samples of space-time fields")
    n_fields: int = Field(8, ge=1, description="Random fields per envelope check")
    n_random: int = Field(50, ge=1, description="Random kernels per algebra check")
    local_exponent: float = Field(0.25, gt=0, description="eps_tau = tau^-exponent in the local limit")

    # outputs and checks
    output_dir: str = Field("out", description="Directory receiving tables and manifest")
    checks: bool = Field(True, description="Evaluate acceptance checks and gate the exit code")
    tolerance: Optional[float] = Field(None, gt=0, description="Override of the main check threshold")
    dump_operators: bool = Field(False, description="Write Fock operator dumps")

    @field_validator(*LIST_FIELDS, mode="before")
    @classmethod
    def split_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_float_list(value)
        if isinstance(value, (int, float)):
            return [float(value)]
        return value

    @field_validator("potential")
    @classmethod
    def known_potential(cls, value: str) -> str:
        if value not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential {value!r}, expected one of {', '.join(POTENTIAL_KINDS)}")
        return value

    def signature(self) -> str:
        """SHA-256 of the sorted JSON form; output directories do not count."""
        return compute_spec_signature(self.model_dump(exclude={"output_dir"}))


# Schedules each runner needs to be non-empty.
REQUIRED_SCHEDULES: Dict[str, tuple] = {
    "correlate-quantum": ("tau_schedule",),
    "tau-sweep": ("tau_schedule",),
    "local-limit": ("tau_schedule",),
    "mollifier-sweep": ("epsilon_schedule",),
    "partition-ratio": ("tau_schedule",),
    "tail-bound": ("cutoff_schedule", "tau_schedule"),
    "invariance": ("tau_schedule", "times"),
    "flow-quality": ("dt_schedule",),
    "wick-oracles": ("tau_schedule",),
    "dyson-check": ("tau_schedule",),
}


def read_config_file(path: str | Path) -> Dict[str, str]:
    """KEY=VALUE pairs of a config file with lower-cased keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}


def _issues_from_validation(error: ValidationError) -> List[str]:
    issues = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        issues.append(f"{location}: {item['msg']}")
    return issues


def validate_run_config(cfg: RunConfig, known_experiments: Optional[Mapping[str, Any]] = None) -> None:
    """Cross-field checks; raises ConfigError listing every issue."""
    issues: List[str] = []
    if known_experiments is not None and cfg.experiment not in known_experiments:
        issues.append(f"experiment: unknown experiment {cfg.experiment!r}")
    for name in REQUIRED_SCHEDULES.get(cfg.experiment, ()):
        if not getattr(cfg, name):
            issues.append(f"{name}: schedule must not be empty for {cfg.experiment}")
    if any(t <= 0 for t in cfg.tau_schedule):
        issues.append("tau_schedule: every tau must be positive")
    if any(not (0 < e <= 1) for e in cfg.epsilon_schedule):
        issues.append("epsilon_schedule: every epsilon must lie in (0, 1]")
    if any(p < 1 for p in cfg.p_schedule):
        issues.append("p_schedule: every particle number must be at least 1")
    if cfg.potential == "mollified" and cfg.epsilon is None and not cfg.epsilon_schedule:
        issues.append("epsilon: mollified potential needs epsilon")
    if cfg.grid_p < 4 * cfg.grid_k + 2 or cfg.grid_p % 2:
        issues.append(f"grid_p: must be even and at least 4K+2={4 * cfg.grid_k + 2}")
    if cfg.q_samples & (cfg.q_samples - 1):
        issues.append("q_samples: must be a power of two")
    if issues:
        raise ConfigError("; ".join(issues))


def load_run_config(
    path: Optional[str | Path] = None,
    defaults: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    known_experiments: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Layer preset defaults, a config file and overrides into a validated RunConfig."""
    values: Dict[str, Any] = dict(defaults or {})
    if path is not None:
        values.update(read_config_file(path))
    values.update({k.lower(): v for k, v in (overrides or {}).items() if v is not None})
    missing_seed = values.get("seed") in (None, "")
    issues = ["seed: a seed is required (no wall-clock default)"] if missing_seed else []
    if missing_seed:
        values.pop("seed", None)
    try:
        cfg = RunConfig.model_validate(values)
    except ValidationError as e:
        issues += [i for i in _issues_from_validation(e) if not (missing_seed and i.startswith("seed:"))]
        raise ConfigError("; ".join(issues)) from None
    validate_run_config(cfg, known_experiments)
    return cfg


# ============================================================================
# ENVIRONMENT
# ============================================================================

class Config(BaseModel):
    ENV: str = "dev"
    NLSQ_THREADS: Optional[str] = None
    NLSQ_OUTPUT_DIR: Optional[str] = None
    NLSQ_LOG_FORMAT: str = "text"
    ENABLE_DEBUG_PRINTS: Optional[str] = None


def log_config(cfg: Config):
    lines = [
        "Environment",
        f"env                 = {cfg.ENV}",
        f"threads             = {cfg.NLSQ_THREADS}",
        f"output_dir          = {cfg.NLSQ_OUTPUT_DIR}",
        f"log_format          = {cfg.NLSQ_LOG_FORMAT}",
        f"pythonpath          = {os.environ.get('PYTHONPATH')}",
    ]
    print("\n".join(lines))


def validate_config(cfg: Config):
    issues: list[str] = []
    if cfg.NLSQ_THREADS is not None:
        if not cfg.NLSQ_THREADS.isdigit() or int(cfg.NLSQ_THREADS) < 1:
            issues.append(f"NLSQ_THREADS must be a positive integer, got {cfg.NLSQ_THREADS!r}")
    if cfg.NLSQ_LOG_FORMAT.lower() not in ("text", "json"):
        issues.append(f"NLSQ_LOG_FORMAT must be 'text' or 'json', got {cfg.NLSQ_LOG_FORMAT!r}")
    if issues:
        raise ConfigError("; ".join(issues))


def parse_environment() -> Config:
    """Read config from env vars."""
    cfg = Config()
    for k in cfg.__dict__.keys():
        if k in os.environ:
            setattr(cfg, k, os.environ[k])
    return cfg


def checked_config(cfg: Config | None = None) -> Config:
    """Read config from environment if not passed in, and validate it before returning."""
    if cfg is None:
        cfg = parse_environment()
    if debug_enabled():
        log_config(cfg)
    validate_config(cfg)
    return cfg

