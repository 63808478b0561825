"""Serialisation models for run manifests, checks and stored ensembles."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    """Outcome of one acceptance check."""
    name: str = Field(description="Check identifier, unique within a run")
    passed: bool = Field(description="True when the measured value meets the threshold")
    value: Optional[float] = Field(None, description="Measured quantity")
    threshold: Optional[float] = Field(None, description="Bound the value is compared with")
    detail: str = Field("", description="Human readable comparison")


class TableRef(BaseModel):
    """CSV table written by a run."""
    name: str = Field(description="Table name")
    file: str = Field(description="File name relative to the output directory")
    rows: int = Field(description="Number of rows")
    columns: List[str] = Field(description="Column names in order")
    sha256: str = Field(description="Hash of the file contents")


class RunManifest(BaseModel):
    """Everything needed to audit and reproduce a run.

    Carries no wall-clock fields so identical configs give identical manifests.
    """
    experiment: str = Field(description="Runner name")
    preset: Optional[str] = Field(None, description="Preset the config started from")
    config: Dict[str, Any] = Field(description="Full validated run config")
    config_hash: str = Field(description="SHA-256 of the sorted JSON config")
    versions: Dict[str, str] = Field(description="Package versions the run used")
    checks: List[CheckResult] = Field(default_factory=list, description="Acceptance checks")
    tables: List[TableRef] = Field(default_factory=list, description="Tables written")
    artifacts: List[str] = Field(default_factory=list, description="Other files written")
    summary: Dict[str, Any] = Field(default_factory=dict, description="Scalar results of the run")
    exit_code: int = Field(description="0 pass, 1 failed check, 2 configuration error")
    exception: Optional[Dict[str, Any]] = Field(None, description="Failure details when the run raised")


class EnsembleMetadata(BaseModel):
    """Sidecar of a stored ensemble (.npz)."""
    grid_k: int = Field(description="Largest mode index")
    grid_p: int = Field(description="Physical samples")
    kappa: float = Field(description="Chemical potential")
    nu: float = Field(description="Shift of the sampled free state")
    seed: int = Field(description="Seed of the omega stream")
    chunk_size: int = Field(description="Samples per seeded chunk")
    size: int = Field(description="Number of samples")
    potential: str = Field(description="Potential variant")
    coupling: float = Field(description="Interaction strength")
    epsilon: Optional[float] = Field(None, description="Mollifier width")
    samples_sha256: str = Field(description="Hash of the coefficient and weight arrays")


class PresetInfo(BaseModel):
    name: str = Field(description="Preset name")
    experiment: str = Field(description="Runner the preset drives")
    description: str = Field(description="One-line summary")
