"""Writers for run outputs: CSV tables, JSON manifests and stored ensembles.

CSV floats use 17 significant digits so identical runs give identical bytes.
"""
import hashlib
from importlib import metadata
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from nlsq.internal.parsing import parse_json
from nlsq.libs.classical_gibbs import Ensemble, FreeFieldSampler
from nlsq.libs.fock_quantum import FockOperator, dump_operator
from nlsq.libs.models import EnsembleMetadata, RunManifest, TableRef

FLOAT_FORMAT = "%.17g"

TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "click", "python-dotenv")


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def compute_array_signature(*arrays: np.ndarray) -> str:
    """Hash of dtype, shape and raw bytes of the arrays, in order."""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(str(array.dtype).encode())
        digest.update(str(array.shape).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()


def split_complex(frame: pd.DataFrame) -> pd.DataFrame:
    """Complex columns become <name>_re / <name>_im pairs."""
    out = pd.DataFrame(index=frame.index)
    for column in frame.columns:
        values = frame[column]
        if np.iscomplexobj(values.to_numpy()):
            out[f"{column}_re"] = np.real(values.to_numpy())
            out[f"{column}_im"] = np.imag(values.to_numpy())
        else:
            out[column] = values
    return out


def write_table(frame: pd.DataFrame, output_dir: Path, name: str) -> TableRef:
    output_dir.mkdir(parents=True, exist_ok=True)
    frame = split_complex(frame)
    path = output_dir / f"{name}.csv"
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return TableRef(name=name, file=path.name, rows=len(frame), columns=[str(c) for c in frame.columns], sha256=_file_hash(path))


def write_manifest(manifest: RunManifest, output_dir: Path) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "manifest.json"
    path.write_text(manifest.model_dump_json(indent=2) + "\n")
    return path


def read_manifest(path: str | Path) -> RunManifest:
    return parse_json(Path(path).read_text(), RunManifest)


def write_ensemble(ensemble: Ensemble, sampler: FreeFieldSampler, output_dir: Path, name: str = "ensemble") -> Tuple[Path, Path]:
    """Coefficients and weights as .npz plus a JSON metadata sidecar."""
    output_dir.mkdir(parents=True, exist_ok=True)
    data_path = output_dir / f"{name}.npz"
    np.savez(data_path, samples=ensemble.samples, weights=ensemble.weights, kernel_hat=ensemble.potential.kernel_hat)
    grid = ensemble.grid
    meta = EnsembleMetadata(
        grid_k=grid.K,
        grid_p=grid.P,
        kappa=grid.kappa,
        nu=ensemble.nu,
        seed=ensemble.seed,
        chunk_size=sampler.chunk_size,
        size=ensemble.size,
        potential=ensemble.potential.variant,
        coupling=ensemble.potential.coupling,
        epsilon=ensemble.potential.epsilon,
        samples_sha256=compute_array_signature(ensemble.samples, ensemble.weights),
    )
    meta_path = output_dir / f"{name}.json"
    meta_path.write_text(meta.model_dump_json(indent=2) + "\n")
    return data_path, meta_path


def read_ensemble(data_path: str | Path) -> Tuple[np.ndarray, np.ndarray, EnsembleMetadata]:
    data_path = Path(data_path)
    meta = parse_json(data_path.with_suffix(".json").read_text(), EnsembleMetadata)
    with np.load(data_path) as data:
        return data["samples"], data["weights"], meta


def operator_frame(A: FockOperator) -> pd.DataFrame:
    return pd.DataFrame(dump_operator(A), columns=["row_sector", "col_sector", "row_occupation", "col_occupation", "re", "im"])
