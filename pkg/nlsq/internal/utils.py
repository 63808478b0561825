import os
import hashlib
import json
from datetime import datetime, timezone
from typing import Any, Dict


def utc_now() -> datetime:
    """Return current time in UTC."""
    return datetime.now(tz=timezone.utc)


def compute_signature(txt: str) -> str:
    """Compute hash of text."""
    return hashlib.sha256(txt.encode()).digest().hex()


def compute_spec_signature(obj: Dict[str, Any]) -> str:
    """Compute hash of json-serialization of object."""
    return compute_signature(json.dumps(obj, sort_keys=True, default=str))


def debug_enabled() -> bool:
    return os.environ.get("ENABLE_DEBUG_PRINTS") == "1"


def jsonable(value: Any) -> Any:
    """Numpy scalars to Python, complex to [re, im], recursively through containers."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if hasattr(value, "item") and getattr(value, "ndim", 1) == 0:
        value = value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def apply_thread_budget(threads: int | str | None) -> None:
    """Export the BLAS/OpenMP thread budget; only effective before numpy is loaded."""
    if threads is None:
        return
    for name in THREAD_VARIABLES:
        os.environ[name] = str(threads)
