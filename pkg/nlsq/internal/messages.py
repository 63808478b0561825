"""Status records printed to stderr while experiments run.

With NLSQ_LOG_FORMAT=json each record is one JSON object per line,
otherwise it is rendered as 'LEVEL: text key=value ...'.
"""
import os
import sys
from datetime import datetime
from enum import Enum
from typing import Any, Dict, Literal

from pydantic import BaseModel, Field

from .exceptionmodel import ExceptionModel
from .utils import debug_enabled, utc_now


class Topics(str, Enum):
    """Kinds of record a run emits."""

    run_started = "run.started"
    run_finished = "run.finished"
    stage = "run.stage"
    check = "run.check"
    log = "run.log"
    import_error = "cli.import_error"


class RunLog(BaseModel):
    timestamp: datetime
    level: Literal["debug", "info", "warning", "error"]
    topic: Topics = Topics.log
    text: str
    context: Dict[str, Any] = Field(default_factory=dict)


class RunFinished(BaseModel):
    timestamp: datetime
    experiment: str
    duration: float
    exitCode: int
    checksPassed: int
    checksFailed: int
    exception: ExceptionModel | None = None


def log_format() -> str:
    return os.environ.get("NLSQ_LOG_FORMAT", "text").lower()


def render(record: RunLog) -> str:
    if log_format() == "json":
        return record.model_dump_json()
    extra = " ".join(f"{k}={v}" for k, v in record.context.items())
    return f"{record.level.upper()}: {record.text}" + (f" {extra}" if extra else "")


def emit(level: str, text: str, topic: Topics = Topics.log, **context: Any) -> RunLog:
    """Print a record to stderr; debug records only when debugging is enabled."""
    record = RunLog(timestamp=utc_now(), level=level, topic=topic, text=text, context=context)
    if level != "debug" or debug_enabled():
        print(render(record), file=sys.stderr)
    return record


def info(text: str, **context: Any) -> RunLog:
    return emit("info", text, **context)


def warning(text: str, **context: Any) -> RunLog:
    return emit("warning", text, **context)


def error(text: str, **context: Any) -> RunLog:
    return emit("error", text, **context)


def finished(experiment: str, duration: float, exit_code: int, passed: int, failed: int, exception: ExceptionModel | None = None) -> RunFinished:
    """Closing record of a run."""
    record = RunFinished(
        timestamp=utc_now(),
        experiment=experiment,
        duration=duration,
        exitCode=exit_code,
        checksPassed=passed,
        checksFailed=failed,
        exception=exception,
    )
    if log_format() == "json":
        print(record.model_dump_json(), file=sys.stderr)
    else:
        status = "ok" if exit_code == 0 else f"exit {exit_code}"
        print(f"INFO: finished {experiment} in {duration:.2f}s ({status}, {passed} passed, {failed} failed)", file=sys.stderr)
    return record
