"""Failed runs are recorded in the manifest as an ExceptionModel."""
import pathlib
import traceback
from typing import List, Optional

from pydantic import BaseModel, Field

from nlsq.libs.domain_model import NLSQError

PACKAGE_ROOT = str(pathlib.Path(__file__).resolve().parents[1])


class FrameDetail(BaseModel):
    filename: str
    frameName: str
    lineNumber: int | None
    codeLine: str | None


class ExceptionModel(BaseModel):
    exceptionType: str
    message: str
    domainError: bool = Field(description="True for NLSQError subclasses raised by the engines")
    stage: Optional[str] = Field(None, description="Experiment stage that was running")
    stackTrace: List[FrameDetail]


def exception_to_model(e: BaseException, stage: Optional[str] = None, root_dir: Optional[str] = PACKAGE_ROOT) -> ExceptionModel:
    """Convert exception to model, keeping frames from root_dir onwards.

    Paths inside root_dir are written relative to it so manifests from
    different checkouts compare equal.
    """
    skip = root_dir is not None
    frames: list[FrameDetail] = []
    for frame in traceback.extract_tb(e.__traceback__):
        if root_dir and frame.filename.startswith(root_dir):
            skip = False
        if skip:
            continue
        filename = frame.filename
        if root_dir and filename.startswith(root_dir):
            filename = "nlsq" + filename[len(root_dir):]
        frames.append(FrameDetail(filename=filename, frameName=frame.name, lineNumber=frame.lineno, codeLine=frame.line))
    if not frames:
        frames = [
            FrameDetail(filename=f.filename, frameName=f.name, lineNumber=f.lineno, codeLine=f.line)
            for f in traceback.extract_tb(e.__traceback__)
        ]

    return ExceptionModel(
        exceptionType=type(e).__name__,
        message=str(e),
        domainError=isinstance(e, NLSQError),
        stage=stage,
        stackTrace=frames,
    )
