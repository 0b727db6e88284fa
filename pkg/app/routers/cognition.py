from fastapi import APIRouter, Depends

from app.config import PipelineConfig
from app.dependencies import get_settings, http_error
from app.exceptions import CognitionError
from app.fuzzy_core import FuzzySystem, infer
from app.pipeline import build_rulebase, run_pipeline
from app.schemas import FrameRecord, InferRequest, InferResponse, \
    RunRequest, RunResponse

router = APIRouter(prefix="/cognition", tags=["cognition"])


@router.post("/infer", response_model=InferResponse)
def infer_effectiveness(body: InferRequest,
                        settings: PipelineConfig = Depends(get_settings)):
    """
    Эффективность u для одной тройки (c, n, g).
    """
    try:
        u = infer(build_rulebase(settings), body.c, body.n, body.g,
                  FuzzySystem(samples=settings.samples))
    except CognitionError as exc:
        raise http_error(exc)
    return InferResponse(u=u)


@router.post("/run", response_model=RunResponse)
def run_cognition(body: RunRequest,
                  settings: PipelineConfig = Depends(get_settings)):
    """
    Полный конвейер над кадрами одной или нескольких последовательностей.
    """
    sequences: dict[str, list[FrameRecord]] = {}
    for frame in body.frames:
        sequences.setdefault(frame.sequence_id, []).append(frame)
    for sid, frames in sequences.items():
        frames.sort(key=lambda f: f.index)
        if [f.index for f in frames] != list(range(len(frames))):
            raise http_error(CognitionError(
                f"sequence {sid!r}: frame indices must be 0..{len(frames) - 1}"))
    try:
        result = run_pipeline(sequences, settings)
    except CognitionError as exc:
        raise http_error(exc)
    return RunResponse(
        cognition=[r for s in result.sequences for r in s.cognition],
        outcomes=[o for s in result.sequences for o in s.outcomes],
        frames=[f for s in result.sequences for f in s.frames],
        errors=[f"{s.sequence_id}: {e}" for s in result.sequences
                for e in s.errors])
