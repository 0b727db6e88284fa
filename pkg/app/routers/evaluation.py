from fastapi import APIRouter

from app.dependencies import http_error
from app.exceptions import CognitionError
from app.schemas import CompareRequest, EvalReport
from app.synth_eval import compare

router = APIRouter(prefix="/evaluation", tags=["evaluation"])


@router.post("/compare", response_model=EvalReport)
def compare_streams(body: CompareRequest, score: str = "confidence"):
    """
    Точность и AP потоков до и после обновления относительно разметки.
    """
    try:
        return compare(body.before, body.after, body.truth, score)
    except CognitionError as exc:
        raise http_error(exc)
