from fastapi import APIRouter
from fastapi.responses import PlainTextResponse

from app.dependencies import http_error
from app.exceptions import CognitionError, RuleParseError
from app.rule_dsl import default_rulebase, generate_default_rulebase, \
    parse_rulebase, published_rules, serialize, validate
from app.schemas import DiagnosticOut, GenerateRequest, RuleText

router = APIRouter(prefix="/rules", tags=["rules"])


def _diagnostics(items) -> list[DiagnosticOut]:
    return [DiagnosticOut(line=d.line, column=d.column, kind=d.kind.value,
                          message=d.message) for d in items]


@router.get("/default", response_class=PlainTextResponse)
def get_default_rules():
    """
    База правил по умолчанию в формате .frl.
    """
    return serialize(default_rulebase())


@router.post("/validate", response_model=list[DiagnosticOut])
def validate_rules(body: RuleText):
    """
    Диагностики документа правил. Пустой список: документ корректен.
    """
    try:
        return _diagnostics(validate(parse_rulebase(body.text), body.strict))
    except RuleParseError as exc:
        return _diagnostics(exc.diagnostics)


@router.post("/generate", response_class=PlainTextResponse)
def generate_rules(body: GenerateRequest):
    overrides = published_rules() if body.include_published else ()
    try:
        rulebase = generate_default_rulebase(body.mu1, body.mu2, overrides)
    except CognitionError as exc:
        raise http_error(exc)
    return serialize(rulebase)
