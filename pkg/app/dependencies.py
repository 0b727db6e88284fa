from functools import lru_cache

from fastapi import HTTPException, status

from app.config import CONFIG_PATH, PipelineConfig, load_config
from app.exceptions import CognitionError, DataError, InputError, \
    RuleParseError


@lru_cache
def get_settings() -> PipelineConfig:
    """
    Настройки конвейера для сервиса: файл из COGNITION_CONFIG или значения
    по умолчанию. Загружаются один раз на процесс.
    """
    return load_config(CONFIG_PATH)


def http_error(exc: CognitionError) -> HTTPException:
    """
    Ошибки входных данных дают 422, прочие ошибки предметной области 400.
    """
    if isinstance(exc, (InputError, DataError, RuleParseError)):
        code = status.HTTP_422_UNPROCESSABLE_CONTENT
    else:
        code = status.HTTP_400_BAD_REQUEST
    return HTTPException(status_code=code, detail=str(exc))
