import logging
import os
from logging.config import fileConfig
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv, dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, \
    model_validator

from app.exceptions import InputError


load_dotenv()
CONFIG_PATH = os.getenv("COGNITION_CONFIG")
LOG_CONFIG = os.getenv("COGNITION_LOG_CONFIG", "logging.ini")

LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"


class PipelineConfig(BaseModel):
    """
    Настройки конвейера. Все поля необязательны; значения по умолчанию
    соответствуют опубликованным гиперпараметрам.
    """
    delta: float = Field(0.5, ge=0, le=1, description="Порог когниции")
    lam: int = Field(3, ge=1, alias="lambda",
                     description="Радиус окна коррелированной последовательности")
    tau: float = Field(0.35, description="Порог обновления")
    mu1: float = Field(0.6, ge=0, le=1, description="Вес уверенности")
    mu2: float = Field(0.2, ge=0, le=1, description="Вес NPMI")
    alpha: float = Field(0.5, ge=0, description="Аддитивное сглаживание NPMI")
    samples: int = Field(2001, ge=1001, description="Точек сетки дефаззификации")
    rule_file: Path | None = Field(None, description="Файл правил .frl")
    cooccurrence: str = Field("fit",
                              description="'fit' или путь к JSON модели")
    annotations: Path | None = Field(
        None, description="JSON Lines обучающей разметки для оценки NPMI")
    projection: str = Field("identity",
                            description="'identity', 'random' или путь к матрицам")
    projection_seed: int = Field(7, description="Зерно случайной проекции")
    projection_dim: int | None = Field(None, ge=1,
                                       description="Выходная размерность проекции")
    classifier: str = Field("means",
                            description="'means' или путь к JSON прототипов")
    temperature: float = Field(0.05, gt=0, description="Температура softmax")
    blend: float = Field(0.5, ge=0, le=1,
                         description="Вес агрегированного признака")
    update_mode: Literal["batch", "sequential"] = "batch"
    context: Literal["recompute", "freeze"] = "recompute"
    criterion: Literal["effectiveness", "confidence"] = "effectiveness"
    use_fcm: bool = Field(True, description="Разбивать кадры по эффективности")
    use_fcs: bool = Field(True, description="Выполнять повторную детекцию")
    seed: int = 0
    workers: int = Field(1, ge=1, description="Параллельные последовательности")

    model_config = ConfigDict(extra="forbid", populate_by_name=True,
                              frozen=True)

    @model_validator(mode="after")
    def weights_sum(self):
        if self.mu1 + self.mu2 > 1:
            raise ValueError("mu1 + mu2 must not exceed 1")
        return self


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """
    Плоский файл key = value (python-dotenv) и поверх него явные значения.
    """
    values: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"Config file not found: {path}")
        for key, value in dotenv_values(path).items():
            if value is None:
                raise InputError(f"{path}: key {key!r} has no value")
            values[key.strip().lower()] = value
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return PipelineConfig.model_validate(values)
    except ValidationError as exc:
        raise InputError(f"Invalid configuration: {exc}") from exc


def configure_logging(path: str | Path | None = None,
                      level: int | None = None) -> None:
    """
    Настройка логирования из ini-файла, иначе вывод в stderr.
    """
    path = Path(path or LOG_CONFIG)
    if path.is_file():
        fileConfig(path, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.WARNING, format=LOG_FORMAT)
    if level is not None:
        logging.getLogger("app").setLevel(level)
