from enum import Enum

from pydantic import BaseModel, Field, ConfigDict, field_validator, \
    model_validator

# Версия схемы всех записей JSON Lines, которые пишет пакет
SCHEMA_VERSION = 1


class FrameRecord(BaseModel):
    """
    Один выход детектора для кадра.
    Используется во входных и выходных потоках JSON Lines.
    """
    sequence_id: str = Field("default", description="ID видеопоследовательности")
    index: int = Field(..., ge=0, description="Номер кадра (с 0, подряд)")
    label: str = Field(..., min_length=1, description="Предсказанная метка действия")
    confidence: float = Field(..., ge=0, le=1,
                              description="Уверенность детектора [0, 1]")
    feature: list[float] = Field(default_factory=list,
                                 description="Вектор признаков кадра")
    box: list[float] | None = Field(None, min_length=4, max_length=4,
                                    description="Рамка в пикселях, не изменяется")
    truth_label: str | None = Field(None, description="Истинная метка, если известна")
    corruption: str | None = Field(
        None, description="Вид кадра в синтетике: flip, spur, ambiguous")
    effectiveness: float | None = Field(None,
                                        description="Итоговая эффективность кадра")

    model_config = ConfigDict(frozen=True, allow_inf_nan=False,
                              extra="ignore")


class ActionSegment(BaseModel):
    """
    Максимальный отрезок кадров с одной меткой.
    """
    start: int = Field(..., ge=0, description="Первый кадр отрезка")
    end: int = Field(..., ge=0, description="Последний кадр отрезка (включительно)")
    label: str = Field(..., description="Метка действия")

    model_config = ConfigDict(frozen=True)

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, index: int) -> bool:
        return self.start <= index <= self.end


class Level(str, Enum):
    HIGH = "high"
    LOW = "low"


class CognitionRecord(BaseModel):
    """
    Результат оценки эффективности одного кадра.
    """
    index: int = Field(..., ge=0, description="Номер кадра")
    label: str = Field(..., description="Метка, по которой считались признаки")
    c: float = Field(..., ge=0, le=1, description="Уверенность")
    n: float = Field(..., ge=-1, le=1, description="NPMI с предыдущим действием")
    g: float = Field(..., gt=0, le=1, description="Оценка положения в отрезке")
    u: float = Field(..., ge=0, le=1, description="Эффективность")
    level: Level = Field(
        ..., description="High, если u >= delta; при отключённой оценке "
                         "эффективности порог применяется к c")

    model_config = ConfigDict(frozen=True)


class UpdateOutcome(BaseModel):
    """
    Решение об обновлении кадра с низкой когницией.
    """
    index: int = Field(..., ge=0, description="Номер кадра")
    old_label: str = Field(..., description="Метка до обновления")
    new_label: str = Field(..., description="Метка после обновления")
    candidate_label: str | None = Field(None,
                                        description="Метка повторной детекции")
    c_hat: float | None = Field(None, description="Уверенность повторной детекции")
    u_old: float = Field(..., description="Исходная эффективность")
    u_hat: float | None = Field(None, description="Эффективность после повторной детекции")
    u_opt: float | None = Field(None, description="max(u_hat, u_old + tau)")
    accepted: bool = Field(..., description="Принято ли обновление")
    reason: str | None = Field(None, description="Почему кадр пропущен")

    model_config = ConfigDict(frozen=True)


class SweepRow(BaseModel):
    tau: float
    criterion: str
    frame_accuracy: float = Field(..., ge=0, le=1)
    mean_ap: float = Field(..., ge=0, le=1)
    accepted: int = Field(..., ge=0)


class AblationRow(BaseModel):
    name: str
    use_fcm: bool
    use_fcs: bool
    frame_accuracy: float = Field(..., ge=0, le=1)
    mean_ap: float = Field(..., ge=0, le=1)


class EvalReport(BaseModel):
    """
    Сравнение потоков до и после обновления с разметкой.
    """
    total: int = Field(..., ge=0, description="Число кадров")
    frame_accuracy_before: float = Field(..., ge=0, le=1)
    frame_accuracy_after: float = Field(..., ge=0, le=1)
    ap_before: dict[str, float] = Field(default_factory=dict,
                                        description="AP по классам до")
    ap_after: dict[str, float] = Field(default_factory=dict,
                                       description="AP по классам после")
    mean_ap_before: float = Field(..., ge=0, le=1)
    mean_ap_after: float = Field(..., ge=0, le=1)
    repaired: int = Field(..., ge=0, description="Исправленные кадры")
    broken: int = Field(..., ge=0, description="Испорченные верные кадры")
    excluded_classes: list[str] = Field(default_factory=list,
                                        description="Классы без положительных кадров")
    sweep: list[SweepRow] = Field(default_factory=list)


class CooccurrenceDocument(BaseModel):
    """
    Сохранённая модель совместной встречаемости действий.
    """
    labels: list[str]
    joint: list[list[float]]
    marginal: list[float]
    alpha: float = Field(..., ge=0)
    version: int = SCHEMA_VERSION


class PrototypeDocument(BaseModel):
    """
    Сохранённые прототипы классификатора повторной детекции.
    """
    labels: list[str]
    prototypes: list[list[float]]
    temperature: float = Field(..., gt=0)
    blend: float = Field(..., ge=0, le=1)
    version: int = SCHEMA_VERSION


class ProjectionDocument(BaseModel):
    """
    Сохранённые проекции ключей и значений, матрицы d x d'.
    """
    shape: tuple[int, int] = Field(..., description="Размерность (d, d')")
    key: list[list[float]]
    value: list[list[float]]
    version: int = SCHEMA_VERSION

    model_config = ConfigDict(allow_inf_nan=False)

    @model_validator(mode="after")
    def check_shape(self):
        rows, cols = self.shape
        if rows < 1 or cols < 1:
            raise ValueError(f"shape must be positive, got {self.shape}")
        for name, matrix in (("key", self.key), ("value", self.value)):
            if len(matrix) != rows or any(len(row) != cols for row in matrix):
                raise ValueError(
                    f"{name} matrix does not match declared shape {self.shape}")
        return self


class InferRequest(BaseModel):
    c: float = Field(..., description="Уверенность")
    n: float = Field(..., description="NPMI")
    g: float = Field(..., description="Оценка положения")

    model_config = ConfigDict(allow_inf_nan=False)


class InferResponse(BaseModel):
    u: float = Field(..., description="Эффективность")


class RuleText(BaseModel):
    text: str = Field(..., description="Документ правил .frl")
    strict: bool = Field(False, description="Проверять покрытие всех 125 сочетаний")


class DiagnosticOut(BaseModel):
    line: int
    column: int
    kind: str
    message: str


class GenerateRequest(BaseModel):
    mu1: float = Field(0.6, ge=0, le=1)
    mu2: float = Field(0.2, ge=0, le=1)
    include_published: bool = Field(True,
                                   description="Применить опубликованные правила как замены")

    @field_validator("mu2")
    @classmethod
    def weights_sum(cls, mu2: float, info):
        mu1 = info.data.get("mu1", 0.0)
        if mu1 + mu2 > 1:
            raise ValueError("mu1 + mu2 must not exceed 1")
        return mu2


class RunRequest(BaseModel):
    frames: list[FrameRecord] = Field(..., min_length=1)


class RunResponse(BaseModel):
    cognition: list[CognitionRecord]
    outcomes: list[UpdateOutcome]
    frames: list[FrameRecord]
    errors: list[str] = Field(default_factory=list)


class CompareRequest(BaseModel):
    before: list[FrameRecord]
    after: list[FrameRecord]
    truth: list[str]
