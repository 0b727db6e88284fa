"""
Синтетические потоки детекций с внесёнными ошибками и оценка качества:
точность по кадрам, AP по классам, сравнение до/после, перебор порогов
и абляция.
"""
import json
import logging
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, \
    field_validator, model_validator

from app.config import PipelineConfig
from app.exceptions import InputError
from app.fcs import UpdateCriterion
from app.features import segment_labels
from app.pipeline import evaluate_corpus, update_corpus
from app.schemas import AblationRow, EvalReport, FrameRecord, SweepRow

logger = logging.getLogger(__name__)

DEFAULT_TAUS = (0.1, 0.2, 0.3, 0.35, 0.4, 0.5)


class SynthConfig(BaseModel):
    """
    Параметры генератора. Одинаковая конфигурация даёт одинаковый корпус.
    """
    num_labels: int = Field(8, ge=2, description="Число классов действий")
    feature_dim: int = Field(16, ge=1, description="Размерность признаков")
    dwell: float = Field(8.0, ge=1, description="Средняя длина отрезка")
    transition: list[list[float]] | None = Field(
        None, description="Матрица переходов; по умолчанию структурная")
    noise_sigma: float = Field(0.3, ge=0, description="Норма шума признаков")
    flip_rate: float = Field(0.0, ge=0, le=1,
                             description="Вероятность подмены похожим действием")
    spur_rate: float = Field(0.0, ge=0, le=1,
                             description="Вероятность одиночного ложного кадра")
    ambiguity_rate: float = Field(
        0.15, ge=0, le=1,
        description="Вероятность отрезка, снятого похожим на парное действие")
    similar_pairs: list[tuple[int, int]] = Field(
        default_factory=lambda: [(0, 4), (1, 5)],
        description="Пары похожих действий")
    prototype_similarity: float = Field(
        0.5, ge=0, lt=1, description="Косинус между прототипами пары")
    clean_confidence: tuple[float, float] = (0.6, 1.0)
    corrupt_confidence: tuple[float, float] = (0.0, 0.1)
    ambiguous_confidence: tuple[float, float] = (0.3, 0.9)
    num_sequences: int = Field(200, ge=1)
    sequence_length: int = Field(100, ge=1)
    num_annotations: int | None = Field(
        None, ge=1, description="Последовательностей обучающей разметки")
    seed: int = 0

    model_config = ConfigDict(extra="forbid", frozen=True)

    @field_validator("transition", "similar_pairs", "clean_confidence",
                     "corrupt_confidence", "ambiguous_confidence",
                     mode="before")
    @classmethod
    def parse_json(cls, value):
        # В плоском файле настроек списки записываются как JSON
        return json.loads(value) if isinstance(value, str) else value

    @model_validator(mode="after")
    def check_pairs(self):
        seen = set()
        for a, b in self.similar_pairs:
            if not (0 <= a < self.num_labels and 0 <= b < self.num_labels):
                raise ValueError(f"similar pair ({a}, {b}) is out of range")
            if a == b or a in seen or b in seen:
                raise ValueError("similar pairs must be disjoint pairs "
                                 "of distinct labels")
            seen.update((a, b))
        for low, high in (self.clean_confidence, self.corrupt_confidence,
                          self.ambiguous_confidence):
            if not 0 <= low <= high <= 1:
                raise ValueError("confidence bands must lie in [0, 1]")
        return self

    @property
    def labels(self) -> list[str]:
        return [f"action_{k:02d}" for k in range(self.num_labels)]

    @property
    def partners(self) -> dict[int, int]:
        pairs = {}
        for a, b in self.similar_pairs:
            pairs[a], pairs[b] = b, a
        return pairs


@dataclass
class SynthCorpus:
    truth: dict[str, list[str]]
    frames: dict[str, list[FrameRecord]]
    annotations: list[list[str]] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    @property
    def truth_frames(self) -> dict[str, list[FrameRecord]]:
        """
        Чистый поток: метка равна истинной, уверенность 1.
        """
        return {sid: [f.model_copy(update={
            "label": f.truth_label, "confidence": 1.0, "corruption": None})
            for f in frames] for sid, frames in self.frames.items()}

    @property
    def annotation_frames(self) -> dict[str, list[FrameRecord]]:
        return {f"ann_{k:04d}": [
            FrameRecord(sequence_id=f"ann_{k:04d}", index=i, label=label,
                        confidence=1.0, truth_label=label)
            for i, label in enumerate(labels)]
            for k, labels in enumerate(self.annotations)}


def transition_matrix(cfg: SynthConfig) -> np.ndarray:
    """
    Явная матрица проверяется на стохастичность. Структурная: действия
    идут по циклу, за каждым классом следует ближайший следующий, кроме
    похожего действия. Остальные переходы не встречаются.
    """
    size = cfg.num_labels
    if cfg.transition is not None:
        matrix = np.asarray(cfg.transition, dtype=float)
        if matrix.shape != (size, size):
            raise InputError(f"transition matrix must be {size}x{size}, "
                             f"got {matrix.shape}")
        if np.any(matrix < 0) or not np.allclose(matrix.sum(axis=1), 1.0,
                                                 atol=1e-9):
            raise InputError("transition rows must be non-negative "
                             "and sum to 1")
        return matrix

    partners = cfg.partners
    matrix = np.zeros((size, size))
    for k in range(size):
        allowed = [(k + j) % size for j in range(1, size)
                   if (k + j) % size != partners.get(k)]
        if not allowed:
            raise InputError(f"label {k} has no admissible successor")
        matrix[k, allowed[0]] = 1.0
    return matrix


def prototypes(cfg: SynthConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 0])
    protos = rng.standard_normal((cfg.num_labels, cfg.feature_dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    s = cfg.prototype_similarity
    for a, b in cfg.similar_pairs:
        orth = protos[b] - np.dot(protos[b], protos[a]) * protos[a]
        norm = np.linalg.norm(orth)
        if norm > 0:
            protos[b] = s * protos[a] + np.sqrt(1 - s * s) * orth / norm
    return protos


def _truth_chain(rng: np.random.Generator, matrix: np.ndarray, dwell: float,
                 length: int) -> list[int]:
    chain: list[int] = []
    label = int(rng.integers(len(matrix)))
    while len(chain) < length:
        chain.extend([label] * int(rng.geometric(1.0 / dwell)))
        label = int(rng.choice(len(matrix), p=matrix[label]))
    return chain[:length]


def _spurious_label(rng: np.random.Generator, matrix: np.ndarray,
                    truth: int, partners: Mapping[int, int]) -> int:
    """
    Несвязанное действие: наименее вероятный переход из истинного класса.
    """
    candidates = [k for k in range(len(matrix))
                  if k != truth and k != partners.get(truth)]
    if not candidates:
        candidates = [k for k in range(len(matrix)) if k != truth]
    row = matrix[truth, candidates]
    rarest = [k for k, p in zip(candidates, row) if p <= row.min() + 1e-12]
    return int(rarest[int(rng.integers(len(rarest)))])


def _ambiguous_frames(rng: np.random.Generator, chain: Sequence[int],
                      cfg: SynthConfig) -> dict[int, float]:
    """
    Отрезки парных действий, которые выглядят как парное действие.
    Метка детектора верная, уверенность из ambiguous_confidence.
    """
    partners = cfg.partners
    confidences: dict[int, float] = {}
    for segment in segment_labels([str(k) for k in chain]):
        if chain[segment.start] not in partners \
                or rng.random() >= cfg.ambiguity_rate:
            continue
        for i in range(segment.start, segment.end + 1):
            confidences[i] = float(rng.uniform(*cfg.ambiguous_confidence))
    return confidences


def generate(cfg: SynthConfig = SynthConfig()) -> SynthCorpus:
    """
    Истинная разметка: марковская цепь отрезков, признаки: прототип
    класса плюс гауссов шум. Часть отрезков парных действий получает
    признаки пары при верной метке. Остальные кадры могут стать подменой
    похожим действием или одиночным ложным кадром с низкой уверенностью.
    """
    matrix = transition_matrix(cfg)
    protos = prototypes(cfg)
    names = cfg.labels
    partners = cfg.partners
    scale = cfg.noise_sigma / np.sqrt(cfg.feature_dim)

    truth: dict[str, list[str]] = {}
    frames: dict[str, list[FrameRecord]] = {}
    for s in range(cfg.num_sequences):
        sid = f"seq_{s:04d}"
        rng = np.random.default_rng([cfg.seed, 1, s])
        chain = _truth_chain(rng, matrix, cfg.dwell, cfg.sequence_length)
        noise = rng.standard_normal((len(chain), cfg.feature_dim)) * scale
        ambiguous = _ambiguous_frames(
            np.random.default_rng([cfg.seed, 4, s]), chain, cfg)

        corrupt = np.random.default_rng([cfg.seed, 2, s])
        records = []
        for i, label in enumerate(chain):
            flip_draw, spur_draw = corrupt.random(2)
            clean_c = corrupt.uniform(*cfg.clean_confidence)
            corrupt_c = corrupt.uniform(*cfg.corrupt_confidence)
            spurious = _spurious_label(corrupt, matrix, label, partners)

            detected, confidence, kind, source = label, clean_c, None, label
            if i in ambiguous:
                confidence, kind = ambiguous[i], "ambiguous"
                source = partners[label]
            elif label in partners and flip_draw < cfg.flip_rate:
                detected, confidence, kind = partners[label], corrupt_c, "flip"
            elif spur_draw < cfg.spur_rate:
                detected, confidence, kind = spurious, corrupt_c, "spur"
            records.append(FrameRecord(
                sequence_id=sid, index=i, label=names[detected],
                confidence=float(confidence),
                feature=(protos[source] + noise[i]).tolist(),
                truth_label=names[label], corruption=kind))
        truth[sid] = [names[k] for k in chain]
        frames[sid] = records

    annotations = []
    for s in range(cfg.num_annotations or cfg.num_sequences):
        rng = np.random.default_rng([cfg.seed, 3, s])
        annotations.append([names[k] for k in _truth_chain(
            rng, matrix, cfg.dwell, cfg.sequence_length)])

    kinds = Counter(f.corruption for records in frames.values()
                    for f in records if f.corruption is not None)
    logger.info("Generated %d sequence(s): %d flip(s), %d spurious, "
                "%d ambiguous frame(s)", len(frames), kinds["flip"],
                kinds["spur"], kinds["ambiguous"])
    return SynthCorpus(truth, frames, annotations, names)


def flatten(sequences: Mapping[str, Sequence[FrameRecord]]) -> list[FrameRecord]:
    return [f for frames in sequences.values() for f in frames]


def _check_aligned(*streams: Sequence) -> None:
    lengths = {len(s) for s in streams}
    if len(lengths) != 1:
        raise InputError(f"streams are not aligned: lengths {sorted(lengths)}")


def frame_accuracy(pred: Sequence[str], truth: Sequence[str]) -> float:
    _check_aligned(pred, truth)
    if not truth:
        raise InputError("empty streams")
    return sum(p == t for p, t in zip(pred, truth)) / len(truth)


def average_precision(scored: Sequence[tuple[float, bool]],
                      num_positives: int) -> float:
    """
    AP по огибающей точности: сортировка по убыванию уверенности
    (устойчивая), sum_k max_{j>=k} P(j) * dR(k).
    """
    if num_positives <= 0:
        raise InputError("average precision needs at least one positive")
    if not scored:
        return 0.0
    order = sorted(range(len(scored)), key=lambda k: -scored[k][0])
    correct = np.array([scored[k][1] for k in order], dtype=float)
    precision = np.cumsum(correct) / np.arange(1, len(correct) + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum(envelope * correct) / num_positives)


def _score(frame: FrameRecord, score: str) -> float:
    if score == "effectiveness" and frame.effectiveness is not None:
        return frame.effectiveness
    return frame.confidence


def mean_ap(frames: Sequence[FrameRecord], truth: Sequence[str],
            score: str = "confidence"
            ) -> tuple[dict[str, float], float, list[str]]:
    """
    AP каждого класса и среднее по классам, у которых есть хотя бы один
    истинный кадр. Классы без позитивов возвращаются отдельно.
    """
    _check_aligned(frames, truth)
    positives: dict[str, int] = {}
    for label in truth:
        positives[label] = positives.get(label, 0) + 1
    scored: dict[str, list[tuple[float, bool]]] = {}
    for frame, label in zip(frames, truth):
        scored.setdefault(frame.label, []).append(
            (_score(frame, score), frame.label == label))

    excluded = sorted(set(scored) - set(positives))
    if excluded:
        logger.warning("Classes without ground-truth frames excluded "
                       "from mAP: %s", ", ".join(excluded))
    per_class = {label: average_precision(scored.get(label, []), count)
                 for label, count in sorted(positives.items())}
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean, excluded


def compare(before: Sequence[FrameRecord], after: Sequence[FrameRecord],
            truth: Sequence[str], score: str = "confidence",
            sweep: Iterable[SweepRow] = ()) -> EvalReport:
    _check_aligned(before, after, truth)
    ap_before, map_before, excluded_before = mean_ap(before, truth, score)
    ap_after, map_after, excluded_after = mean_ap(after, truth, score)
    repaired = sum(b.label != t and a.label == t
                   for b, a, t in zip(before, after, truth))
    broken = sum(b.label == t and a.label != t
                 for b, a, t in zip(before, after, truth))
    return EvalReport(
        total=len(truth),
        frame_accuracy_before=frame_accuracy([f.label for f in before], truth),
        frame_accuracy_after=frame_accuracy([f.label for f in after], truth),
        ap_before=ap_before, ap_after=ap_after,
        mean_ap_before=map_before, mean_ap_after=map_after,
        repaired=repaired, broken=broken,
        excluded_classes=sorted(set(excluded_before) | set(excluded_after)),
        sweep=list(sweep))


def truth_of(frames: Sequence[FrameRecord]) -> list[str]:
    missing = [f.index for f in frames if f.truth_label is None]
    if missing:
        raise InputError(f"{len(missing)} frame(s) carry no truth_label")
    return [f.truth_label for f in frames]


def threshold_sweep(sequences: Mapping[str, Sequence[FrameRecord]],
                    truth: Sequence[str], settings: PipelineConfig,
                    taus: Iterable[float] = DEFAULT_TAUS,
                    criteria: Iterable[str] = ("effectiveness", "confidence"),
                    annotations: Sequence[Sequence[str]] | None = None
                    ) -> list[SweepRow]:
    """
    Строка на каждую пару (критерий, tau). Критерий effectiveness: полный
    конвейер, AP ранжируется по эффективности. Критерий confidence:
    конвейер без FCM, кадры делятся и ранжируются по уверенности.
    Первый проход выполняется один раз на вариант.
    """
    evaluated = {}
    rows = []
    for criterion in map(UpdateCriterion, criteria):
        use_fcm = criterion is UpdateCriterion.EFFECTIVENESS
        variant = settings.model_copy(update={
            "use_fcm": use_fcm, "use_fcs": True,
            "criterion": criterion.value})
        if use_fcm not in evaluated:
            evaluated[use_fcm] = evaluate_corpus(sequences, variant,
                                                 annotations)
        score = "effectiveness" if use_fcm else "confidence"
        for tau in taus:
            result = update_corpus(evaluated[use_fcm],
                                   variant.model_copy(update={"tau": tau}))
            frames = flatten(result.frames)
            _, mean, _ = mean_ap(frames, truth, score)
            rows.append(SweepRow(
                tau=tau, criterion=criterion.value,
                frame_accuracy=frame_accuracy([f.label for f in frames], truth),
                mean_ap=mean, accepted=result.accepted))
            logger.info("tau=%.2f criterion=%s: accuracy %.4f, mAP %.4f",
                        tau, criterion.value, rows[-1].frame_accuracy, mean)
    return rows


ABLATION_VARIANTS = (
    ("baseline", False, False),
    ("fcm", True, False),
    ("fcs-confidence", False, True),
    ("fcm+fcs", True, True),
)


def ablation(sequences: Mapping[str, Sequence[FrameRecord]],
             truth: Sequence[str], settings: PipelineConfig,
             annotations: Sequence[Sequence[str]] | None = None
             ) -> list[AblationRow]:
    """
    Без обновления, только оценка эффективности, обновление по
    уверенности без FCM и полный конвейер. Варианты с FCM ранжируют AP
    по эффективности.
    """
    rows = []
    evaluated = {}
    for name, use_fcm, use_fcs in ABLATION_VARIANTS:
        variant = settings.model_copy(update={"use_fcm": use_fcm,
                                              "use_fcs": use_fcs})
        if use_fcm not in evaluated:
            evaluated[use_fcm] = evaluate_corpus(sequences, variant,
                                                 annotations)
        frames = flatten(update_corpus(evaluated[use_fcm], variant).frames)
        _, mean, _ = mean_ap(frames, truth,
                             "effectiveness" if use_fcm else "confidence")
        rows.append(AblationRow(
            name=name, use_fcm=use_fcm, use_fcs=use_fcs,
            frame_accuracy=frame_accuracy([f.label for f in frames], truth),
            mean_ap=mean))
    return rows


def format_report(report: EvalReport) -> str:
    lines = [
        f"frames: {report.total}",
        f"{'':<24}{'before':>10}{'after':>10}",
        f"{'frame accuracy':<24}{report.frame_accuracy_before:>10.4f}"
        f"{report.frame_accuracy_after:>10.4f}",
        f"{'mean AP':<24}{report.mean_ap_before:>10.4f}"
        f"{report.mean_ap_after:>10.4f}",
    ]
    for label in sorted(set(report.ap_before) | set(report.ap_after)):
        lines.append(f"{'  AP ' + label:<24}"
                     f"{report.ap_before.get(label, 0.0):>10.4f}"
                     f"{report.ap_after.get(label, 0.0):>10.4f}")
    lines.append(f"repaired: {report.repaired}  broken: {report.broken}")
    if report.excluded_classes:
        lines.append("excluded: " + ", ".join(report.excluded_classes))
    if report.sweep:
        lines.append("")
        lines.append(f"{'tau':>6}  {'criterion':<14}{'accuracy':>10}"
                     f"{'mAP':>10}{'accepted':>10}")
        for row in report.sweep:
            lines.append(f"{row.tau:>6.2f}  {row.criterion:<14}"
                         f"{row.frame_accuracy:>10.4f}{row.mean_ap:>10.4f}"
                         f"{row.accepted:>10d}")
    return "\n".join(lines)


def load_synth_config(path: str | Path | None = None,
                      **overrides) -> SynthConfig:
    """
    Плоский файл key = value, как и для настроек конвейера.
    """
    values: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"Config file not found: {path}")
        values = {key.strip().lower(): value
                  for key, value in dotenv_values(path).items()
                  if value is not None}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SynthConfig.model_validate(values)
    except ValidationError as exc:
        raise InputError(f"Invalid synthetic corpus configuration: {exc}") \
            from exc
