"""
Признаки когниции кадра: уверенность, NPMI соседних действий и
гауссова оценка положения кадра внутри действия.
"""
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.exceptions import CognitionError, ContractError, FrameError, \
    InputError, UnknownLabelError
from app.schemas import ActionSegment, CooccurrenceDocument, FrameRecord
from app.streams import read_document

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.5
SUM_TOLERANCE = 1e-9


def segment_labels(labels: Sequence[str]) -> list[ActionSegment]:
    """
    Разбивает поток меток на максимальные отрезки одинаковых меток.
    """
    if not labels:
        raise InputError("Cannot segment an empty sequence")
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segments.append(ActionSegment(start=start, end=i - 1,
                                          label=labels[start]))
            start = i
    return segments


def segment_runs(sequence: Sequence[FrameRecord]) -> list[ActionSegment]:
    return segment_labels([record.label for record in sequence])


def segment_transitions(labels: Sequence[str]) -> list[tuple[str, str]]:
    segments = segment_labels(labels)
    return [(a.label, b.label) for a, b in zip(segments, segments[1:])]


@dataclass(frozen=True, eq=False)
class CooccurrenceModel:
    """
    Совместные вероятности переходов между соседними отрезками действий.
    """
    labels: tuple[str, ...]
    joint: np.ndarray
    marginal: np.ndarray
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        k = len(self.labels)
        if k == 0:
            raise InputError("Co-occurrence model needs a non-empty vocabulary")
        joint = np.asarray(self.joint, dtype=float)
        marginal = np.asarray(self.marginal, dtype=float)
        if joint.shape != (k, k) or marginal.shape != (k,):
            raise InputError(
                f"Co-occurrence tables do not match {k} labels")
        if abs(joint.sum() - 1.0) > SUM_TOLERANCE or \
                abs(marginal.sum() - 1.0) > SUM_TOLERANCE:
            raise InputError("Co-occurrence probabilities must sum to 1")
        joint.setflags(write=False)
        marginal.setflags(write=False)
        object.__setattr__(self, "joint", joint)
        object.__setattr__(self, "marginal", marginal)
        object.__setattr__(self, "_index",
                           {label: i for i, label in enumerate(self.labels)})

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    def to_document(self) -> CooccurrenceDocument:
        return CooccurrenceDocument(
            labels=list(self.labels), joint=self.joint.tolist(),
            marginal=self.marginal.tolist(), alpha=self.alpha)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_document().model_dump_json(indent=2),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CooccurrenceModel":
        doc = read_document(path, CooccurrenceDocument)
        return cls(tuple(doc.labels), np.array(doc.joint),
                   np.array(doc.marginal), doc.alpha)


def fit_cooccurrence(corpus: Iterable[Sequence[str]],
                     alpha: float = DEFAULT_ALPHA,
                     vocabulary: Iterable[str] = ()) -> CooccurrenceModel:
    """
    Считает упорядоченные пары меток соседних отрезков (не кадров),
    добавляет alpha к каждой ячейке словаря и нормирует.
    Маргиналы: среднее распределений начала и конца пары.
    """
    if alpha < 0:
        raise InputError(f"Smoothing alpha must be non-negative, got {alpha}")
    corpus = [list(seq) for seq in corpus]
    if not corpus:
        raise InputError("Co-occurrence corpus is empty")

    labels = sorted(set(vocabulary).union(*corpus))
    if not labels:
        raise InputError("Co-occurrence vocabulary is empty")
    index = {label: i for i, label in enumerate(labels)}

    counts = np.full((len(labels), len(labels)), float(alpha))
    transitions = 0
    for seq in corpus:
        if not seq:
            continue
        for prev, cur in segment_transitions(seq):
            counts[index[prev], index[cur]] += 1.0
            transitions += 1

    total = counts.sum()
    if total <= 0:
        raise InputError("No transitions to estimate from and alpha is 0")
    joint = counts / total
    marginal = (joint.sum(axis=1) + joint.sum(axis=0)) / 2.0
    logger.info("Fitted co-occurrence model: %d labels, %d transitions",
                len(labels), transitions)
    return CooccurrenceModel(tuple(labels), joint, marginal, alpha)


def npmi(model: CooccurrenceModel, prev: str, cur: str) -> float:
    """
    Нормированная поточечная взаимная информация, отсечённая в [-1, 1].
    """
    a, b = model.index(prev), model.index(cur)
    p_ab = float(model.joint[a, b])
    p_a, p_b = float(model.marginal[a]), float(model.marginal[b])
    if p_ab <= 0.0:
        return -1.0
    if p_ab >= 1.0:
        return 1.0
    value = math.log(p_ab / (p_a * p_b)) / -math.log(p_ab)
    return min(1.0, max(-1.0, value))


def position_score(segment: ActionSegment, i: int, raw: bool = False) -> float:
    """
    Гауссова оценка положения кадра i в отрезке, нормированная на пик
    (центр отрезка = 1). При raw=True исходная плотность.
    Для отрезка из одного кадра sigma не определена, возвращается 1.0.
    """
    if i not in segment:
        raise ContractError(
            f"Frame {i} lies outside segment {segment.start}-{segment.end}")
    n = segment.end - segment.start
    if n == 0:
        return 1.0
    mu = segment.start + n / 2
    sigma = math.sqrt(sum((j - mu) ** 2
                          for j in range(segment.start, segment.end + 1)) / n)
    z = (i - mu) / sigma
    score = math.exp(-0.5 * z * z)
    if raw:
        return score / (sigma * math.sqrt(2 * math.pi))
    return score


@dataclass(frozen=True)
class FrameContext:
    """
    Тройка признаков (C, N, G) кадра.
    """
    c: float
    n: float
    g: float


def context_npmi(model: CooccurrenceModel, labels: Sequence[str],
                 segment: ActionSegment) -> float:
    # У первого отрезка последовательности предшественника нет
    if segment.start == 0:
        return 0.0
    return npmi(model, labels[segment.start - 1], segment.label)


def frame_contexts(sequence: Sequence[FrameRecord],
                   model: CooccurrenceModel) -> list[FrameContext]:
    """
    Признаки всех кадров по текущим предсказанным меткам.
    """
    labels = [record.label for record in sequence]
    contexts = []
    for segment in segment_labels(labels):
        try:
            n = context_npmi(model, labels, segment)
        except CognitionError as exc:
            raise FrameError(sequence[segment.start].index, exc) from exc
        for i in range(segment.start, segment.end + 1):
            contexts.append(FrameContext(sequence[i].confidence, n,
                                         position_score(segment, i)))
    return contexts


def candidate_context(labels: Sequence[str], i: int, candidate: str,
                      model: CooccurrenceModel) -> tuple[float, float]:
    """
    N и G кадра i, если бы его метка была candidate, при неизменных
    метках остальных кадров.
    """
    start = i
    while start > 0 and labels[start - 1] == candidate:
        start -= 1
    end = i
    while end < len(labels) - 1 and labels[end + 1] == candidate:
        end += 1
    segment = ActionSegment(start=start, end=end, label=candidate)
    return context_npmi(model, labels, segment), position_score(segment, i)
