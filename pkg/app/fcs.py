"""
Когнитивное обновление кадров с низкой когницией.

Коррелированная последовательность из соседних кадров высокой когниции,
повторная детекция через проекции ключ/значение, косинусное внимание и
классификатор прототипов, затем правило max-обновления.
"""
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from app.exceptions import CognitionError, DimensionError, InputError, \
    NoCorrelatedFramesError
from app.fcm import FcmConfig, effectiveness, partition_by_level
from app.features import candidate_context
from app.schemas import CognitionRecord, FrameRecord, ProjectionDocument, \
    PrototypeDocument, UpdateOutcome
from app.streams import read_document

logger = logging.getLogger(__name__)


class UpdateMode(str, Enum):
    BATCH = "batch"
    SEQUENTIAL = "sequential"


class UpdateCriterion(str, Enum):
    EFFECTIVENESS = "effectiveness"
    CONFIDENCE = "confidence"


@dataclass(frozen=True, eq=False)
class ProjectionConfig:
    """
    Линейные проекции ключей и значений: f_k = f @ key_matrix.
    """
    key_matrix: np.ndarray
    value_matrix: np.ndarray
    source: str = "identity"

    def __post_init__(self):
        key = np.atleast_2d(np.asarray(self.key_matrix, dtype=float))
        value = np.atleast_2d(np.asarray(self.value_matrix, dtype=float))
        if key.ndim != 2 or value.ndim != 2:
            raise DimensionError("Projection matrices must be 2-D")
        if key.shape[0] != value.shape[0]:
            raise DimensionError(
                f"Key and value matrices disagree on input dimension: "
                f"{key.shape[0]} vs {value.shape[0]}")
        key.setflags(write=False)
        value.setflags(write=False)
        object.__setattr__(self, "key_matrix", key)
        object.__setattr__(self, "value_matrix", value)

    @property
    def input_dim(self) -> int:
        return self.key_matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "ProjectionConfig":
        return cls(np.eye(dim), np.eye(dim), "identity")

    @classmethod
    def seeded_random(cls, dim: int, seed: int,
                      out_dim: int | None = None) -> "ProjectionConfig":
        rng = np.random.default_rng(seed)
        out_dim = out_dim or dim
        scale = 1.0 / np.sqrt(dim)
        return cls(rng.standard_normal((dim, out_dim)) * scale,
                   rng.standard_normal((dim, out_dim)) * scale,
                   f"seeded-random({seed})")

    @classmethod
    def load(cls, path: str | Path) -> "ProjectionConfig":
        """
        .npz с массивами key/value или JSON-документ ProjectionDocument.
        """
        path = Path(path)
        if path.suffix == ".npz":
            try:
                with np.load(path) as data:
                    key, value = data["key"], data["value"]
            except (OSError, KeyError, ValueError) as exc:
                raise InputError(
                    f"Cannot read projection {path}: {exc}") from exc
            return cls(key, value, f"file({path.name})")
        doc = read_document(path, ProjectionDocument)
        return cls(np.array(doc.key, dtype=float),
                   np.array(doc.value, dtype=float), f"file({path.name})")

    def to_document(self) -> ProjectionDocument:
        return ProjectionDocument(shape=self.key_matrix.shape,
                                  key=self.key_matrix.tolist(),
                                  value=self.value_matrix.tolist())

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.suffix == ".npz":
            np.savez(path, key=self.key_matrix, value=self.value_matrix)
            return
        path.write_text(self.to_document().model_dump_json(),
                        encoding="utf-8")


def correlated_sequence(i: int, high: Iterable[int], lam: int) -> list[int]:
    """
    Кадры высокой когниции в открытом окне (i - lam, i + lam).
    """
    if lam < 1:
        raise InputError(f"lambda must be >= 1, got {lam}")
    return sorted(j for j in high if i - lam < j < i + lam)


def project(f, cfg: ProjectionConfig) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != cfg.input_dim:
        raise DimensionError(
            f"Feature dimension {f.shape[-1]} does not match projection "
            f"input dimension {cfg.input_dim}")
    return f @ cfg.key_matrix, f @ cfg.value_matrix


def cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"Cannot compare shapes {a.shape} and {b.shape}")
    norm = float(np.linalg.norm(a) * np.linalg.norm(b))
    if norm == 0.0:
        return 0.0
    return float(np.dot(a, b) / norm)


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.exp(x - x.max())
    return e / e.sum()


def attention_weights(query_key, keys) -> np.ndarray:
    return softmax([cosine(k, query_key) for k in keys])


def aggregate_high_cognition(query_key, keys, values) -> np.ndarray:
    """
    Признак высокой когниции: сумма значений с весами softmax(косинус).
    """
    if len(keys) == 0:
        raise NoCorrelatedFramesError("No correlated high-cognition frames")
    weights = attention_weights(query_key, keys)
    return weights @ np.asarray(values, dtype=float)


@dataclass(frozen=True, eq=False)
class PrototypeClassifier:
    """
    Мягкий классификатор ближайшего прототипа с температурой.
    """
    labels: tuple[str, ...]
    prototypes: np.ndarray
    temperature: float = 0.05
    blend: float = 0.5

    def __post_init__(self):
        prototypes = np.asarray(self.prototypes, dtype=float)
        if len(self.labels) and (prototypes.ndim != 2 or
                                 prototypes.shape[0] != len(self.labels)):
            raise DimensionError("One prototype vector per label is required")
        if self.temperature <= 0:
            raise InputError("Classifier temperature must be positive")
        if not 0.0 <= self.blend <= 1.0:
            raise InputError("Classifier blend must lie in [0, 1]")
        prototypes.setflags(write=False)
        object.__setattr__(self, "prototypes", prototypes)

    @classmethod
    def from_groups(cls, groups: Mapping[str, Sequence], temperature: float = 0.05,
                    blend: float = 0.5) -> "PrototypeClassifier":
        """
        Прототип класса: среднее его векторов значений.
        """
        labels = tuple(sorted(label for label, vectors in groups.items()
                              if len(vectors)))
        prototypes = np.array([np.mean(np.asarray(groups[label], dtype=float),
                                       axis=0) for label in labels])
        return cls(labels, prototypes, temperature, blend)

    def to_document(self) -> PrototypeDocument:
        return PrototypeDocument(labels=list(self.labels),
                                 prototypes=self.prototypes.tolist(),
                                 temperature=self.temperature,
                                 blend=self.blend)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_document().model_dump_json(indent=2),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PrototypeClassifier":
        doc = read_document(path, PrototypeDocument)
        return cls(tuple(doc.labels), np.array(doc.prototypes),
                   doc.temperature, doc.blend)


def reclassify(f_tilde, f_value, clf: PrototypeClassifier) -> np.ndarray:
    """
    H = softmax(cos(b, прототип) / T), где b = blend*f_tilde + (1-blend)*f_v.
    """
    if not clf.labels:
        raise InputError("Classifier has no prototypes")
    blended = clf.blend * np.asarray(f_tilde, dtype=float) + \
        (1.0 - clf.blend) * np.asarray(f_value, dtype=float)
    if blended.shape[-1] != clf.prototypes.shape[1]:
        raise DimensionError(
            f"Feature dimension {blended.shape[-1]} does not match "
            f"prototype dimension {clf.prototypes.shape[1]}")
    sims = np.array([cosine(blended, p) for p in clf.prototypes])
    return softmax(sims / clf.temperature)


def confidence_from_scores(scores) -> float:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise InputError("Empty score vector")
    return float(np.max(np.abs(scores)))


def update_rule(u: float, u_hat: float, tau: float) -> tuple[float, bool]:
    """
    u_opt = max(u_hat, u + tau); обновление принимается только при
    u_hat > u + tau (строго).
    """
    return max(u_hat, u + tau), u_hat > u + tau


@dataclass(frozen=True)
class Redetection:
    index: int
    candidate: str
    c_hat: float


@dataclass(frozen=True)
class FcsConfig:
    lam: int = 3
    tau: float = 0.35
    projection: ProjectionConfig | None = None
    classifier: PrototypeClassifier | None = None
    mode: UpdateMode = UpdateMode.BATCH
    criterion: UpdateCriterion = UpdateCriterion.EFFECTIVENESS
    recompute_context: bool = True

    def __post_init__(self):
        if self.lam < 1:
            raise InputError(f"lambda must be >= 1, got {self.lam}")


@dataclass
class FcsResult:
    sequence: list[FrameRecord]
    outcomes: list[UpdateOutcome] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def accepted(self) -> list[UpdateOutcome]:
        return [o for o in self.outcomes if o.accepted]


def update_frame(position: int, record: CognitionRecord, redetection: Redetection,
                 labels: Sequence[str], fcm_cfg: FcmConfig,
                 cfg: FcsConfig) -> UpdateOutcome:
    """
    u_hat по новой уверенности, u_opt = max(u_hat, u + tau);
    обновление принимается только при u_hat > u + tau.
    """
    if cfg.recompute_context:
        n, g = candidate_context(labels, position, redetection.candidate,
                                 fcm_cfg.cooccurrence)
    else:
        n, g = record.n, record.g
    u_hat = effectiveness(fcm_cfg, redetection.c_hat, n, g)
    u_opt, accepted = update_rule(record.u, u_hat, cfg.tau)
    if cfg.criterion is UpdateCriterion.CONFIDENCE:
        accepted = redetection.c_hat > record.c + cfg.tau
    return UpdateOutcome(
        index=record.index, old_label=record.label,
        new_label=redetection.candidate if accepted else record.label,
        candidate_label=redetection.candidate, c_hat=redetection.c_hat,
        u_old=record.u, u_hat=u_hat, u_opt=u_opt, accepted=accepted)


def feature_matrix(sequence: Sequence[FrameRecord]) -> np.ndarray:
    dims = {len(record.feature) for record in sequence}
    if len(dims) != 1 or 0 in dims:
        raise DimensionError(
            "Feature vectors must be non-empty and share one dimension")
    return np.array([record.feature for record in sequence], dtype=float)


def high_cognition_groups(values: np.ndarray, records: Sequence[CognitionRecord],
                          high: Iterable[int]) -> dict[str, list[np.ndarray]]:
    high = set(high)
    groups: dict[str, list[np.ndarray]] = {}
    for position, record in enumerate(records):
        if record.index in high:
            groups.setdefault(record.label, []).append(values[position])
    return groups


def run_fcs(sequence: Sequence[FrameRecord], records: Sequence[CognitionRecord],
            fcm_cfg: FcmConfig, cfg: FcsConfig = FcsConfig()) -> FcsResult:
    """
    Фаза 1: повторная детекция всех кадров низкой когниции относительно
    замороженного первого прохода. Фаза 2: применение принятых обновлений.
    Ошибки отдельных кадров собираются и не прерывают пакет.
    """
    high, low = partition_by_level(records)
    if not low:
        return FcsResult(list(sequence))

    features = feature_matrix(sequence)
    projection = cfg.projection or ProjectionConfig.identity(features.shape[1])
    keys, values = project(features, projection)
    classifier = cfg.classifier
    if classifier is None and high:
        classifier = PrototypeClassifier.from_groups(
            high_cognition_groups(values, records, high))

    offset = sequence[0].index
    labels = [record.label for record in records]
    outcomes, errors = [], []
    for index in sorted(low):
        position = index - offset
        record = records[position]
        window = correlated_sequence(index, high, cfg.lam)
        if not window:
            outcomes.append(UpdateOutcome(
                index=index, old_label=record.label, new_label=record.label,
                u_old=record.u, accepted=False, reason="no correlated frames"))
            continue
        try:
            rows = [j - offset for j in window]
            f_tilde = aggregate_high_cognition(keys[position], keys[rows],
                                               values[rows])
            scores = reclassify(f_tilde, values[position], classifier)
            redetection = Redetection(
                index, classifier.labels[int(np.argmax(scores))],
                confidence_from_scores(scores))
            outcome = update_frame(position, record, redetection, labels,
                                   fcm_cfg, cfg)
        except CognitionError as exc:
            logger.debug("Frame %d skipped: %s", index, exc)
            errors.append(f"frame {index}: {exc}")
            continue
        logger.debug("Frame %d: %s -> %s, u=%.4f u_hat=%.4f accepted=%s",
                     index, outcome.old_label, outcome.candidate_label,
                     outcome.u_old, outcome.u_hat, outcome.accepted)
        if cfg.mode is UpdateMode.SEQUENTIAL and outcome.accepted:
            labels[position] = outcome.new_label
        outcomes.append(outcome)

    updated = list(sequence)
    for outcome in outcomes:
        if outcome.accepted:
            position = outcome.index - offset
            updated[position] = updated[position].model_copy(update={
                "label": outcome.new_label,
                "confidence": outcome.c_hat,
                "effectiveness": outcome.u_hat,
            })
    logger.info("Updated %d of %d low-cognition frames",
                sum(o.accepted for o in outcomes), len(low))
    return FcsResult(updated, outcomes, errors)
