"""
Конвейер: оценка эффективности, прототипы по всему корпусу, обновление.
Общий для CLI, HTTP-маршрутов и экспериментов на синтетике.
"""
import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from app.config import PipelineConfig
from app.exceptions import CognitionError, InputError
from app.fcm import FcmConfig, evaluate, partition_by_level
from app.fcs import FcsConfig, PrototypeClassifier, ProjectionConfig, \
    UpdateCriterion, UpdateMode, feature_matrix, high_cognition_groups, \
    project, run_fcs
from app.features import CooccurrenceModel, fit_cooccurrence
from app.fuzzy_core import FuzzySystem, RuleBase
from app.rule_dsl import default_rulebase, load_rulebase
from app.schemas import CognitionRecord, FrameRecord, UpdateOutcome

logger = logging.getLogger(__name__)


@dataclass
class SequenceResult:
    sequence_id: str
    cognition: list[CognitionRecord] = field(default_factory=list)
    outcomes: list[UpdateOutcome] = field(default_factory=list)
    frames: list[FrameRecord] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


@dataclass
class PipelineResult:
    sequences: list[SequenceResult]
    cooccurrence_source: str

    @property
    def frames(self) -> dict[str, list[FrameRecord]]:
        return {s.sequence_id: s.frames for s in self.sequences}

    @property
    def accepted(self) -> int:
        return sum(o.accepted for s in self.sequences for o in s.outcomes)


def build_cooccurrence(settings: PipelineConfig,
                       sequences: Mapping[str, Sequence[FrameRecord]],
                       annotations: Sequence[Sequence[str]] | None = None
                       ) -> tuple[CooccurrenceModel, str]:
    """
    Модель NPMI: из файла, из обучающей разметки или из потока детектора.
    """
    if settings.cooccurrence != "fit":
        return CooccurrenceModel.load(settings.cooccurrence), "file"
    stream = [[f.label for f in frames] for frames in sequences.values()]
    vocabulary = {label for seq in stream for label in seq}
    if annotations:
        return fit_cooccurrence(annotations, settings.alpha,
                                vocabulary), "annotations"
    return fit_cooccurrence(stream, settings.alpha), "detections"


def build_rulebase(settings: PipelineConfig) -> RuleBase:
    if settings.rule_file:
        return load_rulebase(settings.rule_file)
    return default_rulebase(settings.mu1, settings.mu2)


def build_fcm_config(settings: PipelineConfig,
                     cooccurrence: CooccurrenceModel) -> FcmConfig:
    return FcmConfig(cooccurrence=cooccurrence, delta=settings.delta,
                     mu1=settings.mu1, mu2=settings.mu2,
                     rulebase=build_rulebase(settings),
                     system=FuzzySystem(samples=settings.samples),
                     use_effectiveness=settings.use_fcm)


def build_projection(settings: PipelineConfig, dim: int) -> ProjectionConfig:
    if settings.projection == "identity":
        return ProjectionConfig.identity(dim)
    if settings.projection == "random":
        return ProjectionConfig.seeded_random(dim, settings.projection_seed,
                                              settings.projection_dim)
    return ProjectionConfig.load(settings.projection)


def build_classifier(settings: PipelineConfig, projection: ProjectionConfig,
                     results: Sequence[SequenceResult],
                     sequences: Mapping[str, Sequence[FrameRecord]]
                     ) -> PrototypeClassifier | None:
    """
    Прототипы по умолчанию: средние значений кадров высокой когниции
    по всему корпусу.
    """
    if settings.classifier != "means":
        return PrototypeClassifier.load(settings.classifier)
    groups: dict[str, list[np.ndarray]] = {}
    for result in results:
        if not result.cognition:
            continue
        try:
            _, values = project(
                feature_matrix(sequences[result.sequence_id]), projection)
        except CognitionError as exc:
            logger.warning("Sequence %s skipped for prototypes: %s",
                           result.sequence_id, exc)
            continue
        high, _ = partition_by_level(result.cognition)
        for label, vectors in high_cognition_groups(
                values, result.cognition, high).items():
            groups.setdefault(label, []).extend(vectors)
    if not groups:
        return None
    return PrototypeClassifier.from_groups(groups, settings.temperature,
                                           settings.blend)


def _evaluate(sequence_id: str, frames: Sequence[FrameRecord],
              fcm_cfg: FcmConfig) -> SequenceResult:
    result = SequenceResult(sequence_id, frames=list(frames))
    try:
        result.cognition = evaluate(frames, fcm_cfg)
    except CognitionError as exc:
        result.errors.append(str(exc))
        logger.warning("Sequence %s not evaluated: %s", sequence_id, exc)
    return result


@dataclass
class EvaluatedCorpus:
    """
    Результат первого прохода (FCM). Переиспользуется при переборе
    порогов обновления.
    """
    sequences: Mapping[str, Sequence[FrameRecord]]
    settings: PipelineConfig
    fcm_cfg: FcmConfig
    results: list[SequenceResult]
    cooccurrence_source: str
    _classifiers: dict = field(default_factory=dict, repr=False)

    def classifier(self, projection: ProjectionConfig
                   ) -> PrototypeClassifier | None:
        if projection.source not in self._classifiers:
            self._classifiers[projection.source] = build_classifier(
                self.settings, projection, self.results, self.sequences)
        return self._classifiers[projection.source]


def evaluate_corpus(sequences: Mapping[str, Sequence[FrameRecord]],
                    settings: PipelineConfig,
                    annotations: Sequence[Sequence[str]] | None = None
                    ) -> EvaluatedCorpus:
    if not sequences:
        raise InputError("no sequences")
    cooccurrence, source = build_cooccurrence(settings, sequences, annotations)
    fcm_cfg = build_fcm_config(settings, cooccurrence)

    with ThreadPoolExecutor(max_workers=settings.workers) as pool:
        results = list(pool.map(lambda item: _evaluate(*item, fcm_cfg),
                                sequences.items()))
    high = sum(len(partition_by_level(r.cognition)[0]) for r in results)
    total = sum(len(r.cognition) for r in results)
    logger.info("Evaluated %d sequence(s): %d high-cognition, %d "
                "low-cognition frames", len(results), high, total - high)
    return EvaluatedCorpus(sequences, settings, fcm_cfg, results, source)


def update_corpus(evaluated: EvaluatedCorpus,
                  settings: PipelineConfig | None = None) -> PipelineResult:
    """
    Второй проход (FCS) поверх готовой оценки. Настройки FCM берутся из
    первого прохода, из settings только параметры обновления.
    """
    settings = settings or evaluated.settings
    results = [SequenceResult(r.sequence_id, list(r.cognition), [],
                              list(r.frames), list(r.errors))
               for r in evaluated.results]
    fcm_cfg = evaluated.fcm_cfg

    if settings.use_fcs:
        dims = {len(f.feature) for frames in evaluated.sequences.values()
                for f in frames}
        projection = build_projection(settings, max(dims))
        classifier = evaluated.classifier(projection)
        criterion = UpdateCriterion(settings.criterion) \
            if fcm_cfg.use_effectiveness else UpdateCriterion.CONFIDENCE
        fcs_cfg = FcsConfig(
            lam=settings.lam, tau=settings.tau, projection=projection,
            classifier=classifier, mode=UpdateMode(settings.update_mode),
            criterion=criterion,
            recompute_context=settings.context == "recompute")

        def update(result: SequenceResult) -> SequenceResult:
            if not result.cognition:
                return result
            try:
                fcs = run_fcs(result.frames, result.cognition, fcm_cfg, fcs_cfg)
            except CognitionError as exc:
                result.errors.append(str(exc))
                return result
            result.frames, result.outcomes = fcs.sequence, fcs.outcomes
            result.errors.extend(fcs.errors)
            return result

        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            results = list(pool.map(update, results))

    for result in results:
        updated = {o.index for o in result.outcomes if o.accepted}
        for position, record in enumerate(result.cognition):
            if record.index not in updated:
                result.frames[position] = result.frames[position].model_copy(
                    update={"effectiveness": record.u})

    pipeline = PipelineResult(results, evaluated.cooccurrence_source)
    logger.info("Pipeline finished: %d sequence(s), %d update(s) accepted, "
                "co-occurrence from %s", len(results), pipeline.accepted,
                pipeline.cooccurrence_source)
    return pipeline


def run_pipeline(sequences: Mapping[str, Sequence[FrameRecord]],
                 settings: PipelineConfig,
                 annotations: Sequence[Sequence[str]] | None = None
                 ) -> PipelineResult:
    """
    Результаты выдаются в порядке входных последовательностей
    независимо от порядка вычисления.
    """
    return update_corpus(evaluate_corpus(sequences, settings, annotations),
                         settings)
