"""
Оценка когнитивной эффективности кадров нечётким выводом и разбиение
кадров на высокую и низкую когницию.
"""
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

from app.exceptions import CognitionError, FrameError, InputError, \
    NoActiveRulesError
from app.features import CooccurrenceModel, frame_contexts
from app.fuzzy_core import DEFAULT_SYSTEM, FuzzySystem, RuleBase, infer
from app.rule_dsl import default_rulebase
from app.schemas import CognitionRecord, FrameRecord, Level

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FcmConfig:
    cooccurrence: CooccurrenceModel
    delta: float = 0.5
    mu1: float = 0.6
    mu2: float = 0.2
    rulebase: RuleBase | None = None
    system: FuzzySystem = field(default=DEFAULT_SYSTEM)
    # Без оценки эффективности уровень определяется уверенностью
    use_effectiveness: bool = True

    def __post_init__(self):
        universe = self.system.u.universe
        if not universe.lower <= self.delta <= universe.upper:
            raise InputError(
                f"delta={self.delta} lies outside [{universe.lower}, "
                f"{universe.upper}]")
        if self.mu1 < 0 or self.mu2 < 0 or self.mu1 + self.mu2 > 1:
            raise InputError("mu1 and mu2 must be non-negative with sum <= 1")
        if self.rulebase is None:
            object.__setattr__(self, "rulebase",
                               default_rulebase(self.mu1, self.mu2))


def effectiveness(cfg: FcmConfig, c: float, n: float, g: float) -> float:
    """
    u = infer(c, n, g); если правила не сработали, u = c.
    """
    try:
        return infer(cfg.rulebase, c, n, g, cfg.system)
    except NoActiveRulesError:
        logger.warning("No active rules for (c=%.4f, n=%.4f, g=%.4f), "
                       "falling back to confidence", c, n, g)
        return c


def level_of(score: float, delta: float) -> Level:
    return Level.HIGH if score >= delta else Level.LOW


def evaluate(sequence: Sequence[FrameRecord],
             cfg: FcmConfig) -> list[CognitionRecord]:
    """
    Одна запись когниции на кадр, порядок сохраняется.
    """
    contexts = frame_contexts(sequence, cfg.cooccurrence)
    records = []
    for record, ctx in zip(sequence, contexts):
        try:
            u = effectiveness(cfg, ctx.c, ctx.n, ctx.g)
        except CognitionError as exc:
            raise FrameError(record.index, exc) from exc
        score = u if cfg.use_effectiveness else ctx.c
        records.append(CognitionRecord(
            index=record.index, label=record.label, c=ctx.c, n=ctx.n,
            g=ctx.g, u=u, level=level_of(score, cfg.delta)))
    return records


def partition(records: Sequence[CognitionRecord],
              delta: float) -> tuple[frozenset[int], frozenset[int]]:
    """
    D_A = {i : u_i >= delta}, D_N: остальные кадры.
    """
    high = frozenset(r.index for r in records if r.u >= delta)
    low = frozenset(r.index for r in records) - high
    return high, low


def partition_by_level(
        records: Sequence[CognitionRecord]) -> tuple[frozenset[int], frozenset[int]]:
    high = frozenset(r.index for r in records if r.level is Level.HIGH)
    low = frozenset(r.index for r in records) - high
    return high, low
