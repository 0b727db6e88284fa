"""
Язык нечётких правил (.frl): разбор, проверка, генерация и запись.

Одна строка, одно правило:
    IF C IS <терм> AND N IS <терм> AND G IS <терм> THEN U IS <терм>
`#` начинает комментарий, пустые строки пропускаются, термы и ключевые
слова нечувствительны к регистру.
"""
import itertools
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from app.exceptions import InputError, RuleParseError
from app.fuzzy_core import DEFAULT_SYSTEM, LABELS, FuzzySystem, Rule, RuleBase

logger = logging.getLogger(__name__)

RULE_PATTERN = re.compile(
    r"^\s*IF\s+C\s+IS\s+(?P<c>\S+)\s+AND\s+N\s+IS\s+(?P<n>\S+)"
    r"\s+AND\s+G\s+IS\s+(?P<g>\S+)\s+THEN\s+U\s+IS\s+(?P<u>\S+)\s*$",
    re.IGNORECASE,
)
TIE_TOLERANCE = 1e-9


class DiagnosticKind(str, Enum):
    SYNTAX = "syntax"
    UNKNOWN_LABEL = "unknown-label"
    DUPLICATE = "duplicate-antecedent-triple"
    COVERAGE_GAP = "coverage-gap"


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    kind: DiagnosticKind
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.kind.value}: {self.message}"


def parse_rulebase(text: str) -> RuleBase:
    """
    Разбирает документ правил. Собирает все диагностики и, если есть
    хотя бы одна, бросает RuleParseError со всем списком.
    """
    rules: list[Rule] = []
    diagnostics: list[ParseDiagnostic] = []
    for lineno, raw in enumerate(text.lstrip("﻿").splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        match = RULE_PATTERN.match(body)
        if match is None:
            column = len(body) - len(body.lstrip()) + 1
            diagnostics.append(ParseDiagnostic(
                lineno, column, DiagnosticKind.SYNTAX,
                "expected 'IF C IS <label> AND N IS <label> AND G IS <label> "
                "THEN U IS <label>'"))
            continue

        labels = {}
        for var in ("c", "n", "g", "u"):
            label = match.group(var).upper()
            if label not in LABELS:
                diagnostics.append(ParseDiagnostic(
                    lineno, match.start(var) + 1, DiagnosticKind.UNKNOWN_LABEL,
                    f"unknown label {match.group(var)!r} for {var.upper()}, "
                    f"expected one of {', '.join(LABELS)}"))
            labels[var] = label
        if all(label in LABELS for label in labels.values()):
            rules.append(Rule(**labels, id=f"R{len(rules) + 1}", line=lineno))

    if diagnostics:
        raise RuleParseError(diagnostics)
    return RuleBase(tuple(rules))


def validate(rulebase: RuleBase, strict: bool = False) -> list[ParseDiagnostic]:
    """
    Повторяющиеся посылки сообщаются всегда, в строгом режиме ещё и
    каждое непокрытое сочетание из 125.
    """
    diagnostics = []
    seen: dict[tuple[str, str, str], Rule] = {}
    for position, rule in enumerate(rulebase, start=1):
        first = seen.get(rule.triple)
        if first is None:
            seen[rule.triple] = rule
            continue
        diagnostics.append(ParseDiagnostic(
            rule.line or position, 1, DiagnosticKind.DUPLICATE,
            f"{rule.id or position} repeats antecedents "
            f"({', '.join(rule.triple)}) of {first.id}: "
            f"{first.u} vs {rule.u}"))

    if strict:
        for triple in itertools.product(LABELS, repeat=3):
            if triple not in seen:
                diagnostics.append(ParseDiagnostic(
                    0, 0, DiagnosticKind.COVERAGE_GAP,
                    "no rule for C={} N={} G={}".format(*triple)))
    return diagnostics


def quantize(value: float, peaks: tuple[float, ...]) -> int:
    """
    Индекс ближайшей вершины; на середине между вершинами берётся нижняя.
    """
    distances = [abs(value - p) for p in peaks]
    best = min(distances)
    return next(k for k, d in enumerate(distances) if d - best <= TIE_TOLERANCE)


def generate_default_rulebase(mu1: float = 0.6, mu2: float = 0.2,
                              overrides=(),
                              system: FuzzySystem = DEFAULT_SYSTEM) -> RuleBase:
    """
    Полная база из 125 правил по взвешенной сумме вершин посылок
    U = mu1*C + mu2*N + (1 - mu1 - mu2)*G, затем замены по посылкам.
    """
    if mu1 < 0 or mu2 < 0 or mu1 + mu2 > 1 + TIE_TOLERANCE:
        raise InputError(
            f"Invalid weights mu1={mu1}, mu2={mu2}: need mu1, mu2 >= 0 "
            f"and mu1 + mu2 <= 1")
    weights = (mu1, mu2, 1.0 - mu1 - mu2)

    def normalized(var):
        lo, hi = var.universe.lower, var.universe.upper
        return [(p - lo) / (hi - lo) for p in var.peaks]

    antecedent_peaks = [normalized(system.c), normalized(system.n),
                        normalized(system.g)]
    lo, hi = system.u.universe.lower, system.u.universe.upper

    replacements: dict[tuple[str, str, str], str] = {}
    for rule in overrides:
        if rule.triple in replacements:
            if replacements[rule.triple] != rule.u:
                logger.warning(
                    "Override %s conflicts with an earlier rule for %s, "
                    "keeping %s", rule.id or rule.triple, rule.triple,
                    replacements[rule.triple])
            continue
        replacements[rule.triple] = rule.u

    rules = []
    for position, idx in enumerate(
            itertools.product(range(len(LABELS)), repeat=3), start=1):
        combination = sum(w * peaks[k] for w, peaks, k
                          in zip(weights, antecedent_peaks, idx))
        consequent = LABELS[quantize(lo + combination * (hi - lo),
                                     system.u.peaks)]
        triple = tuple(LABELS[k] for k in idx)
        consequent = replacements.get(triple, consequent)
        rules.append(Rule(*triple, consequent, id=f"R{position}"))
    return RuleBase(tuple(rules))


def serialize(rulebase: RuleBase) -> str:
    lines = [f"IF C IS {r.c} AND N IS {r.n} AND G IS {r.g} THEN U IS {r.u}"
             for r in rulebase]
    return "".join(line + "\n" for line in lines)


def load_rulebase(path: str | Path) -> RuleBase:
    return parse_rulebase(Path(path).read_text(encoding="utf-8"))


def published_source() -> str:
    return resources.files("app").joinpath("rules", "published.frl") \
        .read_text(encoding="utf-8")


def published_rules() -> RuleBase:
    """
    Восемь опубликованных правил, включая конфликтующую пару R3/R8.
    """
    return parse_rulebase(published_source())


@lru_cache
def default_rulebase(mu1: float = 0.6, mu2: float = 0.2) -> RuleBase:
    """
    База по умолчанию: сгенерированные правила с опубликованными заменами.
    """
    return generate_default_rulebase(mu1, mu2, overrides=published_rules())
