"""
Движок нечёткого вывода Мамдани.

Пять термов на переменную, конъюнкция по минимуму, дизъюнкция по максимуму,
дефаззификация центроидом по равномерной сетке.
"""
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

import numpy as np

from app.exceptions import ContractError, InputError, NoActiveRulesError

LABELS = ("NB", "NS", "ZO", "PS", "PB")
ANTECEDENTS = ("C", "N", "G")
DEFAULT_SAMPLES = 2001
# Знаков после запятой у центроида
CENTROID_DECIMALS = 12


@dataclass(frozen=True)
class Universe:
    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InputError(
                f"Universe {self.name}: lower bound must be below upper")

    def clamp(self, x: float) -> float:
        return min(max(x, self.lower), self.upper)


@dataclass(frozen=True)
class MembershipFunction:
    """
    Треугольный терм. Если нога совпадает с вершиной, терм плоский
    (плечо) в сторону края универсума.
    """
    label: str
    left: float
    peak: float
    right: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise InputError(f"Unknown fuzzy label: {self.label!r}")
        if not self.left <= self.peak <= self.right:
            raise InputError(
                f"Set {self.label}: feet must surround the peak")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.peak == self.left:
            rising = np.ones_like(x)
        else:
            rising = np.clip((x - self.left) / (self.peak - self.left), 0.0, 1.0)
        if self.right == self.peak:
            falling = np.ones_like(x)
        else:
            falling = np.clip((self.right - x) / (self.right - self.peak), 0.0, 1.0)
        return np.minimum(rising, falling)


@dataclass(frozen=True)
class FuzzyVariable:
    universe: Universe
    sets: tuple[MembershipFunction, ...]

    def __post_init__(self):
        if tuple(s.label for s in self.sets) != LABELS:
            raise InputError(
                f"Variable {self.name}: sets must be {', '.join(LABELS)}")
        peaks = [s.peak for s in self.sets]
        if any(b <= a for a, b in zip(peaks, peaks[1:])):
            raise InputError(f"Variable {self.name}: peaks must increase")
        # Полное покрытие: на стыке соседних термов сумма степеней > 0
        for a, b in zip(self.sets, self.sets[1:]):
            if a.right <= b.left:
                raise InputError(
                    f"Variable {self.name}: gap between {a.label} and {b.label}")
        if self.sets[0].left > self.universe.lower or \
                self.sets[-1].right < self.universe.upper:
            raise InputError(f"Variable {self.name}: universe not covered")

    @property
    def name(self) -> str:
        return self.universe.name

    @property
    def peaks(self) -> tuple[float, ...]:
        return tuple(s.peak for s in self.sets)

    def set(self, label: str) -> MembershipFunction:
        return self.sets[LABELS.index(label)]

    @classmethod
    def evenly_spaced(cls, name: str, lower: float, upper: float):
        """
        Пять треугольников с равномерными вершинами, крайние с плечами.
        """
        peaks = np.linspace(lower, upper, len(LABELS)).tolist()
        sets = []
        for k, label in enumerate(LABELS):
            left = peaks[k - 1] if k > 0 else peaks[k]
            right = peaks[k + 1] if k < len(LABELS) - 1 else peaks[k]
            sets.append(MembershipFunction(label, left, peaks[k], right))
        return cls(Universe(name, lower, upper), tuple(sets))


@dataclass(frozen=True)
class FuzzyValue:
    variable: str
    degrees: Mapping[str, float]

    def __post_init__(self):
        object.__setattr__(self, "degrees",
                           MappingProxyType(dict(self.degrees)))

    def __getitem__(self, label: str) -> float:
        return self.degrees[label]


@dataclass(frozen=True)
class Rule:
    c: str
    n: str
    g: str
    u: str
    id: str = field(default="", compare=False)
    line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        for label in (self.c, self.n, self.g, self.u):
            if label not in LABELS:
                raise InputError(f"Unknown fuzzy label: {label!r}")

    @property
    def antecedents(self) -> dict[str, str]:
        return {"C": self.c, "N": self.n, "G": self.g}

    @property
    def triple(self) -> tuple[str, str, str]:
        return self.c, self.n, self.g


@dataclass(frozen=True)
class RuleBase:
    rules: tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @cached_property
    def label_index(self) -> np.ndarray:
        """
        Индексы термов C, N, G, U для каждого правила (строки матрицы).
        """
        return np.array([[LABELS.index(label) for label in (*r.triple, r.u)]
                         for r in self.rules], dtype=int).reshape(-1, 4)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)


@dataclass(frozen=True)
class AggregatedSet:
    """
    Агрегированное выходное множество, заданное на сетке.
    """
    x: np.ndarray
    mu: np.ndarray


@dataclass(frozen=True)
class FuzzySystem:
    """
    Переменные C, N, G, U и размер сетки дефаззификации.
    """
    c: FuzzyVariable = field(
        default_factory=lambda: FuzzyVariable.evenly_spaced("C", 0.0, 1.0))
    n: FuzzyVariable = field(
        default_factory=lambda: FuzzyVariable.evenly_spaced("N", -1.0, 1.0))
    g: FuzzyVariable = field(
        default_factory=lambda: FuzzyVariable.evenly_spaced("G", 0.0, 1.0))
    u: FuzzyVariable = field(
        default_factory=lambda: FuzzyVariable.evenly_spaced("U", 0.0, 1.0))
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        if self.samples < 1001:
            raise InputError("Defuzzification grid needs at least 1001 points")

    @cached_property
    def grid(self) -> np.ndarray:
        grid = np.linspace(self.u.universe.lower, self.u.universe.upper,
                           self.samples)
        grid.setflags(write=False)
        return grid

    @cached_property
    def output_curves(self) -> np.ndarray:
        """
        Термы U на сетке, по строке на терм.
        """
        curves = np.vstack([s(self.grid) for s in self.u.sets])
        curves.setflags(write=False)
        return curves

    def antecedent(self, name: str) -> FuzzyVariable:
        return {"C": self.c, "N": self.n, "G": self.g}[name]


DEFAULT_SYSTEM = FuzzySystem()


def fuzzify(variable: FuzzyVariable, x: float) -> FuzzyValue:
    """
    Степени принадлежности x (после отсечения по универсуму) всем термам.
    """
    if not math.isfinite(x):
        raise InputError(f"Non-finite input for {variable.name}: {x}")
    x = variable.universe.clamp(float(x))
    return FuzzyValue(variable.name,
                      {s.label: float(s(x)) for s in variable.sets})


def activate(rule: Rule, inputs: Mapping[str, FuzzyValue]) -> float:
    """
    Сила срабатывания правила: минимум степеней посылок.
    """
    missing = [name for name in ANTECEDENTS if name not in inputs]
    if missing:
        raise ContractError(f"Missing input variable(s): {', '.join(missing)}")
    return min(inputs[name][label] for name, label in rule.antecedents.items())


def aggregate(rulebase: RuleBase, inputs: Mapping[str, FuzzyValue],
              system: FuzzySystem = DEFAULT_SYSTEM) -> AggregatedSet:
    """
    Каждый терм вывода срезается максимальной силой своих правил,
    кривые объединяются поточечным максимумом.
    """
    missing = [name for name in ANTECEDENTS if name not in inputs]
    if missing:
        raise ContractError(f"Missing input variable(s): {', '.join(missing)}")
    degrees = [np.array([inputs[name][label] for label in LABELS])
               for name in ANTECEDENTS]
    index = rulebase.label_index
    firing = np.minimum(np.minimum(degrees[0][index[:, 0]],
                                   degrees[1][index[:, 1]]),
                        degrees[2][index[:, 2]])
    strength = np.zeros(len(LABELS))
    np.maximum.at(strength, index[:, 3], firing)
    if not np.any(strength > 0):
        raise NoActiveRulesError("No active rules for the given inputs")

    clipped = np.minimum(strength[:, None], system.output_curves)
    return AggregatedSet(system.grid, clipped.max(axis=0))


def defuzzify_centroid(curve: AggregatedSet) -> float:
    area = float(curve.mu.sum())
    if area <= 0:
        raise NoActiveRulesError("Aggregated set has zero area")
    return round(float(np.dot(curve.x, curve.mu) / area), CENTROID_DECIMALS)


def infer(rulebase: RuleBase, c: float, n: float, g: float,
          system: FuzzySystem = DEFAULT_SYSTEM) -> float:
    """
    Фаззификация, вывод и дефаззификация: эффективность u.
    """
    inputs = {
        "C": fuzzify(system.c, c),
        "N": fuzzify(system.n, n),
        "G": fuzzify(system.g, g),
    }
    return defuzzify_centroid(aggregate(rulebase, inputs, system))
