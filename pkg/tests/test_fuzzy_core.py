import math

import numpy as np
import pytest

from app.exceptions import ContractError, InputError, NoActiveRulesError
from app.fuzzy_core import DEFAULT_SAMPLES, DEFAULT_SYSTEM, LABELS, \
    AggregatedSet, FuzzySystem, FuzzyValue, FuzzyVariable, MembershipFunction, Rule, \
    RuleBase, activate, aggregate, defuzzify_centroid, fuzzify, infer
from app.rule_dsl import generate_default_rulebase
from tests.oracles import brute_force_infer


def degrees(**values):
    return {label: values.get(label, 0.0) for label in LABELS}


def inputs_from(c, n, g):
    return {"C": FuzzyValue("C", c), "N": FuzzyValue("N", n),
            "G": FuzzyValue("G", g)}


class TestFuzzify:
    def test_peak_identity(self):
        value = fuzzify(DEFAULT_SYSTEM.u, 0.5)
        assert value["ZO"] == 1.0
        assert sum(value.degrees.values()) == 1.0

    def test_midpoint_between_sets(self):
        value = fuzzify(DEFAULT_SYSTEM.u, 0.625)
        assert value["ZO"] == pytest.approx(0.5)
        assert value["PS"] == pytest.approx(0.5)
        assert value["NB"] == value["NS"] == value["PB"] == 0.0

    def test_clamps_to_universe(self):
        assert dict(fuzzify(DEFAULT_SYSTEM.n, -1.7).degrees) == \
            dict(fuzzify(DEFAULT_SYSTEM.n, -1.0).degrees)
        assert fuzzify(DEFAULT_SYSTEM.n, -1.7)["NB"] == 1.0

    @pytest.mark.parametrize("x", [math.nan, math.inf, -math.inf])
    def test_rejects_non_finite(self, x):
        with pytest.raises(InputError):
            fuzzify(DEFAULT_SYSTEM.c, x)


class TestActivate:
    def test_min_conjunction(self):
        inputs = inputs_from(degrees(NB=0.7), degrees(PB=0.4), degrees(NB=0.9))
        assert activate(Rule("NB", "PB", "NB", "PB"), inputs) == 0.4

    def test_zero_is_absorbing(self):
        inputs = inputs_from(degrees(NB=0.7), degrees(PB=0.0), degrees(NB=0.9))
        assert activate(Rule("NB", "PB", "NB", "PB"), inputs) == 0.0

    def test_all_ones(self):
        inputs = inputs_from(degrees(ZO=1.0), degrees(ZO=1.0), degrees(ZO=1.0))
        assert activate(Rule("ZO", "ZO", "ZO", "NB"), inputs) == 1.0

    def test_missing_input(self):
        inputs = {"C": FuzzyValue("C", degrees(ZO=1.0))}
        with pytest.raises(ContractError):
            activate(Rule("ZO", "ZO", "ZO", "NB"), inputs)


class TestAggregate:
    grid = DEFAULT_SYSTEM.grid

    def test_single_rule_reproduces_consequent(self):
        rb = RuleBase((Rule("ZO", "ZO", "ZO", "ZO"),))
        inputs = inputs_from(degrees(ZO=1.0), degrees(ZO=1.0), degrees(ZO=1.0))
        curve = aggregate(rb, inputs)
        np.testing.assert_allclose(curve.mu, DEFAULT_SYSTEM.u.set("ZO")(self.grid))

    def test_same_consequent_takes_max(self):
        rb = RuleBase((Rule("NB", "ZO", "ZO", "PS"), Rule("NS", "ZO", "ZO", "PS")))
        inputs = inputs_from(degrees(NB=0.3, NS=0.6), degrees(ZO=1.0),
                             degrees(ZO=1.0))
        curve = aggregate(rb, inputs)
        assert curve.mu.max() == pytest.approx(0.6)
        expected = np.minimum(0.6, DEFAULT_SYSTEM.u.set("PS")(self.grid))
        np.testing.assert_allclose(curve.mu, expected)

    def test_pointwise_max_of_clipped_sets(self):
        rb = RuleBase((Rule("PS", "ZO", "ZO", "PS"), Rule("PB", "ZO", "ZO", "PB")))
        inputs = inputs_from(degrees(PS=0.5, PB=0.5), degrees(ZO=1.0),
                             degrees(ZO=1.0))
        curve = aggregate(rb, inputs)
        u = DEFAULT_SYSTEM.u
        expected = [max(min(0.5, float(u.set("PS")(x))),
                        min(0.5, float(u.set("PB")(x)))) for x in self.grid]
        np.testing.assert_allclose(curve.mu, expected)

    def test_no_active_rules(self):
        rb = RuleBase((Rule("PB", "PB", "PB", "PB"),))
        inputs = inputs_from(degrees(NB=1.0), degrees(NB=1.0), degrees(NB=1.0))
        with pytest.raises(NoActiveRulesError):
            aggregate(rb, inputs)

    def test_duplicated_rules_leave_curve_unchanged(self):
        rb = generate_default_rulebase()
        doubled = RuleBase(rb.rules + rb.rules[:40])
        inputs = {"C": fuzzify(DEFAULT_SYSTEM.c, 0.3),
                  "N": fuzzify(DEFAULT_SYSTEM.n, -0.4),
                  "G": fuzzify(DEFAULT_SYSTEM.g, 0.7)}
        np.testing.assert_array_equal(aggregate(doubled, inputs).mu,
                                      aggregate(rb, inputs).mu)


class TestDefuzzify:
    grid = DEFAULT_SYSTEM.grid

    def test_symmetric_curve(self):
        curve = AggregatedSet(self.grid, DEFAULT_SYSTEM.u.set("ZO")(self.grid))
        assert defuzzify_centroid(curve) == pytest.approx(0.5, abs=1e-9)

    def test_symmetric_triangle(self):
        curve = AggregatedSet(self.grid, DEFAULT_SYSTEM.u.set("PS")(self.grid))
        assert defuzzify_centroid(curve) == pytest.approx(0.75, abs=1e-9)

    def test_matches_fine_grid_integration(self):
        u = DEFAULT_SYSTEM.u

        def clipped(x):
            return np.maximum(np.minimum(0.5, u.set("PS")(x)),
                              np.minimum(0.5, u.set("PB")(x)))

        fine = np.linspace(0.0, 1.0, 1_000_001)
        mu = clipped(fine)
        oracle = float(np.trapezoid(fine * mu, fine) / np.trapezoid(mu, fine))
        engine = defuzzify_centroid(AggregatedSet(self.grid, clipped(self.grid)))
        assert engine == pytest.approx(oracle, abs=1e-3)

    def test_zero_area(self):
        with pytest.raises(NoActiveRulesError):
            defuzzify_centroid(AggregatedSet(self.grid, np.zeros_like(self.grid)))

    def test_symmetric_output_is_exact(self):
        rb = RuleBase((Rule("ZO", "ZO", "ZO", "ZO"),))
        assert infer(rb, 0.5, 0.0, 0.5) == 0.5


class TestInfer:
    def test_single_rule_at_peaks(self):
        rb = RuleBase((Rule("ZO", "ZO", "ZO", "ZO"),))
        assert infer(rb, 0.5, 0.0, 0.5) == pytest.approx(0.5, abs=1e-9)

    def test_deterministic(self):
        rb = generate_default_rulebase()
        assert infer(rb, 0.37, -0.2, 0.81) == infer(rb, 0.37, -0.2, 0.81)

    def test_matches_brute_force(self):
        rb = generate_default_rulebase()
        assert infer(rb, 0.6, 0.2, 0.8) == pytest.approx(
            brute_force_infer(rb, 0.6, 0.2, 0.8), abs=1e-6)

    def test_random_inputs_match_brute_force(self, rng):
        rb = generate_default_rulebase()
        for c, n, g in zip(rng.uniform(0, 1, 20), rng.uniform(-1, 1, 20),
                           rng.uniform(0, 1, 20)):
            assert infer(rb, c, n, g) == pytest.approx(
                brute_force_infer(rb, c, n, g), abs=1e-6)

    def test_output_within_universe(self, rng):
        rb = generate_default_rulebase()
        for c, n, g in rng.uniform(-2, 2, (50, 3)):
            assert 0.0 <= infer(rb, c, n, g) <= 1.0


class TestVariables:
    def test_evenly_spaced_peaks(self):
        assert DEFAULT_SYSTEM.n.peaks == pytest.approx((-1.0, -0.5, 0.0, 0.5, 1.0))

    def test_gap_between_sets_rejected(self):
        var = DEFAULT_SYSTEM.c
        sets = list(var.sets)
        sets[0] = MembershipFunction("NB", 0.0, 0.0, 0.1)
        sets[1] = MembershipFunction("NS", 0.2, 0.25, 0.5)
        with pytest.raises(InputError):
            FuzzyVariable(var.universe, tuple(sets))

    def test_coarse_grid_rejected(self):
        with pytest.raises(InputError):
            FuzzySystem(samples=500)

    def test_unknown_label_in_rule(self):
        with pytest.raises(InputError):
            Rule("XX", "ZO", "ZO", "ZO")


class TestInferInvariants:
    rb = generate_default_rulebase()

    @pytest.mark.parametrize("outside, bound", [
        ((-0.3, 0.2, 0.5), (0.0, 0.2, 0.5)),
        ((1.4, -2.5, 3.0), (1.0, -1.0, 1.0)),
        ((0.6, 1.8, -0.1), (0.6, 1.0, 0.0)),
    ])
    def test_clamping(self, outside, bound):
        assert infer(self.rb, *outside) == infer(self.rb, *bound)

    def test_grid_refinement(self, rng):
        fine = FuzzySystem(samples=2 * DEFAULT_SAMPLES - 1)
        for c, n, g in zip(rng.uniform(0, 1, 30), rng.uniform(-1, 1, 30),
                           rng.uniform(0, 1, 30)):
            assert abs(infer(self.rb, c, n, g, fine) -
                       infer(self.rb, c, n, g)) < 1e-3
