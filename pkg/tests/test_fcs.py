import math

import numpy as np
import pytest

from app.exceptions import DimensionError, InputError, NoCorrelatedFramesError
from app.fcs import FcsConfig, PrototypeClassifier, ProjectionConfig, \
    UpdateCriterion, UpdateMode, aggregate_high_cognition, attention_weights, \
    confidence_from_scores, correlated_sequence, cosine, project, \
    reclassify, run_fcs, softmax, update_rule
from app.fcm import FcmConfig, effectiveness
from app.features import candidate_context, fit_cooccurrence
from app.schemas import CognitionRecord, Level


def cognition(labels, us, cs=None, delta=0.5):
    cs = cs or [0.9] * len(labels)
    return [CognitionRecord(index=i, label=label, c=c, n=0.0, g=1.0, u=u,
                            level=Level.HIGH if u >= delta else Level.LOW)
            for i, (label, u, c) in enumerate(zip(labels, us, cs))]


@pytest.fixture
def flip_fixture(frames_factory):
    """
    [A, A, X, A, A]: X с низкой когницией, признаки всех кадров как у A.
    """
    labels = ["A", "A", "X", "A", "A"]
    frames = frames_factory(labels, [0.9, 0.9, 0.3, 0.9, 0.9],
                            [[1.0, 0.0]] * 5)
    records = cognition(labels, [0.8, 0.8, 0.3, 0.8, 0.8],
                        [0.9, 0.9, 0.3, 0.9, 0.9])
    classifier = PrototypeClassifier(("A", "X"), np.eye(2))
    fcm_cfg = FcmConfig(cooccurrence=fit_cooccurrence([["A", "X", "A"]]))
    return frames, records, classifier, fcm_cfg


@pytest.fixture
def double_flip_fixture(frames_factory):
    """
    [A, A, X, X, A, A]: два соседних кадра низкой когниции.
    """
    labels = ["A", "A", "X", "X", "A", "A"]
    frames = frames_factory(labels, [0.9, 0.9, 0.3, 0.3, 0.9, 0.9],
                            [[1.0, 0.0]] * 6)
    records = cognition(labels, [0.8, 0.8, 0.3, 0.3, 0.8, 0.8],
                        [0.9, 0.9, 0.3, 0.3, 0.9, 0.9])
    classifier = PrototypeClassifier(("A", "X"), np.eye(2))
    fcm_cfg = FcmConfig(cooccurrence=fit_cooccurrence([["A", "X", "A"]]))
    return frames, records, classifier, fcm_cfg


class TestCorrelatedSequence:
    def test_open_window(self):
        assert correlated_sequence(5, {2, 3, 4, 8, 9}, 3) == [3, 4]

    def test_empty_high_set(self):
        assert correlated_sequence(5, set(), 3) == []

    def test_unit_radius(self):
        assert correlated_sequence(5, {4, 6}, 1) == []


class TestProjection:
    def test_identity(self):
        f = np.array([0.3, -1.2, 2.0])
        keys, values = project(f, ProjectionConfig.identity(3))
        np.testing.assert_array_equal(keys, f)
        np.testing.assert_array_equal(values, f)

    def test_zero_keys(self):
        cfg = ProjectionConfig(np.zeros((2, 2)), np.eye(2))
        keys, _ = project([1.0, 2.0], cfg)
        assert not keys.any()
        assert cosine(keys, [1.0, 0.0]) == 0.0

    def test_seeded_random_is_reproducible(self):
        f = np.arange(4.0)
        a = project(f, ProjectionConfig.seeded_random(4, seed=7))
        b = project(f, ProjectionConfig.seeded_random(4, seed=7))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_seeded_random_matches_generator_stream(self):
        cfg = ProjectionConfig.seeded_random(4, seed=7)
        draws = np.random.default_rng(7).standard_normal((2, 4, 4)) / 2.0
        np.testing.assert_array_equal(cfg.key_matrix, draws[0])
        np.testing.assert_array_equal(cfg.value_matrix, draws[1])
        f = np.array([0.0, 1.0, 2.0, 3.0])
        keys, values = project(f, cfg)
        np.testing.assert_allclose(keys, f @ draws[0])
        np.testing.assert_allclose(values, f @ draws[1])
        assert cfg.source == "seeded-random(7)"

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            project([1.0, 2.0], ProjectionConfig.identity(3))

    def test_json_shape_checked(self, tmp_path):
        path = tmp_path / "proj.json"
        path.write_text('{"shape": [2, 2], "key": [[1, 0], [0, 1]], '
                        '"value": [[1, 0, 0], [0, 1, 0]]}')
        with pytest.raises(InputError, match="declared shape"):
            ProjectionConfig.load(path)

    def test_json_without_shape(self, tmp_path):
        path = tmp_path / "proj.json"
        path.write_text('{"key": [[1, 0], [0, 1]], "value": [[1, 0], [0, 1]]}')
        with pytest.raises(InputError):
            ProjectionConfig.load(path)

    @pytest.mark.parametrize("name", ["missing.json", "missing.npz"])
    def test_missing_file(self, tmp_path, name):
        with pytest.raises(InputError):
            ProjectionConfig.load(tmp_path / name)

    def test_json_round_trip(self, tmp_path):
        cfg = ProjectionConfig.seeded_random(3, seed=2, out_dim=2)
        cfg.save(tmp_path / "proj.json")
        loaded = ProjectionConfig.load(tmp_path / "proj.json")
        np.testing.assert_allclose(loaded.key_matrix, cfg.key_matrix)
        np.testing.assert_allclose(loaded.value_matrix, cfg.value_matrix)

    def test_npz_round_trip(self, tmp_path):
        cfg = ProjectionConfig.seeded_random(3, seed=1, out_dim=2)
        cfg.save(tmp_path / "proj.npz")
        loaded = ProjectionConfig.load(tmp_path / "proj.npz")
        np.testing.assert_array_equal(loaded.key_matrix, cfg.key_matrix)


class TestAttention:
    def test_cosine(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert cosine([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2))

    def test_softmax(self):
        np.testing.assert_allclose(softmax([0.9, 0.1]), [0.6900, 0.3100],
                                   atol=1e-4)

    def test_single_frame(self):
        out = aggregate_high_cognition([1.0, 0.0], [[0.5, 0.5]], [[3.0, 4.0]])
        np.testing.assert_allclose(out, [3.0, 4.0])

    def test_equal_similarity_is_mean(self):
        out = aggregate_high_cognition([1.0, 0.0], [[1.0, 1.0], [1.0, -1.0]],
                                       [[2.0, 0.0], [0.0, 4.0]])
        np.testing.assert_allclose(out, [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(NoCorrelatedFramesError):
            aggregate_high_cognition([1.0, 0.0], [], [])

    def test_weights_ignore_positive_scaling(self):
        query = np.array([0.6, -0.2, 1.1])
        keys = np.array([[1.0, 0.0, 0.5], [0.2, 0.9, -0.4], [-1.0, 0.3, 0.3]])
        base = attention_weights(query, keys)
        scaled = keys.copy()
        scaled[1] *= 0.2
        np.testing.assert_allclose(attention_weights(3.7 * query, scaled), base)


class TestReclassify:
    def test_nearest_prototype(self):
        clf = PrototypeClassifier(("a", "b", "c"), np.eye(3))
        scores = reclassify([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], clf)
        assert int(np.argmax(scores)) == 0

    def test_identical_prototypes(self):
        clf = PrototypeClassifier(("a", "b"), np.ones((2, 3)))
        np.testing.assert_allclose(reclassify([1, 2, 3], [3, 2, 1], clf),
                                   [0.5, 0.5])

    def test_softmax_oracle(self):
        clf = PrototypeClassifier(("a", "b"), np.eye(2), temperature=1.0)
        b = np.array([0.8, 0.2])
        cos = b / np.linalg.norm(b)
        expected = np.exp(cos) / np.exp(cos).sum()
        np.testing.assert_allclose(reclassify(b, b, clf), expected)

    def test_empty_classifier(self):
        clf = PrototypeClassifier((), np.zeros((0, 2)))
        with pytest.raises(InputError):
            reclassify([1.0, 0.0], [1.0, 0.0], clf)

    def test_from_groups_takes_means(self):
        clf = PrototypeClassifier.from_groups(
            {"b": [[0.0, 2.0], [0.0, 4.0]], "a": [[1.0, 1.0]]})
        assert clf.labels == ("a", "b")
        np.testing.assert_allclose(clf.prototypes, [[1.0, 1.0], [0.0, 3.0]])

    def test_save_and_load(self, tmp_path):
        clf = PrototypeClassifier(("a", "b"), np.eye(2), 0.1, 0.3)
        clf.save(tmp_path / "protos.json")
        loaded = PrototypeClassifier.load(tmp_path / "protos.json")
        assert (loaded.labels, loaded.temperature, loaded.blend) == \
            (("a", "b"), 0.1, 0.3)

    @pytest.mark.parametrize("scores, expected", [
        ((0.2, 0.7, 0.1), 0.7), ((0.2,) * 5, 0.2), ((0.0, 1.0, 0.0), 1.0)])
    def test_confidence(self, scores, expected):
        assert confidence_from_scores(scores) == pytest.approx(expected)

    def test_confidence_empty(self):
        with pytest.raises(InputError):
            confidence_from_scores([])


class TestUpdateRule:
    def test_accepted(self):
        assert update_rule(0.5, 0.9, 0.35) == (0.9, True)

    def test_rejected(self):
        u_opt, accepted = update_rule(0.6, 0.7, 0.35)
        assert u_opt == pytest.approx(0.95)
        assert not accepted

    def test_boundary_is_strict(self):
        assert update_rule(0.25, 0.75, 0.5) == (0.75, False)


class TestRunFcs:
    def test_all_high(self, frames_factory, fcm_cfg):
        frames = frames_factory(["A", "A", "B"])
        result = run_fcs(frames, cognition(["A", "A", "B"], [0.8] * 3), fcm_cfg)
        assert result.sequence == frames
        assert result.outcomes == []

    def test_repairs_flip(self, flip_fixture):
        frames, records, classifier, fcm_cfg = flip_fixture
        result = run_fcs(frames, records, fcm_cfg,
                         FcsConfig(classifier=classifier))
        [outcome] = result.outcomes
        assert outcome.accepted
        assert outcome.candidate_label == "A"
        assert outcome.u_hat > 0.3 + 0.35
        assert outcome.u_opt == outcome.u_hat
        assert [f.label for f in result.sequence] == ["A"] * 5
        assert result.sequence[2].confidence == pytest.approx(outcome.c_hat)
        assert result.sequence[:2] == frames[:2]

    def test_unreachable_threshold(self, flip_fixture):
        frames, records, classifier, fcm_cfg = flip_fixture
        result = run_fcs(frames, records, fcm_cfg,
                         FcsConfig(tau=10.0, classifier=classifier))
        assert not result.accepted
        assert result.sequence == frames

    def test_confidence_criterion(self, flip_fixture):
        frames, records, classifier, fcm_cfg = flip_fixture
        cfg = FcsConfig(classifier=classifier,
                        criterion=UpdateCriterion.CONFIDENCE)
        [outcome] = run_fcs(frames, records, fcm_cfg, cfg).outcomes
        assert outcome.accepted == (outcome.c_hat > 0.3 + 0.35)

    def test_no_correlated_frames(self, frames_factory, fcm_cfg):
        frames = frames_factory(["A", "A", "A", "A", "A", "B"])
        records = cognition(["A"] * 5 + ["B"], [0.8, 0.2, 0.2, 0.2, 0.2, 0.2])
        result = run_fcs(frames, records, fcm_cfg, FcsConfig(lam=2))
        skipped = [o for o in result.outcomes if o.reason]
        assert [o.index for o in skipped] == [2, 3, 4, 5]
        assert all(o.u_hat is None and not o.accepted for o in skipped)

    def test_high_frames_never_relabelled(self, flip_fixture):
        frames, records, classifier, fcm_cfg = flip_fixture
        for mode in UpdateMode:
            result = run_fcs(frames, records, fcm_cfg,
                             FcsConfig(classifier=classifier, mode=mode))
            assert {o.index for o in result.outcomes} == {2}

    def test_sequential_mode_sees_earlier_updates(self, double_flip_fixture):
        frames, records, classifier, fcm_cfg = double_flip_fixture
        model = fcm_cfg.cooccurrence
        original = [r.label for r in records]
        results = {mode: run_fcs(frames, records, fcm_cfg,
                                 FcsConfig(classifier=classifier, mode=mode))
                   for mode in UpdateMode}

        first, second = results[UpdateMode.SEQUENTIAL].outcomes
        assert first.accepted and first.new_label == "A"
        relabelled = original[:2] + ["A"] + original[3:]
        assert candidate_context(relabelled, 3, "A", model) != \
            candidate_context(original, 3, "A", model)
        assert second.u_hat == effectiveness(
            fcm_cfg, second.c_hat,
            *candidate_context(relabelled, 3, "A", model))

        _, batch_second = results[UpdateMode.BATCH].outcomes
        assert batch_second.u_hat == effectiveness(
            fcm_cfg, batch_second.c_hat,
            *candidate_context(original, 3, "A", model))

    def test_frozen_context(self, flip_fixture):
        frames, records, classifier, fcm_cfg = flip_fixture
        cfg = FcsConfig(classifier=classifier, recompute_context=False)
        [outcome] = run_fcs(frames, records, fcm_cfg, cfg).outcomes
        record = records[2]
        assert outcome.u_hat == effectiveness(fcm_cfg, outcome.c_hat,
                                              record.n, record.g)

    @pytest.mark.parametrize("mode", list(UpdateMode))
    def test_idempotent_on_own_output(self, double_flip_fixture, mode):
        frames, records, classifier, fcm_cfg = double_flip_fixture
        cfg = FcsConfig(classifier=classifier, mode=mode)
        first = run_fcs(frames, records, fcm_cfg, cfg)
        assert first.accepted
        second = run_fcs(first.sequence, records, fcm_cfg, cfg)
        assert second.sequence == first.sequence
        assert second.outcomes == first.outcomes
