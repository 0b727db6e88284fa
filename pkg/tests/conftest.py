from pathlib import Path

import numpy as np
import pytest

from app.features import fit_cooccurrence
from app.fcm import FcmConfig
from app.schemas import FrameRecord
from app.synth_eval import SynthConfig, generate

PUBLISHED_PATH = Path(__file__).resolve().parent.parent / "app" / "rules" / "published.frl"


def make_frames(labels, confidences=None, features=None, sequence_id="s"):
    confidences = confidences or [0.9] * len(labels)
    features = features if features is not None else [[1.0, 0.0]] * len(labels)
    return [FrameRecord(sequence_id=sequence_id, index=i, label=label,
                        confidence=c, feature=list(f))
            for i, (label, c, f) in enumerate(zip(labels, confidences,
                                                  features))]


@pytest.fixture
def frames_factory():
    return make_frames


@pytest.fixture
def published_path() -> Path:
    return PUBLISHED_PATH


@pytest.fixture
def ab_model():
    return fit_cooccurrence([["A", "A", "B"], ["B", "A"], ["A", "X"]])


@pytest.fixture
def fcm_cfg(ab_model):
    return FcmConfig(cooccurrence=ab_model)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    return generate(SynthConfig(num_sequences=4, sequence_length=40,
                                flip_rate=0.15, spur_rate=0.05, seed=3))
