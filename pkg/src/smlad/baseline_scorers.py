"""Per-pixel confidence scores computed directly from the logit volume."""
from __future__ import annotations

import enum
import math

import numpy as np

from .tensor_io import LabelMap, LogitVolume, ScoreMap, Stage


class Polarity(str, enum.Enum):
    NEGATE_CONFIDENCE = "NegateConfidence"
    AS_IS = "AsIs"


def max_logit_and_pred(logits: LogitVolume) -> tuple[ScoreMap, LabelMap]:
    """Channel max and argmax; argmax ties resolve to the lowest class index."""
    f = logits.data.astype(np.float64)
    preds = np.argmax(f, axis=0).astype(np.int32)
    return ScoreMap(f.max(axis=0), Stage.MAX_LOGIT), LabelMap(preds, logits.class_count)


def _log_softmax(logits: LogitVolume) -> np.ndarray:
    f = logits.data.astype(np.float64)
    shifted = f - f.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


def msp(logits: LogitVolume) -> ScoreMap:
    """Maximum softmax probability, in (0, 1]."""
    f = logits.data.astype(np.float64)
    shifted = f - f.max(axis=0, keepdims=True)
    # The winning channel contributes exp(0) = 1, so the max probability is 1 / Z.
    out = 1.0 / np.exp(shifted).sum(axis=0)
    return ScoreMap(out, Stage.MSP)


def entropy(logits: LogitVolume) -> ScoreMap:
    """Shannon entropy of the softmax in nats; already oriented as an anomaly score."""
    log_p = _log_softmax(logits)
    h = -(np.exp(log_p) * log_p).sum(axis=0)
    h = np.clip(h, 0.0, math.log(logits.class_count))
    return ScoreMap(h, Stage.ENTROPY, logits.class_count)


def to_anomaly(score: ScoreMap, polarity: Polarity | str = Polarity.NEGATE_CONFIDENCE) -> ScoreMap:
    polarity = Polarity(polarity)
    data = -score.data if polarity is Polarity.NEGATE_CONFIDENCE else score.data
    return ScoreMap(data, Stage.ANOMALY, score.class_count)
