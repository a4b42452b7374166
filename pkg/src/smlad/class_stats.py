"""Per-class max-logit statistics and standardized max logits (SML).

Statistics are accumulated per image with an exact two-pass moment computation
and merged into the running totals with Chan et al.'s pairwise update, which
stays stable over millions of pixels and is associative up to rounding.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .tensor_io import LabelMap, ScoreMap, Stage

SCHEMA_VERSION = 1
SIGMA_FLOOR = 1e-6


class StatsError(ValueError):
    pass


def _merge_moments(n_a, mean_a, m2_a, n_b, mean_b, m2_b):
    """Combine (count, mean, M2) triples; works elementwise on arrays."""
    n = n_a + n_b
    with np.errstate(invalid="ignore", divide="ignore"):
        delta = mean_b - mean_a
        frac_b = np.where(n > 0, n_b / np.maximum(n, 1), 0.0)
        mean = mean_a + delta * frac_b
        m2 = m2_a + m2_b + delta * delta * n_a * frac_b
    return n, mean, m2


@dataclass(frozen=True, eq=False)
class ClassStats:
    """Population mean/variance of max logits per predicted class.

    ``counts[c] == 0`` marks class ``c`` absent; its mean and variance are
    stored as 0 and must not be used (see :attr:`present`). Merging goes
    through the sum of squared deviations ``m2 = variance * count``.
    """

    counts: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if not (counts.shape == means.shape == variances.shape) or counts.ndim != 1:
            raise StatsError("counts, means and variances must be 1-D arrays of equal length")
        if np.any(counts < 0):
            raise StatsError("negative pixel count")
        if np.any(variances < 0):
            raise StatsError("negative variance")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(variances))):
            raise StatsError("non-finite statistics")
        absent = counts == 0
        means = np.where(absent, 0.0, means)
        variances = np.where(absent, 0.0, variances)
        for name, arr in (("counts", counts), ("means", means), ("variances", variances)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, class_count: int) -> "ClassStats":
        z = np.zeros(class_count)
        return cls(np.zeros(class_count, dtype=np.int64), z, z)

    @classmethod
    def from_m2(cls, counts, means, m2) -> "ClassStats":
        counts = np.asarray(counts, dtype=np.int64)
        m2 = np.maximum(np.asarray(m2, dtype=np.float64), 0.0)
        return cls(counts, means, np.divide(m2, counts, out=np.zeros(len(counts)), where=counts > 0))

    @property
    def class_count(self) -> int:
        return len(self.counts)

    @property
    def present(self) -> np.ndarray:
        return self.counts > 0

    @property
    def m2(self) -> np.ndarray:
        return self.variances * self.counts

    @property
    def global_count(self) -> int:
        return int(self.counts.sum())

    def _global_moments(self) -> tuple[float, float]:
        n, mean, m2 = 0, 0.0, 0.0
        for c in range(self.class_count):
            if self.counts[c]:
                n, mean, m2 = _merge_moments(n, mean, m2, int(self.counts[c]), self.means[c], self.m2[c])
        return float(mean), float(m2)

    @property
    def global_mean(self) -> float:
        return self._global_moments()[0]

    @property
    def global_variance(self) -> float:
        n = self.global_count
        return self._global_moments()[1] / n if n else 0.0

    def merge(self, other: "ClassStats") -> "ClassStats":
        if other.class_count != self.class_count:
            raise StatsError(f"class count mismatch: {self.class_count} vs {other.class_count}")
        n, mean, m2 = _merge_moments(
            self.counts, self.means, self.m2, other.counts, other.means, other.m2
        )
        return ClassStats.from_m2(n, mean, m2)

    def __eq__(self, other):
        return (
            isinstance(other, ClassStats)
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.variances, other.variances)
        )


def image_stats(max_logits: ScoreMap, preds: LabelMap) -> ClassStats:
    """Two-pass moments of a single image, grouped by predicted class."""
    if max_logits.shape != preds.shape:
        raise StatsError(f"shape mismatch: {max_logits.shape} vs {preds.shape}")
    labels = preds.data.ravel().astype(np.intp)
    values = max_logits.data.ravel().astype(np.float64)
    C = preds.class_count
    counts = np.bincount(labels, minlength=C)
    sums = np.bincount(labels, weights=values, minlength=C)
    means = np.divide(sums, counts, out=np.zeros(C), where=counts > 0)
    resid = values - means[labels]
    m2 = np.bincount(labels, weights=resid * resid, minlength=C)
    return ClassStats.from_m2(counts, means, m2)


def accumulate(stats: ClassStats, max_logits: ScoreMap, preds: LabelMap) -> ClassStats:
    """Return ``stats`` updated with the pixels of one more image."""
    if preds.allow_ignore and np.any(preds.data == 255):
        raise StatsError("predictions must not contain IGNORE pixels")
    if preds.class_count > stats.class_count:
        raise StatsError(
            f"prediction class count {preds.class_count} exceeds stats class count {stats.class_count}"
        )
    if preds.class_count < stats.class_count:
        preds = LabelMap(preds.data, stats.class_count)
    return stats.merge(image_stats(max_logits, preds))


def standardize(max_logits: ScoreMap, preds: LabelMap, stats: ClassStats) -> ScoreMap:
    """Standardize each max logit by the statistics of its predicted class.

    Classes absent from ``stats`` fall back to the global mean and variance.
    Standard deviations below ``SIGMA_FLOOR`` are clamped to it.
    """
    if stats.global_count == 0:
        raise StatsError("stats have zero total count")
    if max_logits.shape != preds.shape:
        raise StatsError(f"shape mismatch: {max_logits.shape} vs {preds.shape}")
    if preds.class_count > stats.class_count:
        raise StatsError(
            f"prediction class count {preds.class_count} exceeds stats class count {stats.class_count}"
        )
    present = stats.present
    mu = np.where(present, stats.means, stats.global_mean)
    var = np.where(present, stats.variances, stats.global_variance)
    sigma = np.maximum(np.sqrt(var), SIGMA_FLOOR)
    labels = preds.data.astype(np.intp)
    out = (max_logits.data.astype(np.float64) - mu[labels]) / sigma[labels]
    return ScoreMap(out, Stage.SML)


def stats_to_dict(stats: ClassStats) -> dict:
    per_class = []
    variances = stats.variances
    for c in range(stats.class_count):
        n = int(stats.counts[c])
        per_class.append(
            {
                "class": c,
                "mean": float(stats.means[c]) if n else None,
                "variance": float(variances[c]) if n else None,
                "count": n,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "class_count": stats.class_count,
        "per_class": per_class,
        "global": {
            "mean": stats.global_mean,
            "variance": stats.global_variance,
            "count": stats.global_count,
        },
    }


def _num(value, what: str) -> float:
    # Accept JSON numbers or decimal strings.
    try:
        out = float(value)
    except (TypeError, ValueError) as exc:
        raise StatsError(f"invalid {what}: {value!r}") from exc
    if not math.isfinite(out):
        raise StatsError(f"non-finite {what}")
    return out


def stats_from_dict(doc: dict) -> ClassStats:
    if not isinstance(doc, dict):
        raise StatsError("stats document must be a JSON object")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise StatsError(f"unsupported schema_version {doc.get('schema_version')!r}")
    try:
        C = int(doc["class_count"])
        entries = doc["per_class"]
        glob = doc["global"]
    except (KeyError, TypeError, ValueError) as exc:
        raise StatsError(f"malformed stats document: {exc}") from exc
    if C < 1:
        raise StatsError("class_count must be positive")
    counts = np.zeros(C, dtype=np.int64)
    means = np.zeros(C)
    variances = np.zeros(C)
    seen = set()
    for entry in entries:
        try:
            c = int(entry["class"])
            n = int(entry["count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise StatsError(f"malformed class entry: {entry!r}") from exc
        if not 0 <= c < C or c in seen:
            raise StatsError(f"invalid or duplicate class index {c}")
        seen.add(c)
        if n < 0:
            raise StatsError(f"negative count for class {c}")
        if n == 0:
            continue
        var = _num(entry.get("variance"), f"variance of class {c}")
        if var < 0:
            raise StatsError(f"negative variance for class {c}")
        counts[c] = n
        means[c] = _num(entry.get("mean"), f"mean of class {c}")
        variances[c] = var
    try:
        global_count = int(glob["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise StatsError("malformed global entry") from exc
    if global_count != int(counts.sum()):
        raise StatsError(f"global count {global_count} != sum of class counts {int(counts.sum())}")
    if "variance" in glob and glob["variance"] is not None and _num(glob["variance"], "global variance") < 0:
        raise StatsError("negative global variance")
    return ClassStats(counts, means, variances)


def save_stats(stats: ClassStats, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(stats_to_dict(stats), fh, indent=2)
        fh.write("\n")


def load_stats(path: str | os.PathLike) -> ClassStats:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StatsError(f"malformed stats JSON: {exc}") from exc
    return stats_from_dict(doc)
