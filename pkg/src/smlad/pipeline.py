"""End-to-end orchestration: statistics pass, scoring, evaluation and ablation."""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline_scorers import Polarity, entropy, max_logit_and_pred, msp, to_anomaly
from .boundary_suppression import BoundaryConfig, iterative_boundary_suppression
from .class_stats import ClassStats, StatsError, accumulate, load_stats, save_stats, standardize
from .dilated_smoothing import SmoothingConfig, dilated_smooth
from .metrics import EvalReport, evaluate, per_class_distribution
from .tensor_io import AnomalyMask, LabelMap, LogitVolume, ScoreMap, Stage, read_tensor, write_tensor

log = logging.getLogger(__name__)

METHODS = ("msp", "entropy", "max_logit", "sml", "sml_bs", "sml_ds", "sml_bs_ds")
STATS_METHODS = ("sml", "sml_bs", "sml_ds", "sml_bs_ds")
ROLES = ("train", "eval")
PLOT_DATA_SCHEMA = Path(__file__).parent / "schemas" / "plot_data.schema.json"


class PipelineError(ValueError):
    """Raised for invalid manifests, configs or inputs; ``code`` is machine readable."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class PipelineConfig:
    method: str = "sml_bs_ds"
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    stats_path: str | None = None
    manifest: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise PipelineError("invalid_config", f"unknown method {self.method!r}; choose from {METHODS}")

    def validate(self) -> None:
        if self.method in STATS_METHODS and not self.stats_path:
            raise PipelineError("missing_stats", f"method {self.method} requires a stats file")


@dataclass(frozen=True)
class ManifestEntry:
    logits: Path
    role: str = "eval"
    gt_mask: Path | None = None
    gt_labels: Path | None = None


def load_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    """Parse a JSON list of ``{logits, gt_mask?, gt_labels?, role}`` entries.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineError("invalid_manifest", f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, list):
        raise PipelineError("invalid_manifest", "manifest must be a JSON list")
    base = path.parent

    def resolve(p):
        return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

    entries = []
    for item in doc:
        if not isinstance(item, dict) or "logits" not in item:
            raise PipelineError("invalid_manifest", f"manifest entry without 'logits': {item!r}")
        role = item.get("role", "eval")
        if role not in ROLES:
            raise PipelineError("invalid_manifest", f"unknown role {role!r}")
        entries.append(
            ManifestEntry(resolve(item["logits"]), role, resolve(item.get("gt_mask")), resolve(item.get("gt_labels")))
        )
    return entries


def _read_logits(path: Path) -> LogitVolume:
    try:
        t = read_tensor(path, kind="logits")
    except OSError as exc:
        raise PipelineError("unreadable_file", f"cannot read {path}: {exc}") from exc
    return t


def _load_stats(path) -> ClassStats:
    try:
        return load_stats(path)
    except OSError as exc:
        raise PipelineError("missing_stats", f"cannot read stats file {path}: {exc}") from exc
    except StatsError as exc:
        raise PipelineError("missing_stats", f"invalid stats file {path}: {exc}") from exc


def compute_stats(volumes) -> ClassStats:
    """Accumulate class statistics over an iterable of logit volumes."""
    stats = None
    for vol in volumes:
        if stats is None:
            stats = ClassStats.empty(vol.class_count)
        elif vol.class_count != stats.class_count:
            raise PipelineError(
                "inconsistent_channels", f"expected {stats.class_count} channels, got {vol.class_count}"
            )
        L, preds = max_logit_and_pred(vol)
        stats = accumulate(stats, L, preds)
    if stats is None:
        raise PipelineError("empty_manifest", "no logit volumes to accumulate")
    return stats


def score_volume(
    logits: LogitVolume,
    method: str,
    stats: ClassStats | None = None,
    boundary: BoundaryConfig = BoundaryConfig(),
    smoothing: SmoothingConfig = SmoothingConfig(),
) -> tuple[ScoreMap, LabelMap]:
    """Anomaly scores (higher = more anomalous) and predictions for one image."""
    if method not in METHODS:
        raise PipelineError("invalid_config", f"unknown method {method!r}")
    L, preds = max_logit_and_pred(logits)
    if method == "msp":
        return to_anomaly(msp(logits), Polarity.NEGATE_CONFIDENCE), preds
    if method == "entropy":
        return to_anomaly(entropy(logits), Polarity.AS_IS), preds
    if method == "max_logit":
        return to_anomaly(L), preds
    if stats is None:
        raise PipelineError("missing_stats", f"method {method} requires class statistics")
    if stats.class_count != logits.class_count:
        raise PipelineError(
            "stats_mismatch", f"stats cover {stats.class_count} classes, logits have {logits.class_count}"
        )
    s = standardize(L, preds, stats)
    if method in ("sml_bs", "sml_bs_ds"):
        s = iterative_boundary_suppression(s, preds, boundary)
    if method in ("sml_ds", "sml_bs_ds"):
        s = dilated_smooth(s, smoothing)
    return to_anomaly(s), preds


def run_stats(manifest, out_stats_path, roles=("train",)) -> ClassStats:
    """Statistics over manifest entries with the given roles (all entries if none match)."""
    entries = load_manifest(manifest) if not isinstance(manifest, list) else manifest
    chosen = [e for e in entries if e.role in roles] or entries
    if not chosen:
        raise PipelineError("empty_manifest", "manifest lists no logit files")
    stats = compute_stats(_read_logits(e.logits) for e in chosen)
    save_stats(stats, out_stats_path)
    for c in range(stats.class_count):
        log.info("class %d: %d pixels", c, int(stats.counts[c]))
    return stats


def _stem(path: Path) -> str:
    name = path.name
    for suffix in ("_logits.npy", ".npy"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def run_score(cfg: PipelineConfig, logit_file, out_dir=None) -> tuple[Path, Path]:
    """Score one logit file; writes ``<stem>_anomaly.npy`` and ``<stem>_pred.npy``.

    Scores are stored as float32 and predictions as int32.
    """
    cfg.validate()
    logit_file = Path(logit_file)
    out = Path(out_dir or cfg.out_dir or logit_file.parent)
    out.mkdir(parents=True, exist_ok=True)
    stats = _load_stats(cfg.stats_path) if cfg.method in STATS_METHODS else None
    anomaly, preds = score_volume(_read_logits(logit_file), cfg.method, stats, cfg.boundary, cfg.smoothing)
    stem = _stem(logit_file)
    score_path = out / f"{stem}_anomaly.npy"
    pred_path = out / f"{stem}_pred.npy"
    write_tensor(ScoreMap(anomaly.data.astype(np.float32), Stage.ANOMALY), score_path)
    write_tensor(preds, pred_path)
    return score_path, pred_path


def run_eval(score_files, gt_files, report_path=None) -> EvalReport:
    """Pool all listed images under one threshold; writes JSON and a sibling CSV row."""
    score_files, gt_files = list(score_files), list(gt_files)
    if len(score_files) != len(gt_files) or not score_files:
        raise PipelineError("unpaired_inputs", "score and ground-truth lists must be non-empty and of equal length")
    scores = [read_tensor(p, kind="scores") for p in score_files]
    gts = [read_tensor(p, kind="mask") for p in gt_files]
    report = _evaluate(scores, gts)
    if report_path is not None:
        write_report(report, report_path)
    return report


def _evaluate(scores, gts) -> EvalReport:
    try:
        return evaluate(scores, gts)
    except ValueError as exc:
        raise PipelineError("degenerate_pool", str(exc)) from exc


def write_report(report: EvalReport, report_path) -> None:
    report_path = Path(report_path)
    report_path.write_text(report.to_json())
    with open(report_path.with_suffix(".csv"), "w", newline="") as fh:
        fh.write("auroc,ap,fpr95\n")
        fh.write(report.csv_row())


def ablation_rows(
    entries: list[ManifestEntry],
    stats: ClassStats,
    boundary: BoundaryConfig = BoundaryConfig(),
    smoothing: SmoothingConfig = SmoothingConfig(),
    methods=METHODS,
) -> list[tuple[str, EvalReport]]:
    evals = [e for e in entries if e.role == "eval"]
    if not evals:
        raise PipelineError("empty_manifest", "manifest has no eval entries")
    volumes, masks = [], []
    for e in evals:
        if e.gt_mask is None:
            raise PipelineError("invalid_manifest", f"eval entry {e.logits} has no gt_mask")
        volumes.append(_read_logits(e.logits))
        masks.append(read_tensor(e.gt_mask, kind="mask"))
    rows = []
    for method in methods:
        scores = [score_volume(v, method, stats, boundary, smoothing)[0] for v in volumes]
        rows.append((method, _evaluate(scores, masks)))
    return rows


def write_ablation_csv(rows, out_csv) -> None:
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "auroc", "ap", "fpr95"])
        for method, rep in rows:
            writer.writerow([method, repr(rep.auroc), repr(rep.ap), repr(rep.fpr95)])


def run_ablation(
    manifest,
    out_csv,
    stats_path=None,
    boundary: BoundaryConfig = BoundaryConfig(),
    smoothing: SmoothingConfig = SmoothingConfig(),
    methods=METHODS,
) -> list[tuple[str, EvalReport]]:
    """Run each method on the eval split; stats come from ``stats_path`` or the train split."""
    entries = load_manifest(manifest)
    if stats_path is not None:
        stats = _load_stats(stats_path)
    else:
        train = [e for e in entries if e.role == "train"]
        if not train:
            raise PipelineError("empty_manifest", "manifest has no train entries for the stats pass")
        stats = compute_stats(_read_logits(e.logits) for e in train)
    rows = ablation_rows(entries, stats, boundary, smoothing, methods)
    write_ablation_csv(rows, out_csv)
    return rows


def export_plot_data(scores: ScoreMap, preds: LabelMap, gt: AnomalyMask, out_json=None) -> dict:
    """Per-class box-plot statistics, optionally written as JSON (see ``PLOT_DATA_SCHEMA``)."""
    doc = {"classes": per_class_distribution(scores, preds, gt)}
    if out_json is not None:
        Path(out_json).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc
