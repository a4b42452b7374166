"""Command-line entry point: ``smlad <subcommand> ...``.

Every subcommand accepts ``--config FILE`` pointing at a JSON object whose keys
are option names (``bs_iters``, ``method``, ...); explicit flags win over the
file. Failures exit non-zero with a one-line JSON error on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import pipeline
from .boundary_suppression import BoundaryConfig
from .class_stats import StatsError
from .dilated_smoothing import SmoothingConfig
from .metrics import MetricsError
from .pipeline import METHODS, PipelineConfig, PipelineError
from .synth import SynthConfig, generate_corpus, write_corpus
from .tensor_io import TensorError, read_tensor

log = logging.getLogger("smlad")

DEFAULTS = {
    "method": "sml_bs_ds",
    "bs_iters": BoundaryConfig.iterations,
    "bs_width": BoundaryConfig.initial_width,
    "bs_step": BoundaryConfig.width_step,
    "bs_window": BoundaryConfig.pooling_window,
    "sm_kernel": SmoothingConfig.kernel_size,
    "sm_sigma": SmoothingConfig.sigma,
    "sm_dilation": SmoothingConfig.dilation,
    "roles": ["train"],
    "methods": list(METHODS),
    "count": 20,
    "train": 10,
}


def _add_method_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("boundary suppression")
    g.add_argument("--bs-iters", type=int, help="number of iterations n (default 4)")
    g.add_argument("--bs-width", type=int, help="initial boundary width r0 (default 8)")
    g.add_argument("--bs-step", type=int, help="width decrement per iteration (default 2)")
    g.add_argument("--bs-window", type=int, help="pooling window size, odd (default 3)")
    g = p.add_argument_group("dilated smoothing")
    g.add_argument("--sm-kernel", type=int, help="Gaussian kernel size k, odd (default 7)")
    g.add_argument("--sm-sigma", type=float, help="Gaussian sigma (default 1)")
    g.add_argument("--sm-dilation", type=int, help="dilation rate d (default 6)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smlad", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="accumulate per-class max-logit statistics")
    p.add_argument("--config")
    p.add_argument("--manifest", help="manifest JSON listing logit files")
    p.add_argument("--out", help="output stats JSON")
    p.add_argument("--roles", nargs="+", help="manifest roles to use (default: train)")

    p = sub.add_parser("score", help="write anomaly maps for logit files")
    p.add_argument("--config")
    p.add_argument("--logits", nargs="+", help="logit volume NPY files")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--stats", help="stats JSON (required by sml* methods)")
    p.add_argument("--out-dir")
    _add_method_flags(p)

    p = sub.add_parser("eval", help="pooled AUROC / AP / FPR95 over score maps")
    p.add_argument("--config")
    p.add_argument("--scores", nargs="+", help="anomaly score NPY files")
    p.add_argument("--gt", nargs="+", help="anomaly mask NPY files, paired with --scores")
    p.add_argument("--report", help="output report JSON (a .csv row is written next to it)")

    p = sub.add_parser("ablate", help="evaluate every method on a manifest's eval split")
    p.add_argument("--config")
    p.add_argument("--manifest")
    p.add_argument("--out", help="output CSV")
    p.add_argument("--stats", help="precomputed stats JSON (default: computed from train entries)")
    p.add_argument("--methods", nargs="+", choices=METHODS)
    _add_method_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--count", type=int, help="number of scenes (default 20)")
    p.add_argument("--train", type=int, help="leading anomaly-free train scenes (default 10)")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", type=int, dest="class_count")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--anomaly-count", type=int)
    p.add_argument("--anomaly-radius", type=int)
    p.add_argument("--boundary-dip", type=float)
    p.add_argument("--irregular-fraction", type=float)

    p = sub.add_parser("plot-data", help="per-class box-plot statistics as JSON")
    p.add_argument("--config")
    p.add_argument("--scores", help="score map NPY")
    p.add_argument("--preds", help="prediction label map NPY")
    p.add_argument("--gt", help="anomaly mask NPY")
    p.add_argument("--out", help="output JSON")
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge built-in defaults < config file < explicit flags."""
    opts = {}
    file_opts = {}
    if getattr(args, "config", None):
        try:
            file_opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineError("invalid_config", f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_opts, dict):
            raise PipelineError("invalid_config", "config file must hold a JSON object")
        file_opts = {k.replace("-", "_"): v for k, v in file_opts.items()}
    for key, value in vars(args).items():
        if value is not None:
            opts[key] = value
        elif key in file_opts:
            opts[key] = file_opts[key]
        elif key in DEFAULTS:
            opts[key] = DEFAULTS[key]
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) in (None, [], "")]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise PipelineError("missing_argument", f"missing required option(s): {flags}")


def _configs(opts: dict) -> tuple[BoundaryConfig, SmoothingConfig]:
    try:
        boundary = BoundaryConfig(opts["bs_iters"], opts["bs_width"], opts["bs_step"], opts["bs_window"])
        smoothing = SmoothingConfig(opts["sm_kernel"], float(opts["sm_sigma"]), opts["sm_dilation"])
    except (TypeError, ValueError) as exc:
        raise PipelineError("invalid_config", str(exc)) from exc
    return boundary, smoothing


def cmd_stats(opts: dict) -> None:
    _require(opts, "manifest", "out")
    stats = pipeline.run_stats(opts["manifest"], opts["out"], roles=tuple(opts["roles"]))
    for c in range(stats.class_count):
        print(f"class {c}: {int(stats.counts[c])} pixels")


def cmd_score(opts: dict) -> None:
    _require(opts, "logits")
    boundary, smoothing = _configs(opts)
    cfg = PipelineConfig(opts["method"], boundary, smoothing, opts.get("stats"), out_dir=opts.get("out_dir"))
    for f in opts["logits"]:
        score_path, pred_path = pipeline.run_score(cfg, f)
        print(f"{score_path}\t{pred_path}")


def cmd_eval(opts: dict) -> None:
    _require(opts, "scores", "gt")
    report = pipeline.run_eval(opts["scores"], opts["gt"], opts.get("report"))
    print(report.to_json(), end="")


def cmd_ablate(opts: dict) -> None:
    _require(opts, "manifest", "out")
    boundary, smoothing = _configs(opts)
    pipeline.run_ablation(
        opts["manifest"], opts["out"], opts.get("stats"), boundary, smoothing, methods=opts["methods"]
    )
    print(Path(opts["out"]).read_text(), end="")


def cmd_synth(opts: dict) -> None:
    _require(opts, "out_dir")
    names = {f.name for f in fields(SynthConfig)}
    kwargs = {k: v for k, v in opts.items() if k in names}
    try:
        cfg = SynthConfig(**kwargs)
        scenes = generate_corpus(cfg, int(opts["count"]), int(opts["train"]))
    except (TypeError, ValueError) as exc:
        raise PipelineError("invalid_config", str(exc)) from exc
    print(write_corpus(scenes, opts["out_dir"]))


def cmd_plot_data(opts: dict) -> None:
    _require(opts, "scores", "preds", "gt", "out")
    scores = read_tensor(opts["scores"], kind="scores")
    preds = read_tensor(opts["preds"], kind="labels")
    gt = read_tensor(opts["gt"], kind="mask")
    pipeline.export_plot_data(scores, preds, gt, opts["out"])
    print(opts["out"])


COMMANDS = {
    "stats": cmd_stats,
    "score": cmd_score,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "plot-data": cmd_plot_data,
}


def _fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return 2


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        opts = resolve_options(args)
        COMMANDS[args.command](opts)
    except PipelineError as exc:
        return _fail(exc.code, str(exc))
    except StatsError as exc:
        return _fail("invalid_stats", str(exc))
    except TensorError as exc:
        return _fail("invalid_tensor", str(exc))
    except MetricsError as exc:
        return _fail("degenerate_pool", str(exc))
    except OSError as exc:
        return _fail("io_error", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
