"""Reproduction harness: regenerate the ablation table and hyper-parameter sweeps.

Everything is driven through the CLI so the scripted run exercises the same
code path a user would. Outputs land under one directory with a manifest.
"""
from __future__ import annotations

import contextlib
import csv
import io
import json
import shutil
from pathlib import Path

from . import cli

TABLE_ROWS = [
    ("msp", "MSP"),
    ("entropy", "Entropy"),
    ("max_logit", "Max Logit"),
    ("sml", "SML"),
    ("sml_bs", "SML + B Supp."),
    ("sml_ds", "SML + D. Smoothing"),
    ("sml_bs_ds", "SML + B Supp. + D. Smoothing"),
]
N_SWEEP = range(1, 6)
D_SWEEP = range(1, 11)


class ReproError(RuntimeError):
    pass


def _cli(*argv: str) -> str:
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = cli.main([str(a) for a in argv])
    if code != 0:
        raise ReproError(f"`smlad {' '.join(map(str, argv))}` exited with status {code}")
    return out.getvalue()


def read_ablation_csv(path) -> dict[str, dict[str, float]]:
    with open(path, newline="") as fh:
        return {
            row["method"]: {k: float(row[k]) for k in ("auroc", "ap", "fpr95")}
            for row in csv.DictReader(fh)
        }


def directional_claims(rows: dict[str, dict[str, float]]) -> list[tuple[str, bool]]:
    ap = {m: r["ap"] for m, r in rows.items()}
    fpr = {m: r["fpr95"] for m, r in rows.items()}
    return [
        ("FPR95(sml) < FPR95(max_logit)", fpr["sml"] < fpr["max_logit"]),
        ("AP(sml) > AP(max_logit)", ap["sml"] > ap["max_logit"]),
        ("AP(sml_bs_ds) >= AP(sml_bs)", ap["sml_bs_ds"] >= ap["sml_bs"]),
        ("AP(sml_bs) >= AP(sml)", ap["sml_bs"] >= ap["sml"]),
        ("FPR95(sml_bs) <= FPR95(sml)", fpr["sml_bs"] <= fpr["sml"]),
    ]


def render_markdown(rows: dict[str, dict[str, float]]) -> str:
    lines = [
        "| Models | AUROC | AP | FPR95 |",
        "|---|---|---|---|",
    ]
    for method, label in TABLE_ROWS:
        r = rows[method]
        lines.append(f"| {label} | {100 * r['auroc']:.2f} | {100 * r['ap']:.2f} | {100 * r['fpr95']:.2f} |")
    return "\n".join(lines) + "\n"


def prepare_corpus(out_dir, seed: int = 0) -> tuple[Path, Path]:
    """Generate the default corpus and its stats; returns (manifest, stats) paths."""
    out = Path(out_dir)
    corpus = out / "corpus"
    if corpus.exists():
        shutil.rmtree(corpus)
    _cli("synth", "--out-dir", corpus, "--count", 20, "--train", 10, "--seed", seed)
    manifest = corpus / "manifest.json"
    stats = out / "stats.json"
    _cli("stats", "--manifest", manifest, "--out", stats)
    return manifest, stats


def repro_ablation(out_dir="artifacts", seed: int = 0, check: bool = True) -> dict[str, dict[str, float]]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest, stats = prepare_corpus(out, seed)
    csv_path = out / "ablation.csv"
    _cli("ablate", "--manifest", manifest, "--stats", stats, "--out", csv_path)
    rows = read_ablation_csv(csv_path)
    (out / "ablation.md").write_text(render_markdown(rows))
    _write_artifact_manifest(out)
    if check:
        broken = [name for name, ok in directional_claims(rows) if not ok]
        if broken:
            raise ReproError("directional claims failed: " + "; ".join(broken))
    return rows


def _sweep(out: Path, manifest: Path, stats: Path, name: str, settings) -> Path:
    tmp = out / f".{name}_row.csv"
    rows = []
    for value, flags in settings:
        _cli("ablate", "--manifest", manifest, "--stats", stats, "--out", tmp, "--methods", "sml_bs_ds", *flags)
        r = read_ablation_csv(tmp)["sml_bs_ds"]
        rows.append((value, r))
    tmp.unlink()
    path = out / f"sweep_{name}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([name, "auroc", "ap", "fpr95"])
        for value, r in rows:
            writer.writerow([value, repr(r["auroc"]), repr(r["ap"]), repr(r["fpr95"])])
    return path


def repro_sweeps(out_dir="artifacts", seed: int = 0) -> tuple[Path, Path]:
    """Sweep iterations n (with r0 = 2n) and dilation d over the default corpus."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest, stats = out / "corpus" / "manifest.json", out / "stats.json"
    if not (manifest.exists() and stats.exists()):
        manifest, stats = prepare_corpus(out, seed)
    n_path = _sweep(
        out, manifest, stats, "n",
        [(n, ["--bs-iters", n, "--bs-width", 2 * n, "--bs-step", 2]) for n in N_SWEEP],
    )
    d_path = _sweep(out, manifest, stats, "d", [(d, ["--sm-dilation", d]) for d in D_SWEEP])
    _write_artifact_manifest(out)
    return n_path, d_path


def _write_artifact_manifest(out: Path) -> None:
    roles = {
        "stats.json": "class statistics from the train split",
        "ablation.csv": "ablation table (one row per method)",
        "ablation.md": "ablation table rendered as markdown",
        "sweep_n.csv": "boundary-suppression iteration sweep",
        "sweep_d.csv": "dilation-rate sweep",
        "corpus/manifest.json": "synthetic corpus manifest",
    }
    present = {k: v for k, v in roles.items() if (out / k).exists()}
    (out / "manifest.json").write_text(json.dumps(present, indent=2, sort_keys=True) + "\n")
