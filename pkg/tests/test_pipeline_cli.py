import json
import math

import jsonschema
import numpy as np
import pytest

from oracles import auroc_oracle, two_pass_oracle
from smlad import cli
from smlad.baseline_scorers import max_logit_and_pred
from smlad.boundary_suppression import BoundaryConfig, iterative_boundary_suppression
from smlad.class_stats import load_stats, standardize
from smlad.dilated_smoothing import SmoothingConfig, dilated_smooth
from smlad.metrics import EvalReport, evaluate, per_class_distribution
from smlad.pipeline import (
    METHODS,
    PLOT_DATA_SCHEMA,
    PipelineConfig,
    PipelineError,
    compute_stats,
    export_plot_data,
    load_manifest,
    run_ablation,
    run_eval,
    run_score,
    run_stats,
    score_volume,
)
from smlad.synth import SynthConfig, generate_corpus, write_corpus
from smlad.tensor_io import AnomalyMask, LabelMap, LogitVolume, ScoreMap, read_tensor, write_tensor

SMALL = SynthConfig(height=40, width=40, anomaly_radius=4, anomaly_clearance=3, site_count=6)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = write_corpus(generate_corpus(SMALL, 6, 3), out)
    stats_path = out / "stats.json"
    run_stats(manifest, stats_path)
    return manifest, stats_path


def _write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_stats_match_two_pass(tmp_path):
    scenes = generate_corpus(SMALL, 2)
    manifest = write_corpus(scenes, tmp_path)
    stats = run_stats(manifest, tmp_path / "s.json", roles=("eval",))
    pooled = {}
    for sc in scenes:
        L, y = max_logit_and_pred(LogitVolume(sc.logits.data.astype(np.float32)))
        for v, c in zip(L.data.ravel(), y.data.ravel()):
            pooled.setdefault(int(c), []).append(float(v))
    for c, (mean, var, n) in two_pass_oracle(pooled).items():
        assert stats.counts[c] == n
        assert math.isclose(stats.means[c], mean, rel_tol=1e-9)
        assert math.isclose(stats.variances[c], var, rel_tol=1e-9)
    assert load_stats(tmp_path / "s.json") == stats


def test_mixed_channels_rejected(tmp_path):
    write_tensor(LogitVolume(np.zeros((3, 2, 2))), tmp_path / "a.npy")
    write_tensor(LogitVolume(np.zeros((4, 2, 2))), tmp_path / "b.npy")
    m = _write_json(tmp_path / "m.json", [{"logits": "a.npy", "role": "train"}, {"logits": "b.npy", "role": "train"}])
    with pytest.raises(PipelineError) as err:
        run_stats(m, tmp_path / "s.json")
    assert err.value.code == "inconsistent_channels"


def test_empty_manifest_writes_nothing(tmp_path):
    m = _write_json(tmp_path / "m.json", [])
    with pytest.raises(PipelineError) as err:
        run_stats(m, tmp_path / "s.json")
    assert err.value.code == "empty_manifest"
    assert not (tmp_path / "s.json").exists()


@pytest.mark.parametrize("doc", [{"logits": "x"}, [{"role": "train"}], [{"logits": "a.npy", "role": "test"}]])
def test_invalid_manifests(tmp_path, doc):
    with pytest.raises(PipelineError) as err:
        load_manifest(_write_json(tmp_path / "m.json", doc))
    assert err.value.code == "invalid_manifest"


def test_score_max_logit_is_negated_max(corpus, tmp_path):
    manifest, _ = corpus
    entry = load_manifest(manifest)[0]
    score_path, pred_path = run_score(PipelineConfig("max_logit"), entry.logits, tmp_path)
    vol = read_tensor(entry.logits)
    L, y = max_logit_and_pred(vol)
    np.testing.assert_array_equal(read_tensor(score_path).data, -L.data.astype(np.float32))
    assert read_tensor(pred_path, kind="labels", class_count=8) == y


def test_full_chain_equals_manual_composition(corpus):
    manifest, stats_path = corpus
    stats = load_stats(stats_path)
    vol = read_tensor(load_manifest(manifest)[4].logits)
    anomaly, _ = score_volume(vol, "sml_bs_ds", stats)
    L, y = max_logit_and_pred(vol)
    manual = -dilated_smooth(
        iterative_boundary_suppression(standardize(L, y, stats), y, BoundaryConfig()), SmoothingConfig()
    ).data
    assert anomaly.data.tobytes() == manual.tobytes()


def test_single_class_scene_sml_equals_sml_bs(corpus):
    _, stats_path = corpus
    stats = load_stats(stats_path)
    f = np.zeros((8, 6, 6))
    f[3] = 10.0 + np.random.default_rng(0).normal(size=(6, 6))
    vol = LogitVolume(f)
    assert score_volume(vol, "sml", stats)[0] == score_volume(vol, "sml_bs", stats)[0]


def test_score_errors(corpus, tmp_path):
    manifest, stats_path = corpus
    logits = load_manifest(manifest)[0].logits
    with pytest.raises(PipelineError) as err:
        run_score(PipelineConfig("sml"), logits, tmp_path)
    assert err.value.code == "missing_stats"
    with pytest.raises(PipelineError) as err:
        score_volume(LogitVolume(np.zeros((3, 2, 2))), "sml", load_stats(stats_path))
    assert err.value.code == "stats_mismatch"
    with pytest.raises(PipelineError):
        PipelineConfig("nope")


def test_eval_pools_and_round_trips(tmp_path, rng):
    scores, masks = [], []
    for i in range(2):
        s = np.round(rng.normal(size=(5, 5)), 1)
        g = (rng.random((5, 5)) < 0.3).astype(np.uint8)
        g[0, 0], g[0, 1] = 0, 1
        write_tensor(ScoreMap(s), tmp_path / f"s{i}.npy")
        write_tensor(AnomalyMask(g), tmp_path / f"g{i}.npy")
        scores.append(s)
        masks.append(g)
    rep = run_eval([tmp_path / "s0.npy", tmp_path / "s1.npy"], [tmp_path / "g0.npy", tmp_path / "g1.npy"], tmp_path / "r.json")
    flat = evaluate(ScoreMap(np.vstack(scores)), AnomalyMask(np.vstack(masks)))
    assert rep == flat
    assert rep.auroc == float(auroc_oracle(np.vstack(scores).ravel().tolist(), np.vstack(masks).ravel().tolist()))
    assert EvalReport.from_dict(json.loads((tmp_path / "r.json").read_text())) == rep
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "auroc,ap,fpr95"
    with pytest.raises(PipelineError) as err:
        run_eval([tmp_path / "s0.npy"], [])
    assert err.value.code == "unpaired_inputs"


def test_ablation_shape_and_determinism(corpus, tmp_path):
    manifest, stats_path = corpus
    rows = run_ablation(manifest, tmp_path / "a.csv", stats_path)
    run_ablation(manifest, tmp_path / "b.csv", stats_path)
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "method,auroc,ap,fpr95"
    assert [ln.split(",")[0] for ln in lines[1:]] == list(METHODS)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert all(0 <= v <= 1 for _, r in rows for v in (r.auroc, r.ap, r.fpr95))
    # Without --stats the train split provides them; same numbers.
    run_ablation(manifest, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "a.csv").read_bytes()


def test_plot_data_export(tmp_path):
    s = ScoreMap(np.arange(6.0).reshape(2, 3))
    preds = LabelMap(np.array([[0, 0, 2], [0, 2, 2]]), 4)
    gt = AnomalyMask(np.array([[0, 1, 0], [0, 0, 1]]))
    doc = export_plot_data(s, preds, gt, tmp_path / "p.json")
    assert set(doc["classes"]) == {"0", "2"}
    assert doc["classes"] == per_class_distribution(s, preds, gt)
    on_disk = json.loads((tmp_path / "p.json").read_text())
    assert on_disk == doc
    jsonschema.validate(on_disk, json.loads(PLOT_DATA_SCHEMA.read_text()))


# -- CLI -----------------------------------------------------------------------


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_end_to_end(tmp_path, capsys):
    corpus_dir = tmp_path / "c"
    code, _, _ = _run(capsys, "synth", "--out-dir", corpus_dir, "--count", 4, "--train", 2,
                      "--height", 40, "--width", 40, "--anomaly-radius", 4)
    assert code == 0
    manifest = corpus_dir / "manifest.json"
    code, out, _ = _run(capsys, "stats", "--manifest", manifest, "--out", tmp_path / "s.json")
    assert code == 0 and out.startswith("class 0:")
    entries = load_manifest(manifest)
    code, out, _ = _run(capsys, "score", "--logits", entries[2].logits, "--stats", tmp_path / "s.json",
                        "--out-dir", tmp_path / "scores")
    assert code == 0
    score_file = tmp_path / "scores" / "scene_0002_anomaly.npy"
    code, out, _ = _run(capsys, "eval", "--scores", score_file, "--gt", entries[2].gt_mask, "--report", tmp_path / "r.json")
    assert code == 0 and json.loads(out)["positives"] > 0
    code, out, _ = _run(capsys, "plot-data", "--scores", score_file, "--preds", tmp_path / "scores" / "scene_0002_pred.npy",
                        "--gt", entries[2].gt_mask, "--out", tmp_path / "p.json")
    assert code == 0
    jsonschema.validate(json.loads((tmp_path / "p.json").read_text()), json.loads(PLOT_DATA_SCHEMA.read_text()))
    code, out, _ = _run(capsys, "ablate", "--manifest", manifest, "--out", tmp_path / "a.csv")
    assert code == 0 and len(out.splitlines()) == 8


def test_cli_missing_stats_is_machine_readable(tmp_path, capsys, corpus):
    manifest, _ = corpus
    logits = load_manifest(manifest)[0].logits
    code, _, err = _run(capsys, "score", "--logits", logits, "--method", "sml", "--out-dir", tmp_path)
    assert code != 0
    assert json.loads(err)["error"] == "missing_stats"
    (tmp_path / "bad.json").write_text("{broken")
    code, _, err = _run(capsys, "score", "--logits", logits, "--stats", tmp_path / "bad.json", "--out-dir", tmp_path)
    assert code != 0 and json.loads(err)["error"] == "missing_stats"


def test_cli_flags_override_config(tmp_path, capsys, corpus):
    manifest, stats_path = corpus
    cfg = _write_json(tmp_path / "cfg.json", {"methods": ["sml_bs_ds"], "sm_dilation": 1, "bs-iters": 2})
    _run(capsys, "ablate", "--config", cfg, "--manifest", manifest, "--stats", stats_path, "--out", tmp_path / "file.csv")
    _run(capsys, "ablate", "--config", cfg, "--manifest", manifest, "--stats", stats_path, "--out", tmp_path / "flag.csv",
         "--sm-dilation", 6, "--bs-iters", 4)
    ref = run_ablation(manifest, tmp_path / "ref.csv", stats_path, methods=["sml_bs_ds"])
    file_only = run_ablation(manifest, tmp_path / "ref2.csv", stats_path, BoundaryConfig(iterations=2),
                             SmoothingConfig(dilation=1), methods=["sml_bs_ds"])
    assert (tmp_path / "flag.csv").read_bytes() == (tmp_path / "ref.csv").read_bytes()
    assert (tmp_path / "file.csv").read_bytes() == (tmp_path / "ref2.csv").read_bytes()
    assert ref[0][1] != file_only[0][1]


@pytest.mark.parametrize(
    "argv, code",
    [
        (["stats", "--out", "x.json"], "missing_argument"),
        (["ablate", "--manifest", "nope.json", "--out", "x.csv"], "invalid_manifest"),
        (["ablate", "--manifest", "m", "--out", "x", "--sm-kernel", "4"], "invalid_config"),
        (["synth", "--out-dir", "d", "--irregular-fraction", "0.5"], "invalid_config"),
    ],
)
def test_cli_error_codes(tmp_path, capsys, monkeypatch, argv, code):
    monkeypatch.chdir(tmp_path)
    rc, _, err = _run(capsys, *argv)
    assert rc == 2 and json.loads(err)["error"] == code


def test_cli_is_deterministic(tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        _run(capsys, "synth", "--out-dir", d, "--count", 3, "--train", 1, "--height", 32, "--width", 32,
             "--anomaly-radius", 3)
        _run(capsys, "stats", "--manifest", d / "manifest.json", "--out", d / "s.json")
        _run(capsys, "ablate", "--manifest", d / "manifest.json", "--stats", d / "s.json", "--out", d / "a.csv")
        outs.append([(d / f).read_bytes() for f in ("s.json", "a.csv", "scene_0001_logits.npy")])
    assert outs[0] == outs[1]


def test_compute_stats_requires_input():
    with pytest.raises(PipelineError):
        compute_stats([])
