import numpy as np
import pytest

from speechscore.data import read_manifest
from speechscore.evaluate import (dump_predictions, evaluate_manifest,
                                  export_embeddings, metrics_from_predictions,
                                  read_prediction_dump)
from speechscore.metrics import MetricError
from speechscore.models import ModelConfig, init_params
from speechscore.synth import synth_dataset

TINY = dict(channels=(2, 2, 2, 2), blstm_hidden=3, fc_hidden=4,
            n_tokens=2, n_heads=2, n_codewords=3)


def test_perfect_predictions_mos():
    gts = np.array([1.0, 2.0, 3.0, 4.0, 2.5, 3.5])
    systems = ["a", "a", "b", "b", "c", "c"]
    report = metrics_from_predictions("mos", gts.copy(), gts, systems)
    assert report.utt_mse == 0.0
    assert report.utt_lcc == pytest.approx(1.0, abs=1e-12)
    assert report.utt_srcc == pytest.approx(1.0, abs=1e-12)
    assert report.sys_mse == 0.0
    assert report.sys_lcc == pytest.approx(1.0, abs=1e-12)
    assert report.acc is None


def test_perfect_predictions_similarity():
    gts = np.array([1.0, 2.0, 3.0, 3.5])   # per-system Same-ratios 1.0 and 0.0
    systems = ["a", "a", "b", "b"]
    report = metrics_from_predictions("similarity", gts.copy(), gts, systems)
    assert report.acc == 1.0
    assert report.same_ratio_mse == 0.0
    assert report.same_ratio_lcc == pytest.approx(1.0, abs=1e-12)


def test_constant_predictor_reports_metric_error():
    gts = np.array([1.0, 2.0, 3.0])
    with pytest.raises(MetricError, match="zero variance"):
        metrics_from_predictions("mos", np.full(3, 2.0), gts, ["a", "b", "c"])


def test_dump_round_trip_reproduces_report(tmp_path):
    rng = np.random.default_rng(0)
    gts = rng.uniform(1, 4, 12)
    preds = gts + 0.3 * rng.standard_normal(12)
    systems = [f"s{i % 3}" for i in range(12)]
    ids = [f"p{i}" for i in range(12)]
    report = metrics_from_predictions("similarity", preds, gts, systems)

    path = tmp_path / "dump.csv"
    rows = list(zip(ids, systems, preds.tolist(), gts.tolist()))
    dump_predictions(path, "similarity", rows)
    task, loaded = read_prediction_dump(path)
    assert task == "similarity"
    re_preds = [r[2] for r in loaded]
    re_gts = [r[3] for r in loaded]
    re_systems = [r[1] for r in loaded]
    recomputed = metrics_from_predictions(task, re_preds, re_gts, re_systems)
    assert recomputed == report   # repr round-trip keeps floats exact


def test_dump_header_schemas(tmp_path):
    path = tmp_path / "dump.csv"
    dump_predictions(path, "mos", [("u0", "s0", 1.5, 2.0)])
    assert path.read_text().splitlines()[0] == "utt_id,system_id,pred,gt"
    dump_predictions(path, "similarity", [("p0", "s0", 1.5, 2.0)])
    assert path.read_text().splitlines()[0] == "pair_id,system_pair_id,pred,gt"
    path.write_text("who,knows\n")
    with pytest.raises(ValueError):
        read_prediction_dump(path)


def test_evaluate_manifest_end_to_end(tmp_path):
    manifest = synth_dataset(tmp_path / "d", seed=2, n_utts=6, mode="mos",
                             duration_range=(0.05, 0.08))
    cfg = ModelConfig(**TINY)
    params = init_params(cfg, np.random.default_rng(0))
    report, rows = evaluate_manifest(cfg, params, manifest)
    assert report.n_items == 6
    assert len(rows) == 6
    assert np.isfinite([report.utt_mse, report.sys_mse]).all()
    gts = [r[3] for r in rows]
    records = read_manifest(manifest, "mos")
    assert gts == [r.score for r in records]


def test_export_embeddings(tmp_path):
    manifest = synth_dataset(tmp_path / "d", seed=3, n_utts=2, mode="mos",
                             duration_range=(0.05, 0.07))
    records = read_manifest(manifest, "mos")
    cfg = ModelConfig(**TINY)
    params = init_params(cfg, np.random.default_rng(1))
    out_a = tmp_path / "emb-a.csv"
    out_b = tmp_path / "emb-b.csv"
    n_a = export_embeddings(cfg, params, records, out_a)
    export_embeddings(cfg, params, records, out_b)
    assert out_a.read_bytes() == out_b.read_bytes()

    lines = out_a.read_text().splitlines()
    dim = 2 * cfg.blstm_hidden
    header = lines[0].split(",")
    assert header[:3] == ["utt_id", "system_id", "frame_idx"]
    assert header[3] == "f0" and header[-1] == f"f{dim - 1}"
    assert len(lines) - 1 == n_a
    for line in lines[1:]:
        cells = line.split(",")
        assert len(cells) == 3 + dim
        int(cells[2])
        for cell in cells[3:]:  # values must round-trip as plain floats
            float(cell)
    from speechscore.audio import load_spectrogram
    total_frames = sum(load_spectrogram(r.wav_path).n_frames for r in records)
    assert n_a == total_frames

    sim_cfg = ModelConfig(task="similarity", **TINY)
    sim_params = init_params(sim_cfg, np.random.default_rng(2))
    with pytest.raises(ValueError):
        export_embeddings(sim_cfg, sim_params, records, tmp_path / "x.csv")
