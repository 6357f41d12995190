"""Evaluation protocol: eval-mode predictions, metric assembly at utterance
and system level, prediction dumps, and frame-embedding export."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import load_features, read_manifest
from .metrics import (MetricError, MetricsReport, mse, pearson_lcc,
                      similarity_accuracy, spearman_srcc, system_aggregate,
                      system_same_ratio)
from .models import ModelConfig, mos_forward
from .training import predict_all


def metrics_from_predictions(task, preds, gts, system_ids) -> MetricsReport:
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    sys_pred = system_aggregate(preds, system_ids)
    sys_gt = system_aggregate(gts, system_ids)
    keys = sorted(sys_pred)
    sp = np.array([sys_pred[k] for k in keys])
    sg = np.array([sys_gt[k] for k in keys])
    report = MetricsReport(
        task=task, n_items=preds.size, n_systems=len(keys),
        utt_mse=mse(preds, gts), utt_lcc=pearson_lcc(preds, gts),
        utt_srcc=spearman_srcc(preds, gts),
        sys_mse=mse(sp, sg), sys_lcc=pearson_lcc(sp, sg),
        sys_srcc=spearman_srcc(sp, sg))
    if task == "similarity":
        report.acc = similarity_accuracy(preds, gts)
        ratio_pred = system_same_ratio(preds, system_ids)
        ratio_gt = system_same_ratio(gts, system_ids)
        rp = np.array([ratio_pred[k] for k in keys])
        rg = np.array([ratio_gt[k] for k in keys])
        report.same_ratio_mse = mse(rp, rg)
        # Per-system Same ratios take few discrete values, so a weak model
        # easily makes one side constant; keep the report usable in that case.
        try:
            report.same_ratio_lcc = pearson_lcc(rp, rg)
            report.same_ratio_srcc = spearman_srcc(rp, rg)
        except MetricError as exc:
            report.same_ratio_lcc = float("nan")
            report.same_ratio_srcc = float("nan")
            report.notes.append(f"same-ratio correlation undefined: {exc}")
    return report


def evaluate_records(cfg: ModelConfig, params, records, feats=None):
    """Returns (MetricsReport, rows) with one (item_id, system_id, pred, gt)
    row per manifest entry."""
    if feats is None:
        feats = load_features(records)
    preds = predict_all(cfg, params, feats)
    gts = np.array([r.score for r in records])
    ids = [r.utt_id if cfg.task == "mos" else r.pair_id for r in records]
    system_ids = [r.system_id for r in records]
    report = metrics_from_predictions(cfg.task, preds, gts, system_ids)
    rows = list(zip(ids, system_ids, preds.tolist(), gts.tolist()))
    return report, rows


def evaluate_manifest(cfg: ModelConfig, params, manifest_path):
    records = read_manifest(manifest_path, cfg.task)
    return evaluate_records(cfg, params, records)


def dump_predictions(path, task, rows) -> None:
    header = ("utt_id,system_id,pred,gt" if task == "mos"
              else "pair_id,system_pair_id,pred,gt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for item_id, system_id, pred, gt in rows:
            fh.write(f"{item_id},{system_id},{pred!r},{gt!r}\n")


def read_prediction_dump(path):
    """Inverse of dump_predictions; returns (task, rows)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header == ["utt_id", "system_id", "pred", "gt"]:
            task = "mos"
        elif header == ["pair_id", "system_pair_id", "pred", "gt"]:
            task = "similarity"
        else:
            raise ValueError(f"unrecognized prediction dump header {header}")
        rows = [(r[0], r[1], float(r[2]), float(r[3])) for r in reader if r]
    return task, rows


def export_embeddings(cfg: ModelConfig, params, records, out_path,
                      feats=None) -> int:
    """Write per-frame sequence-model features (one CSV row per frame) for
    external visualization; returns the number of rows written."""
    if cfg.task != "mos":
        raise ValueError("embedding export requires a mos-task model")
    if feats is None:
        feats = load_features(records)
    dim = 2 * cfg.blstm_hidden
    n_rows = 0
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("utt_id,system_id,frame_idx," +
                 ",".join(f"f{i}" for i in range(dim)) + "\n")
        for rec, frames in zip(records, feats):
            mask = np.ones((1, frames.shape[0]), dtype=bool)
            out = mos_forward(cfg, params, frames[None, :, :], mask,
                              want_embeddings=True)
            emb = out.frame_embeddings.data[0]
            for t in range(emb.shape[0]):
                values = ",".join(repr(float(v)) for v in emb[t])
                fh.write(f"{rec.utt_id},{rec.system_id},{t},{values}\n")
                n_rows += 1
    return n_rows
