#!/usr/bin/env python3
"""Dump per-frame sequence-model features to CSV for external analysis.

One row per (utterance, frame) with columns utt_id, system_id, frame_idx and
the feature vector, suitable for t-SNE or probing experiments.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from speechscore.checkpoint import load_checkpoint
from speechscore.data import read_manifest
from speechscore.evaluate import export_embeddings


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    params, cfg = load_checkpoint(args.ckpt)
    records = read_manifest(args.manifest, cfg.task)
    n_rows = export_embeddings(cfg, params, records, args.out)
    print(f"wrote {n_rows} frame rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
