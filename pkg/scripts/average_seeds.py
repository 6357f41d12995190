#!/usr/bin/env python3
"""Train one configuration under several seeds and average the metrics.

Small recurrent scorers are noisy run to run, so reported numbers come from
training the same configuration with a handful of seeds and averaging each
metric across the runs.  Prints one metrics row per seed plus a mean row.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from speechscore.checkpoint import load_checkpoint
from speechscore.cli import parse_config_text, resolve_run_config
from speechscore.evaluate import evaluate_manifest
from speechscore.training import train

METRIC_KEYS = ("utt_mse", "utt_lcc", "utt_srcc", "sys_mse", "sys_lcc",
               "sys_srcc", "acc", "same_ratio_mse", "same_ratio_lcc",
               "same_ratio_srcc")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--train-manifest", required=True)
    ap.add_argument("--val-manifest", required=True)
    ap.add_argument("--seeds", default="0,1,2,3")
    ap.add_argument("--out-dir", default="runs/seed-average")
    args = ap.parse_args()

    values = parse_config_text(Path(args.config).read_text(encoding="utf-8"),
                               source=args.config)
    values["train_manifest"] = args.train_manifest
    values["val_manifest"] = args.val_manifest
    seeds = [int(s) for s in args.seeds.split(",")]
    out = Path(args.out_dir)

    rows = []
    for seed in seeds:
        values["seed"] = str(seed)
        model_cfg, train_cfg, paths, _ = resolve_run_config(values)
        result = train(model_cfg, train_cfg, paths["train_manifest"],
                       paths["val_manifest"], out / f"seed{seed}")
        params, cfg = load_checkpoint(result.checkpoint_path, expect=model_cfg)
        report, _ = evaluate_manifest(cfg, params, paths["val_manifest"])
        rows.append((seed, report))

    keys = [k for k in METRIC_KEYS if getattr(rows[0][1], k) is not None]
    print("seed " + " ".join(f"{k:>14s}" for k in keys))
    for seed, report in rows:
        cells = " ".join(f"{getattr(report, k):14.6f}" for k in keys)
        print(f"{seed:4d} {cells}")
    means = [float(np.mean([getattr(r, k) for _, r in rows])) for k in keys]
    print("mean " + " ".join(f"{m:14.6f}" for m in means))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
