#!/usr/bin/env python3
"""Overfit every model variant on a tiny synthetic set.

Sanity experiment: with eight labeled items, no dropout, and enough epochs,
each variant should memorize the training scores.  Prints one line per
variant with the epochs used, wall time, and final train MSE; exits nonzero
if any variant misses the target.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from speechscore.models import ModelConfig
from speechscore.synth import synth_dataset
from speechscore.training import TrainConfig, train

VARIANTS = [(task, gqt, el)
            for task in ("mos", "similarity")
            for gqt in (False, True)
            for el in (False, True)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/overfit")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n", type=int, default=8, help="items per task")
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--target", type=float, default=0.01,
                    help="stop once train MSE drops below this")
    args = ap.parse_args()

    out = Path(args.out_dir)
    manifests = {
        "mos": synth_dataset(out / "data-mos", seed=args.seed,
                             n_utts=args.n, mode="mos"),
        "similarity": synth_dataset(out / "data-sim", seed=args.seed,
                                    n_utts=args.n, mode="similarity"),
    }

    all_ok = True
    for task, gqt, el in VARIANTS:
        model_cfg = ModelConfig(task=task, use_gqt=gqt, use_el=el, dropout=0.0)
        train_cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                                epochs=args.epochs, seed=args.seed,
                                stop_at_train_mse=args.target)
        manifest = manifests[task]
        start = time.time()
        result = train(model_cfg, train_cfg, manifest, manifest,
                       out / model_cfg.variant)
        elapsed = time.time() - start
        ok = (result.final_train_mse is not None
              and result.final_train_mse < args.target)
        all_ok &= ok
        print(f"{model_cfg.variant:11s} epochs={len(result.history):4d} "
              f"time={elapsed:7.1f}s train_mse={result.final_train_mse:.5f} "
              f"{'ok' if ok else 'MISSED TARGET'}", flush=True)
    return 0 if all_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
