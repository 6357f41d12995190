"""Command-line interface.

Subcommands: train, eval, predict, gradcheck, synth.  Run configuration is
flat ``key = value`` text ('#' starts a comment); command-line flags override
file values, and the fully resolved configuration is echoed into the run
directory as ``config.resolved`` so any run can be replayed exactly.  The
SPEECHSCORE_RUNS environment variable sets the default run-directory root.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .audio import load_spectrogram
from .checkpoint import CheckpointError, load_checkpoint
from .evaluate import dump_predictions, evaluate_manifest
from .gradcheck import ALL_CHECKS, TOLERANCE, run_gradcheck
from .metrics import MetricError
from .models import ModelConfig, mos_forward, sim_forward
from .synth import synth_dataset
from .training import TrainConfig, TrainingError, default_batch_size, train

RUNS_ENV = "SPEECHSCORE_RUNS"
PATH_KEYS = ("train_manifest", "val_manifest", "out_dir")


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _channels(raw: str) -> tuple:
    return tuple(int(part) for part in raw.split(","))


def _opt_float(raw: str):
    return None if raw.lower() == "none" else float(raw)


_PARSERS = {
    "task": str, "use_gqt": _bool, "use_el": _bool, "n_bins": int,
    "channels": _channels, "blstm_hidden": int, "fc_hidden": int,
    "n_tokens": int, "n_heads": int, "n_codewords": int, "dropout": float,
    "alpha": float, "lr": float, "batch_size": int, "epochs": int,
    "seed": int, "beta1": float, "beta2": float, "eps": float,
    "stop_at_train_mse": _opt_float,
    "train_manifest": str, "val_manifest": str, "out_dir": str,
}

_MODEL_KEYS = {f.name for f in fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def parse_config_text(text: str, source: str = "config") -> dict:
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', "
                             f"got {raw_line!r}")
        if key not in _PARSERS:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = raw.strip()
    return values


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def resolve_run_config(values: dict):
    """Raw string values -> (ModelConfig, TrainConfig, paths, resolved text)."""
    parsed = {}
    for key, raw in values.items():
        try:
            parsed[key] = _PARSERS[key](raw)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from None

    model_cfg = ModelConfig(**{k: v for k, v in parsed.items()
                               if k in _MODEL_KEYS})
    train_kwargs = {k: v for k, v in parsed.items() if k in _TRAIN_KEYS}
    if "batch_size" not in train_kwargs:
        train_kwargs["batch_size"] = default_batch_size(model_cfg)
    train_cfg = TrainConfig(**train_kwargs)
    paths = {k: parsed.get(k) for k in PATH_KEYS}

    effective = {f.name: getattr(model_cfg, f.name) for f in fields(ModelConfig)}
    effective.update({f.name: getattr(train_cfg, f.name) for f in fields(TrainConfig)})
    effective.update({k: v for k, v in paths.items() if v is not None})
    resolved = "".join(f"{k} = {_format_value(effective[k])}\n"
                       for k in sorted(effective))
    return model_cfg, train_cfg, paths, resolved


def _gather_values(args) -> dict:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ValueError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"),
                                        source=str(path)))
    for key in PATH_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = str(flag)
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    return values


def cmd_train(args) -> int:
    model_cfg, train_cfg, paths, resolved = resolve_run_config(_gather_values(args))
    for key in ("train_manifest", "val_manifest"):
        if not paths[key]:
            raise ValueError(f"{key} is required (flag --{key.replace('_', '-')} "
                             f"or config key)")
    if paths["out_dir"]:
        out_dir = Path(paths["out_dir"])
    else:
        root = Path(os.environ.get(RUNS_ENV, "runs"))
        out_dir = root / f"{model_cfg.variant}-seed{train_cfg.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved").write_text(resolved, encoding="utf-8")

    result = train(model_cfg, train_cfg, paths["train_manifest"],
                   paths["val_manifest"], out_dir)

    report_path = out_dir / "report.txt"
    try:
        params, cfg = load_checkpoint(result.checkpoint_path, expect=model_cfg)
        report, _ = evaluate_manifest(cfg, params, paths["val_manifest"])
        report_path.write_text(report.as_text(), encoding="utf-8")
    except MetricError as exc:
        report_path.write_text(f"# metrics unavailable: {exc}\n", encoding="utf-8")

    print(f"run dir: {out_dir}")
    print(f"best epoch: {result.best_epoch}  val mse: {result.best_val_mse!r}")
    return 0


def cmd_eval(args) -> int:
    params, cfg = load_checkpoint(args.ckpt)
    report, rows = evaluate_manifest(cfg, params, args.manifest)
    text = report.as_text()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.dump_predictions:
        dump_predictions(args.dump_predictions, cfg.task, rows)
    return 0


def cmd_predict(args) -> int:
    params, cfg = load_checkpoint(args.ckpt)
    spec = load_spectrogram(args.wav).frames
    mask = np.ones((1, spec.shape[0]), dtype=bool)
    if cfg.task == "mos":
        if args.wav_b:
            raise ValueError("--wav-b only applies to similarity checkpoints")
        out = mos_forward(cfg, params, spec[None], mask)
    else:
        if not args.wav_b:
            raise ValueError("similarity checkpoint needs --wav-b")
        spec_b = load_spectrogram(args.wav_b).frames
        mask_b = np.ones((1, spec_b.shape[0]), dtype=bool)
        out = sim_forward(cfg, params, spec[None], spec_b[None], mask, mask_b)
    print(repr(float(out.utterance_score.data[0])))
    if args.frames:
        for value in out.frame_scores.data[0]:
            print(repr(float(value)))
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(args.module, trials=args.trials, seed=args.seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name}: max_rel_err={r.max_err:.3e} over {r.draws} draws [{status}]")
    if all(r.passed for r in results):
        print(f"all checks within {TOLERANCE:g}")
        return 0
    return 1


def cmd_synth(args) -> int:
    manifest = synth_dataset(args.out_dir, seed=args.seed, n_utts=args.n,
                             mode=args.mode)
    print(str(manifest))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechscore",
        description="Train and evaluate neural speech-quality and "
                    "speaker-similarity scorers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model variant")
    p_train.add_argument("--config", help="key = value config file")
    p_train.add_argument("--train-manifest", dest="train_manifest")
    p_train.add_argument("--val-manifest", dest="val_manifest")
    p_train.add_argument("--out-dir", dest="out_dir")
    p_train.add_argument("--seed", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--report", help="write the report here instead of stdout")
    p_eval.add_argument("--dump-predictions", dest="dump_predictions")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="score one utterance or pair")
    p_pred.add_argument("--ckpt", required=True)
    p_pred.add_argument("--wav", required=True)
    p_pred.add_argument("--wav-b", dest="wav_b")
    p_pred.add_argument("--frames", action="store_true",
                        help="also print per-frame scores")
    p_pred.set_defaults(func=cmd_predict)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p_grad.add_argument("--module", default="all",
                        help="'all' or one of: " + ", ".join(sorted(ALL_CHECKS)))
    p_grad.add_argument("--trials", type=int, default=20)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--out-dir", dest="out_dir", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--n", type=int, default=8)
    p_synth.add_argument("--mode", choices=("mos", "similarity"), default="mos")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, CheckpointError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
