"""Manifest reading and batch assembly.

Manifests are UTF-8 CSVs with a required header; wav paths are resolved
relative to the manifest's directory.  Batches pad variable-length frame
sequences with zeros and carry boolean masks marking the real frames.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import load_spectrogram
from .synth import MOS_HEADER, SIM_HEADER


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    wav_path: Path
    score: float
    system_id: str


@dataclass(frozen=True)
class Pair:
    pair_id: str
    wav_a: Path
    wav_b: Path
    score: float
    system_id: str


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise ManifestError(f"manifest {path} header {got} != expected {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise ManifestError(f"manifest {path} has no entries")
    for row in rows:
        if len(row) != len(header):
            raise ManifestError(f"manifest {path}: malformed row {row}")
    return rows, path.parent


def _score(raw, path):
    try:
        return float(raw)
    except ValueError:
        raise ManifestError(f"manifest {path}: bad score {raw!r}") from None


def read_mos_manifest(path) -> list[Utterance]:
    rows, base = _read_rows(path, MOS_HEADER)
    return [Utterance(r[0], base / r[1], _score(r[2], path), r[3]) for r in rows]


def read_sim_manifest(path) -> list[Pair]:
    rows, base = _read_rows(path, SIM_HEADER)
    return [Pair(r[0], base / r[1], base / r[2], _score(r[3], path), r[4])
            for r in rows]


def read_manifest(path, task: str):
    if task == "mos":
        return read_mos_manifest(path)
    if task == "similarity":
        return read_sim_manifest(path)
    raise ValueError(f"unknown task {task!r}")


def load_features(records) -> list:
    """Per record: one (T, F) frame matrix for MOS, a pair of them for
    similarity."""
    out = []
    for rec in records:
        if isinstance(rec, Utterance):
            out.append(load_spectrogram(rec.wav_path).frames)
        else:
            out.append((load_spectrogram(rec.wav_a).frames,
                        load_spectrogram(rec.wav_b).frames))
    return out


def pad_block(frame_list) -> tuple[np.ndarray, np.ndarray]:
    """Stack (T_i, F) matrices into a zero-padded (B, T_max, F) block plus a
    (B, T_max) validity mask."""
    t_max = max(f.shape[0] for f in frame_list)
    n_bins = frame_list[0].shape[1]
    block = np.zeros((len(frame_list), t_max, n_bins))
    mask = np.zeros((len(frame_list), t_max), dtype=bool)
    for i, f in enumerate(frame_list):
        block[i, :f.shape[0]] = f
        mask[i, :f.shape[0]] = True
    return block, mask


def build_mos_batch(features, scores):
    block, mask = pad_block(features)
    return block, mask, np.asarray(scores, dtype=np.float64)


def build_sim_batch(features, scores):
    block_a, mask_a = pad_block([f[0] for f in features])
    block_b, mask_b = pad_block([f[1] for f in features])
    return block_a, block_b, mask_a, mask_b, np.asarray(scores, dtype=np.float64)
