"""Synthetic labeled datasets for desk-scale training and tests.

Quality task: each utterance is a harmonic tone mixed with white noise,
mix = q * tone + (1 - q) * noise with both parts RMS-normalized, so the
power SNR is (q / (1 - q))^2 - strictly increasing in the quality knob q.
The ground-truth score is score_for_quality(q) = 1 + 4q in [1, 5]; a clean
tone (q = 1, infinite SNR) scores exactly 5.0.

Similarity task: each pair is two tones whose pitches differ by d semitones;
the ground truth is score_for_pitch_distance(d) = 1 + d/4 in [1, 4] for
d in [0, 12] (identical pitch scores 1.0 = "same").

Output is deterministic per seed, byte for byte.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, save_wav

MOS_HEADER = ["utt_id", "wav_path", "score", "system_id"]
SIM_HEADER = ["pair_id", "wav_a", "wav_b", "score", "system_pair_id"]

_PEAK = 0.25  # headroom so tone + 4-sigma noise stays inside [-1, 1]


def score_for_quality(q: float) -> float:
    """Monotone map from the tone fraction q in [0, 1] to a score in [1, 5]."""
    return 1.0 + 4.0 * q


def score_for_pitch_distance(d: float) -> float:
    """Monotone map from pitch distance in semitones to a score in [1, 4]."""
    return 1.0 + min(d, 12.0) / 4.0


def _rms_normalized_tone(rng, f0: float, n: int) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    phase = rng.uniform(0, 2 * np.pi)
    tone = (np.sin(2 * np.pi * f0 * t + phase)
            + 0.5 * np.sin(2 * np.pi * 2 * f0 * t + phase)
            + 0.25 * np.sin(2 * np.pi * 3 * f0 * t + phase))
    return tone / np.sqrt(np.mean(tone ** 2))


def _mix(rng, f0: float, q: float, n: int) -> np.ndarray:
    tone = _rms_normalized_tone(rng, f0, n)
    if q >= 1.0:
        return _PEAK * tone
    noise = rng.standard_normal(n)
    noise /= np.sqrt(np.mean(noise ** 2))
    return _PEAK * (q * tone + (1.0 - q) * noise)


def synth_dataset(out_dir, seed: int, n_utts: int, mode: str,
                  duration_range=(0.28, 0.42)) -> Path:
    """Generate WAVs plus a manifest under out_dir; returns the manifest path."""
    if n_utts < 2:
        raise ValueError(f"n_utts must be >= 2, got {n_utts}")
    if mode not in ("mos", "similarity"):
        raise ValueError(f"unknown mode: {mode}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_systems = max(2, min(6, n_utts // 2))

    rows = []
    if mode == "mos":
        # per-system base quality, spread so system means differ
        base_q = np.linspace(0.15, 0.9, n_systems)
        for i in range(n_utts):
            sys_idx = i % n_systems
            q = float(np.clip(base_q[sys_idx] + rng.uniform(-0.08, 0.08), 0.02, 1.0))
            f0 = rng.uniform(180.0, 500.0)
            n = int(rng.uniform(*duration_range) * SAMPLE_RATE)
            name = f"utt{i:04d}.wav"
            save_wav(out_dir / name, _mix(rng, f0, q, n))
            rows.append([f"utt{i:04d}", name, f"{score_for_quality(q):.6f}", f"sys{sys_idx}"])
        header = MOS_HEADER
    else:
        base_d = np.linspace(0.5, 10.5, n_systems)
        for i in range(n_utts):
            sys_idx = i % n_systems
            d = float(np.clip(base_d[sys_idx] + rng.uniform(-1.5, 1.5), 0.0, 12.0))
            f_a = rng.uniform(200.0, 450.0)
            f_b = f_a * 2.0 ** (d / 12.0 * rng.choice([-1.0, 1.0]))
            n_a = int(rng.uniform(*duration_range) * SAMPLE_RATE)
            n_b = int(rng.uniform(*duration_range) * SAMPLE_RATE)
            name_a, name_b = f"pair{i:04d}_a.wav", f"pair{i:04d}_b.wav"
            save_wav(out_dir / name_a, _mix(rng, f_a, 0.92, n_a))
            save_wav(out_dir / name_b, _mix(rng, f_b, 0.92, n_b))
            rows.append([f"pair{i:04d}", name_a, name_b,
                         f"{score_for_pitch_distance(d):.6f}", f"syspair{sys_idx}"])
        header = SIM_HEADER

    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return manifest
