"""Waveform loading and magnitude-spectrogram extraction.

Files are parsed as RIFF/WAVE directly (PCM-16 or IEEE float-32) so that
unsupported encodings and truncated payloads surface as WavError with a
definite message.  Spectrograms use a 512-point FFT (the unique size giving
257 bins), hop 256, periodic Hann window, no center padding; the model
pipeline expects 16 kHz input and rejects other rates instead of resampling.

All functions here are stateless and safe to call concurrently.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
N_FFT = 512
WINDOW = 512
HOP = 256
N_BINS = N_FFT // 2 + 1  # 257


class WavError(ValueError):
    """Unreadable, truncated or unsupported WAV content."""


class AudioError(ValueError):
    """Waveform violates a pipeline precondition (rate, length)."""


@dataclass
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int


@dataclass
class Spectrogram:
    frames: np.ndarray  # (N, 257) nonnegative float64

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def load_wav(path) -> Waveform:
    """Read a RIFF/WAVE file; first channel only, samples scaled to [-1, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + chunk_size]
        if chunk_id in (b"fmt ", b"data") and len(body) < chunk_size:
            raise WavError(f"{path}: truncated {chunk_id.decode().strip()} chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise WavError(f"{path}: malformed fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise WavError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if channels < 1:
        raise WavError(f"{path}: invalid channel count {channels}")

    if audio_format == 1 and bits == 16:
        frames = np.frombuffer(data[:len(data) - len(data) % (2 * channels)], dtype="<i2")
        samples = frames.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        frames = np.frombuffer(data[:len(data) - len(data) % (4 * channels)], dtype="<f4")
        samples = frames.astype(np.float64)
    else:
        raise WavError(f"{path}: unsupported encoding (format {audio_format}, {bits}-bit);"
                       " expected PCM-16 or IEEE float-32")

    samples = samples.reshape(-1, channels)[:, 0].copy()
    return Waveform(samples=samples, sample_rate=rate)


def save_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write mono PCM-16."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(pcm * 32767.0).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    with open(path, "wb") as f:
        f.write(header + payload)


def frame_count(n_samples: int, window: int, hop: int) -> int:
    """Number of full analysis windows: floor((L - window) / hop) + 1."""
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def _hann(n: int) -> np.ndarray:
    # periodic Hann, the STFT convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def magnitude_spectrogram(wave: Waveform, window: int = WINDOW, hop: int = HOP) -> Spectrogram:
    """Frame the waveform (no center padding), window with Hann, and take
    FFT magnitudes of bins 0..window/2."""
    x = np.asarray(wave.samples, dtype=np.float64)
    n = frame_count(x.size, window, hop)
    if n < 1:
        raise AudioError(f"waveform too short: {x.size} samples < window {window}")
    idx = hop * np.arange(n)[:, None] + np.arange(window)[None, :]
    frames = x[idx] * _hann(window)[None, :]
    mag = np.abs(np.fft.rfft(frames, n=window, axis=1))
    return Spectrogram(frames=mag)


def spectrogram_for_model(wave: Waveform) -> Spectrogram:
    """Model-input spectrogram; enforces the 16 kHz contract (no resampling)."""
    if wave.sample_rate != SAMPLE_RATE:
        raise AudioError(f"sample rate {wave.sample_rate} Hz not supported; expected {SAMPLE_RATE}")
    return magnitude_spectrogram(wave)


def load_spectrogram(path) -> Spectrogram:
    return spectrogram_for_model(load_wav(path))
