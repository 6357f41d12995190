import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechscore.audio import (
    AudioError,
    SAMPLE_RATE,
    Waveform,
    WavError,
    frame_count,
    load_wav,
    magnitude_spectrogram,
    save_wav,
    spectrogram_for_model,
)
from speechscore import synth


def test_load_silence(tmp_path):
    path = tmp_path / "s.wav"
    save_wav(path, np.zeros(16000))
    wave = load_wav(path)
    assert wave.sample_rate == 16000
    assert wave.samples.shape == (16000,)
    assert np.all(wave.samples == 0.0)


def test_pcm16_normalization(tmp_path):
    path = tmp_path / "m.wav"
    payload = struct.pack("<3h", 32767, -32768, 0)
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
                         b"fmt ", 16, 1, 1, 16000, 32000, 2, 16, b"data", len(payload))
    path.write_bytes(header + payload)
    wave = load_wav(path)
    np.testing.assert_allclose(wave.samples, [32767 / 32768, -1.0, 0.0])


def test_stereo_takes_first_channel(tmp_path):
    path = tmp_path / "st.wav"
    frames = struct.pack("<6h", 100, -5, 200, -6, 300, -7)  # L/R interleaved
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(frames), b"WAVE",
                         b"fmt ", 16, 1, 2, 16000, 64000, 4, 16, b"data", len(frames))
    path.write_bytes(header + frames)
    wave = load_wav(path)
    np.testing.assert_allclose(wave.samples * 32768.0, [100, 200, 300])


def test_float32_payload(tmp_path):
    path = tmp_path / "f.wav"
    payload = np.array([0.5, -0.25], dtype="<f4").tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
                         b"fmt ", 16, 3, 1, 16000, 64000, 4, 32, b"data", len(payload))
    path.write_bytes(header + payload)
    np.testing.assert_allclose(load_wav(path).samples, [0.5, -0.25])


def test_unsupported_encoding_named(tmp_path):
    path = tmp_path / "u.wav"
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36, b"WAVE",
                         b"fmt ", 16, 1, 1, 16000, 48000, 3, 24, b"data", 0)
    path.write_bytes(header)
    with pytest.raises(WavError, match="unsupported encoding"):
        load_wav(path)


def test_truncated_file_named(tmp_path):
    path = tmp_path / "t.wav"
    save_wav(path, np.zeros(1000))
    path.write_bytes(path.read_bytes()[:100])
    with pytest.raises(WavError, match="truncated"):
        load_wav(path)


def test_not_riff(tmp_path):
    path = tmp_path / "x.wav"
    path.write_bytes(b"garbage")
    with pytest.raises(WavError, match="RIFF"):
        load_wav(path)


def test_frame_count_arithmetic():
    assert frame_count(16000, 512, 256) == 61
    assert frame_count(512, 512, 256) == 1
    assert frame_count(511, 512, 256) == 0


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 100000), st.integers(2, 4096), st.integers(1, 4096))
def test_frame_count_matches_enumeration(n_samples, window, hop):
    # brute force: count window placements that fit entirely
    count = 0
    start = 0
    while start + window <= n_samples:
        count += 1
        start += hop
    assert frame_count(n_samples, window, hop) == count


def test_spectrogram_shape_and_nonnegative():
    wave = Waveform(np.random.default_rng(0).uniform(-1, 1, 16000), 16000)
    spec = magnitude_spectrogram(wave)
    assert spec.frames.shape == (61, 257)
    assert np.all(spec.frames >= 0)


def test_zero_waveform_zero_spectrogram():
    spec = magnitude_spectrogram(Waveform(np.zeros(2048), 16000))
    assert np.all(spec.frames == 0.0)


def test_pure_tone_peak_bin():
    t = np.arange(16000) / 16000.0
    wave = Waveform(0.8 * np.sin(2 * np.pi * 1000.0 * t), 16000)
    spec = magnitude_spectrogram(wave)
    # 1000 Hz / (16000 Hz / 512 bins) = bin 32
    assert np.all(spec.frames.argmax(axis=1) == 32)


def test_sign_flip_invariance():
    x = np.random.default_rng(1).uniform(-1, 1, 6000)
    a = magnitude_spectrogram(Waveform(x, 16000)).frames
    b = magnitude_spectrogram(Waveform(-x, 16000)).frames
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_too_short_waveform_rejected():
    with pytest.raises(AudioError, match="too short"):
        magnitude_spectrogram(Waveform(np.zeros(100), 16000))


def test_wrong_rate_rejected():
    with pytest.raises(AudioError, match="sample rate"):
        spectrogram_for_model(Waveform(np.zeros(16000), 8000))


# --- synthetic datasets -------------------------------------------------------


def test_synth_mos_contract(tmp_path):
    manifest = synth.synth_dataset(tmp_path / "d", seed=1, n_utts=8, mode="mos")
    lines = manifest.read_text().strip().splitlines()
    assert lines[0] == "utt_id,wav_path,score,system_id"
    assert len(lines) == 9
    for line in lines[1:]:
        score = float(line.split(",")[2])
        assert 1.0 <= score <= 5.0
    wavs = sorted((tmp_path / "d").glob("*.wav"))
    assert len(wavs) == 8
    for w in wavs:
        assert load_wav(w).sample_rate == SAMPLE_RATE


def test_synth_similarity_contract(tmp_path):
    manifest = synth.synth_dataset(tmp_path / "d", seed=3, n_utts=6, mode="similarity")
    lines = manifest.read_text().strip().splitlines()
    assert lines[0] == "pair_id,wav_a,wav_b,score,system_pair_id"
    assert len(lines) == 7
    for line in lines[1:]:
        assert 1.0 <= float(line.split(",")[3]) <= 4.0
    assert len(list((tmp_path / "d").glob("*.wav"))) == 12


def test_synth_deterministic_bytes(tmp_path):
    m1 = synth.synth_dataset(tmp_path / "a", seed=7, n_utts=4, mode="mos")
    m2 = synth.synth_dataset(tmp_path / "b", seed=7, n_utts=4, mode="mos")
    assert m1.read_text() == m2.read_text()
    for w1, w2 in zip(sorted(m1.parent.glob("*.wav")), sorted(m2.parent.glob("*.wav"))):
        assert w1.read_bytes() == w2.read_bytes()


def test_quality_mapping_endpoints_and_monotonicity():
    assert synth.score_for_quality(1.0) == 5.0
    assert synth.score_for_quality(0.0) == 1.0
    qs = np.linspace(0, 1, 50)
    scores = [synth.score_for_quality(q) for q in qs]
    assert np.all(np.diff(scores) > 0)


def test_pitch_mapping_monotonicity():
    assert synth.score_for_pitch_distance(0.0) == 1.0
    assert synth.score_for_pitch_distance(12.0) == 4.0
    ds = np.linspace(0, 12, 50)
    scores = [synth.score_for_pitch_distance(d) for d in ds]
    assert np.all(np.diff(scores) > 0)


def test_synth_rejects_small_n(tmp_path):
    with pytest.raises(ValueError, match="n_utts"):
        synth.synth_dataset(tmp_path, seed=0, n_utts=1, mode="mos")
