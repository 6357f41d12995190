"""Model assembly: quality (single-utterance) and similarity (pair) scorers,
each in four variants via the use_gqt / use_el flags.

Forward passes take numpy spectrogram blocks plus boolean frame-validity
masks and return per-frame scores, the pooled utterance score, and the mask
actually used for pooling (for the pair task this is the intersection of the
two utterance masks).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from . import layers as L
from .autodiff import Tensor


@dataclass(frozen=True)
class ModelConfig:
    task: str = "mos"                      # "mos" or "similarity"
    use_gqt: bool = False
    use_el: bool = False
    n_bins: int = 257
    channels: tuple = (16, 16, 32, 32)
    blstm_hidden: int = 128
    fc_hidden: int = 128
    n_tokens: int = 10
    n_heads: int = 8
    n_codewords: int = 10
    dropout: float = 0.3

    def __post_init__(self):
        if self.task not in ("mos", "similarity"):
            raise ValueError(f"unknown task {self.task!r}")
        if not self.channels:
            raise ValueError("channels must be nonempty")
        if self.feature_dim % self.n_heads != 0:
            raise ValueError(f"{self.n_heads} heads do not divide feature dim "
                             f"{self.feature_dim}")
        if self.n_tokens < 1 or self.n_codewords < 1:
            raise ValueError("n_tokens and n_codewords must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def feature_dim(self) -> int:
        return L.cnn_feature_dim(self.channels, self.n_bins)

    @property
    def variant(self) -> str:
        tag = "mos" if self.task == "mos" else "sim"
        if self.use_gqt:
            tag += "+gqt"
        if self.use_el:
            tag += "+el"
        return tag


def config_to_text(cfg: ModelConfig) -> str:
    """Canonical sorted key=value lines; values JSON-encoded."""
    items = asdict(cfg)
    items["channels"] = list(items["channels"])
    return "\n".join(f"{k}={json.dumps(items[k])}" for k in sorted(items)) + "\n"


def config_from_text(text: str) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        if key not in known:
            raise ValueError(f"unknown model config key {key!r}")
        values[key] = json.loads(raw)
    missing = known - values.keys()
    if missing:
        raise ValueError(f"model config missing keys: {sorted(missing)}")
    values["channels"] = tuple(values["channels"])
    return ModelConfig(**values)


@dataclass
class ModelOutput:
    frame_scores: Tensor          # (B, T)
    utterance_score: Tensor       # (B,)
    mask: np.ndarray              # (B, T) pooling mask
    frame_embeddings: Tensor | None = None   # (B, T, 2*blstm_hidden)


def init_params(cfg: ModelConfig, rng) -> dict:
    params = {}
    L.init_cnn(params, rng, cfg.channels)
    d = cfg.feature_dim
    if cfg.use_gqt:
        L.init_gru(params, rng, "gqt.gru", d, d)
        L.init_gqt(params, rng, "gqt", d, cfg.n_tokens)
    blstm_in = d if cfg.task == "mos" else 2 * d
    L.init_blstm(params, rng, "blstm", blstm_in, cfg.blstm_hidden)
    L.init_frame_head(params, rng, "head", 2 * cfg.blstm_hidden, cfg.fc_hidden)
    if cfg.use_el:
        L.init_el_pooling(params, rng, "el", cfg.n_codewords)
    return params


def _features(cfg, params, spec: np.ndarray, mask: np.ndarray) -> Tensor:
    feats = L.cnn_forward(Tensor(np.asarray(spec, dtype=np.float64)), params,
                          cfg.channels, n_bins=cfg.n_bins)
    if cfg.use_gqt:
        ref = L.gru_last_hidden(feats, mask, params, "gqt.gru",
                                hidden=cfg.feature_dim)
        q = L.gqt_attention(ref, params, "gqt", n_heads=cfg.n_heads)
        feats = L.apply_quality_skip(feats, q)
    return feats


def _score(cfg, params, feats: Tensor, mask: np.ndarray, training, rng,
           want_embeddings) -> ModelOutput:
    emb = L.blstm_forward(feats, params, "blstm", hidden=cfg.blstm_hidden)
    frames = L.frame_score_head(emb, params, "head", training=training,
                                dropout_rate=cfg.dropout, rng=rng)
    if cfg.use_el:
        utt = L.el_pooling(frames, mask, params, "el")
    else:
        utt = L.masked_mean(frames, mask)
    return ModelOutput(frame_scores=frames, utterance_score=utt, mask=mask,
                       frame_embeddings=emb if want_embeddings else None)


def mos_forward(cfg: ModelConfig, params, spec, mask, training=False,
                rng=None, want_embeddings=False) -> ModelOutput:
    if cfg.task != "mos":
        raise ValueError(f"mos_forward called with task {cfg.task!r}")
    mask = np.asarray(mask, dtype=bool)
    feats = _features(cfg, params, spec, mask)
    return _score(cfg, params, feats, mask, training, rng, want_embeddings)


def _pad_time(spec: np.ndarray, mask: np.ndarray, t: int):
    pad = t - spec.shape[1]
    if pad == 0:
        return spec, mask
    spec = np.pad(spec, ((0, 0), (0, pad), (0, 0)))
    mask = np.pad(mask, ((0, 0), (0, pad)))
    return spec, mask


def sim_forward(cfg: ModelConfig, params, spec_a, spec_b, mask_a, mask_b,
                training=False, rng=None, want_embeddings=False) -> ModelOutput:
    """Pair scorer: both utterances are zero-padded to a shared length, run
    through the shared CNN (and quality layer when enabled), concatenated per
    frame along the feature axis, then scored like the single-utterance path.
    Pooling uses only frames valid in both utterances."""
    if cfg.task != "similarity":
        raise ValueError(f"sim_forward called with task {cfg.task!r}")
    spec_a = np.asarray(spec_a, dtype=np.float64)
    spec_b = np.asarray(spec_b, dtype=np.float64)
    mask_a = np.asarray(mask_a, dtype=bool)
    mask_b = np.asarray(mask_b, dtype=bool)
    t = max(spec_a.shape[1], spec_b.shape[1])
    spec_a, mask_a = _pad_time(spec_a, mask_a, t)
    spec_b, mask_b = _pad_time(spec_b, mask_b, t)

    feats_a = _features(cfg, params, spec_a, mask_a)
    feats_b = _features(cfg, params, spec_b, mask_b)
    cat = ad.concat([feats_a, feats_b], axis=2)
    return _score(cfg, params, cat, mask_a & mask_b, training, rng,
                  want_embeddings)
