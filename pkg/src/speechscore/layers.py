"""Network layers: strided conv blocks, LSTM/GRU recurrences, token
attention, the frame-score head and the two pooling mechanisms.

Sequence tensors are laid out (batch, time, ...); convolution inputs are
channels-last (B, T, F, C).  Frame validity masks are plain boolean numpy
arrays (B, T): padding frames still flow through the network but are
excluded from pooling and losses.  Parameters live in flat dicts keyed by
dotted names; parameters are immutable during a forward pass.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def uniform_init(rng, shape, fan_in) -> np.ndarray:
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _param(params, rng, name, shape, fan_in):
    params[name] = Tensor(uniform_init(rng, shape, fan_in), requires_grad=True)


def _zeros(params, name, shape):
    params[name] = Tensor(np.zeros(shape), requires_grad=True)


def _const(data) -> Tensor:
    return Tensor(data)


# ---------------------------------------------------------------------------
# Convolution stack


def same_pad_amount(size: int, stride: int, kernel: int = 3):
    out = -(-size // stride)  # ceil division
    total = max((out - 1) * stride + kernel - size, 0)
    return total // 2, total - total // 2, out


def _pad_axis(x: Tensor, axis: int, before: int, after: int) -> Tensor:
    parts = []
    if before:
        shape = list(x.shape)
        shape[axis] = before
        parts.append(_const(np.zeros(shape)))
    parts.append(x)
    if after:
        shape = list(x.shape)
        shape[axis] = after
        parts.append(_const(np.zeros(shape)))
    return ad.concat(parts, axis=axis) if len(parts) > 1 else x


def conv2d_same(x: Tensor, w: Tensor, b: Tensor, stride_f: int = 1) -> Tensor:
    """3x3 convolution over (B, T, F, Cin), stride 1 in time, stride_f in
    frequency, SAME padding.  w has shape (9*Cin, Cout) with rows ordered
    (dt, df, cin); returns (B, T, ceil(F/stride_f), Cout)."""
    B, T, F, Cin = x.shape
    if w.shape[0] != 9 * Cin:
        raise ShapeError(f"conv2d_same: shapes {x.shape} and {w.shape} do not conform")
    Cout = w.shape[1]
    f_before, f_after, F_out = same_pad_amount(F, stride_f)
    padded = _pad_axis(_pad_axis(x, 1, 1, 1), 2, f_before, f_after)

    patches = []
    for dt in range(3):
        for df in range(3):
            patches.append(ad.slice_(padded, (
                slice(None),
                slice(dt, dt + T),
                slice(df, df + (F_out - 1) * stride_f + 1, stride_f),
                slice(None),
            )))
    stacked = ad.concat(patches, axis=3)                     # (B, T, F_out, 9*Cin)
    flat = ad.reshape(stacked, (B * T * F_out, 9 * Cin))
    out = ad.broadcast_add(ad.matmul(flat, w), b)
    return ad.reshape(out, (B, T, F_out, Cout))


def init_conv_block(params, rng, prefix, c_in, c_out):
    for j, cin in zip((1, 2, 3), (c_in, c_out, c_out)):
        _param(params, rng, f"{prefix}.conv{j}.w", (9 * cin, c_out), fan_in=9 * cin)
        _zeros(params, f"{prefix}.conv{j}.b", (c_out,))


def conv_block_forward(x: Tensor, params, prefix) -> Tensor:
    """Two stride-1 convs then one frequency-stride-3 conv, ReLU after each."""
    x = ad.relu(conv2d_same(x, params[f"{prefix}.conv1.w"], params[f"{prefix}.conv1.b"], 1))
    x = ad.relu(conv2d_same(x, params[f"{prefix}.conv2.w"], params[f"{prefix}.conv2.b"], 1))
    x = ad.relu(conv2d_same(x, params[f"{prefix}.conv3.w"], params[f"{prefix}.conv3.b"], 3))
    return x


def init_cnn(params, rng, channels, prefix="cnn"):
    c_in = 1
    for i, c_out in enumerate(channels, start=1):
        init_conv_block(params, rng, f"{prefix}.block{i}", c_in, c_out)
        c_in = c_out


def cnn_forward(spec: Tensor, params, channels, n_bins: int, prefix="cnn") -> Tensor:
    """Spectrogram block (B, T, F) -> frame features (B, T, D) with one row
    per input frame; the frequency axis shrinks by ceil/3 per block."""
    B, T, F = spec.shape
    if F != n_bins:
        raise ShapeError(f"cnn_forward: expected {n_bins} frequency bins, got {F}")
    x = ad.reshape(spec, (B, T, F, 1))
    for i in range(1, len(channels) + 1):
        x = conv_block_forward(x, params, f"{prefix}.block{i}")
    _, _, F_out, C = x.shape
    return ad.reshape(x, (B, T, F_out * C))


def cnn_feature_dim(channels, n_bins: int) -> int:
    f = n_bins
    for _ in channels:
        f = -(-f // 3)
    return f * channels[-1]


# ---------------------------------------------------------------------------
# Recurrent layers


def init_lstm(params, rng, prefix, d_in, hidden):
    _param(params, rng, f"{prefix}.wx", (d_in, 4 * hidden), fan_in=d_in)
    _param(params, rng, f"{prefix}.wh", (hidden, 4 * hidden), fan_in=hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias
    params[f"{prefix}.b"] = Tensor(b, requires_grad=True)


def _lstm_direction(x: Tensor, params, prefix, hidden, reverse: bool):
    """One LSTM pass; returns hidden states in time order, zero initial state.
    Gate layout along the 4H axis: input, forget, cell, output."""
    B, T, _ = x.shape
    pre_all = ad.broadcast_add(
        ad.reshape(ad.matmul(ad.reshape(x, (B * T, x.shape[2])), params[f"{prefix}.wx"]),
                   (B * T, 4 * hidden)),
        params[f"{prefix}.b"])
    wh = params[f"{prefix}.wh"]
    h = _const(np.zeros((B, hidden)))
    c = _const(np.zeros((B, hidden)))
    hs = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        # rows of pre_all for step t sit at b*T + t
        pre_t = ad.slice_(pre_all, (slice(t, B * T, T),))
        pre = ad.add(pre_t, ad.matmul(h, wh))
        i = ad.sigmoid(ad.slice_(pre, (slice(None), slice(0, hidden))))
        f = ad.sigmoid(ad.slice_(pre, (slice(None), slice(hidden, 2 * hidden))))
        g = ad.tanh(ad.slice_(pre, (slice(None), slice(2 * hidden, 3 * hidden))))
        o = ad.sigmoid(ad.slice_(pre, (slice(None), slice(3 * hidden, 4 * hidden))))
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        hs[t] = h
    return hs


def init_blstm(params, rng, prefix, d_in, hidden):
    init_lstm(params, rng, f"{prefix}.fwd", d_in, hidden)
    init_lstm(params, rng, f"{prefix}.bwd", d_in, hidden)


def blstm_forward(x: Tensor, params, prefix, hidden) -> Tensor:
    """(B, T, D) -> (B, T, 2*hidden): forward and backward passes concatenated."""
    B, T, _ = x.shape
    fwd = _lstm_direction(x, params, f"{prefix}.fwd", hidden, reverse=False)
    bwd = _lstm_direction(x, params, f"{prefix}.bwd", hidden, reverse=True)
    rows = [ad.reshape(ad.concat([fwd[t], bwd[t]], axis=1), (B, 1, 2 * hidden))
            for t in range(T)]
    return ad.concat(rows, axis=1)


def init_gru(params, rng, prefix, d_in, hidden):
    _param(params, rng, f"{prefix}.wx", (d_in, 3 * hidden), fan_in=d_in)
    _param(params, rng, f"{prefix}.wh", (hidden, 3 * hidden), fan_in=hidden)
    _zeros(params, f"{prefix}.bx", (3 * hidden,))
    _zeros(params, f"{prefix}.bh", (3 * hidden,))


def gru_last_hidden(x: Tensor, mask: np.ndarray, params, prefix, hidden) -> Tensor:
    """Run a GRU over (B, T, D) and return each row's hidden state at its
    last valid frame (causality makes this equal to the unpadded run).
    Gate layout along the 3H axis: reset, update, candidate."""
    B, T, _ = x.shape
    pre_x = ad.broadcast_add(
        ad.matmul(ad.reshape(x, (B * T, x.shape[2])), params[f"{prefix}.wx"]),
        params[f"{prefix}.bx"])
    wh, bh = params[f"{prefix}.wh"], params[f"{prefix}.bh"]
    ones = _const(np.ones((B, hidden)))
    h = _const(np.zeros((B, hidden)))
    hs = []
    for t in range(T):
        xt = ad.slice_(pre_x, (slice(t, B * T, T),))
        hp = ad.broadcast_add(ad.matmul(h, wh), bh)
        r = ad.sigmoid(ad.add(ad.slice_(xt, (slice(None), slice(0, hidden))),
                              ad.slice_(hp, (slice(None), slice(0, hidden)))))
        z = ad.sigmoid(ad.add(ad.slice_(xt, (slice(None), slice(hidden, 2 * hidden))),
                              ad.slice_(hp, (slice(None), slice(hidden, 2 * hidden)))))
        n = ad.tanh(ad.add(ad.slice_(xt, (slice(None), slice(2 * hidden, 3 * hidden))),
                           ad.mul(r, ad.slice_(hp, (slice(None), slice(2 * hidden, 3 * hidden))))))
        h = ad.add(ad.mul(z, h), ad.mul(ad.add(ones, ad.neg(z)), n))
        hs.append(ad.reshape(h, (B, 1, hidden)))
    stacked = ad.concat(hs, axis=1)                          # (B, T, H)
    select = np.zeros((B, T, hidden))
    last = _last_valid_index(mask)
    for b in range(B):
        select[b, last[b], :] = 1.0
    return ad.sum_(ad.mul(stacked, _const(select)), axis=1)


def _last_valid_index(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=1).all():
        raise ValueError("mask has a row with no valid frames")
    return mask.shape[1] - 1 - mask[:, ::-1].argmax(axis=1)


# ---------------------------------------------------------------------------
# Quality-token attention


def init_gqt(params, rng, prefix, d_model, n_tokens):
    _param(params, rng, f"{prefix}.tokens", (n_tokens, d_model), fan_in=d_model)
    for name in ("wq", "wk", "wv"):
        _param(params, rng, f"{prefix}.{name}", (d_model, d_model), fan_in=d_model)


def gqt_attention(ref: Tensor, params, prefix, n_heads, return_weights=False):
    """Multi-head attention of a reference embedding (B, D) over the learned
    token bank; per head, softmax(q_h k_h^T / sqrt(d_head)) combines the
    value-projected tanh(tokens).  Heads concatenate back to (B, D)."""
    B, d_model = ref.shape
    if d_model % n_heads != 0:
        raise ShapeError(f"gqt_attention: {n_heads} heads do not divide dim {d_model}")
    d_head = d_model // n_heads
    tk = ad.tanh(params[f"{prefix}.tokens"])
    q = ad.matmul(ref, params[f"{prefix}.wq"])
    k = ad.matmul(tk, params[f"{prefix}.wk"])
    v = ad.matmul(tk, params[f"{prefix}.wv"])
    n_tokens = tk.shape[0]
    scale = _const(np.full((B, n_tokens), 1.0 / math.sqrt(d_head)))

    heads, weights = [], []
    for hd in range(n_heads):
        cols = slice(hd * d_head, (hd + 1) * d_head)
        qh = ad.slice_(q, (slice(None), cols))
        kh = ad.slice_(k, (slice(None), cols))
        vh = ad.slice_(v, (slice(None), cols))
        logits = ad.mul(ad.matmul(qh, ad.transpose(kh, (1, 0))), scale)
        w = ad.softmax_lastdim(logits)                       # (B, n_tokens)
        heads.append(ad.matmul(w, vh))
        weights.append(w)
    emb = ad.concat(heads, axis=1)
    return (emb, weights) if return_weights else emb


def apply_quality_skip(x: Tensor, q: Tensor) -> Tensor:
    """Add one quality embedding (B, D) onto every frame of (B, T, D)."""
    B, T, D = x.shape
    if q.shape != (B, D):
        raise ShapeError(f"apply_quality_skip: shapes {x.shape} and {q.shape} do not conform")
    expand = np.zeros((B * T, B))
    expand[np.arange(B * T), np.repeat(np.arange(B), T)] = 1.0
    q_rep = ad.reshape(ad.matmul(_const(expand), q), (B, T, D))
    return ad.add(x, q_rep)


# ---------------------------------------------------------------------------
# Score head and pooling


def init_frame_head(params, rng, prefix, d_in, hidden):
    _param(params, rng, f"{prefix}.fc1.w", (d_in, hidden), fan_in=d_in)
    _zeros(params, f"{prefix}.fc1.b", (hidden,))
    _param(params, rng, f"{prefix}.fc2.w", (hidden, 1), fan_in=hidden)
    _zeros(params, f"{prefix}.fc2.b", (1,))


def frame_score_head(x: Tensor, params, prefix, training=False,
                     dropout_rate=0.3, rng=None) -> Tensor:
    """(B, T, F) -> per-frame scalar scores (B, T): FC, ReLU, dropout, FC.
    Training-mode dropout draws an inverted-scaling mask from ``rng``."""
    B, T, F = x.shape
    h = ad.relu(ad.broadcast_add(
        ad.matmul(ad.reshape(x, (B * T, F)), params[f"{prefix}.fc1.w"]),
        params[f"{prefix}.fc1.b"]))
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = (rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
        h = ad.mul(h, _const(keep))
    out = ad.broadcast_add(ad.matmul(h, params[f"{prefix}.fc2.w"]), params[f"{prefix}.fc2.b"])
    return ad.reshape(out, (B, T))


def masked_mean(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of (B, T) frame scores over valid frames only -> (B,)."""
    B, T = scores.shape
    mask = np.asarray(mask, dtype=np.float64)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("masked_mean: a row has no valid frames")
    return ad.sum_(ad.mul(scores, _const(mask / counts[:, None])), axis=1)


def init_encoding_layer(params, rng, prefix, n_codewords):
    scale = 1.0 / math.sqrt(n_codewords)
    params[f"{prefix}.codewords"] = Tensor(
        rng.uniform(-1.0, 1.0, size=n_codewords) * scale, requires_grad=True)
    params[f"{prefix}.smoothing"] = Tensor(np.ones(n_codewords), requires_grad=True)


def encoding_layer(scores: Tensor, mask: np.ndarray, params, prefix,
                   return_weights=False):
    """Residual encoding of scalar frame scores against learned codewords.

    Per frame i and codeword k: residual r_ik = x_i - c_k, assignment
    w_ik = softmax_k(-s_k * r_ik^2); the output e_k sums w_ik * r_ik over
    valid frames, giving one K-vector per utterance.
    """
    B, T = scores.shape
    mask = np.asarray(mask, dtype=np.float64)
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("encoding_layer: a row has no valid frames")
    c = params[f"{prefix}.codewords"]
    s = params[f"{prefix}.smoothing"]
    K = c.shape[0]

    x_col = ad.reshape(scores, (B * T, 1))
    x_rep = ad.matmul(x_col, _const(np.ones((1, K))))        # (B*T, K)
    r = ad.broadcast_add(x_rep, ad.neg(c))
    s_rep = ad.matmul(_const(np.ones((B * T, 1))), ad.reshape(s, (1, K)))
    w = ad.softmax_lastdim(ad.neg(ad.mul(s_rep, ad.square(r))))
    contrib = ad.mul(ad.mul(w, r), _const(np.repeat(mask.reshape(-1), K).reshape(B * T, K)))
    e = ad.sum_(ad.reshape(contrib, (B, T, K)), axis=1)
    return (e, w) if return_weights else e


def init_el_pooling(params, rng, prefix, n_codewords):
    init_encoding_layer(params, rng, prefix, n_codewords)
    _param(params, rng, f"{prefix}.pool.w", (n_codewords + 1, 1), fan_in=n_codewords + 1)
    _zeros(params, f"{prefix}.pool.b", (1,))


def el_pooling(scores: Tensor, mask: np.ndarray, params, prefix) -> Tensor:
    """Utterance score from [residual encoding, mean score] through a final
    FC; the mean occupies the last input slot."""
    B, _ = scores.shape
    e = encoding_layer(scores, mask, params, prefix)
    g = ad.reshape(masked_mean(scores, mask), (B, 1))
    cat = ad.concat([e, g], axis=1)
    out = ad.broadcast_add(ad.matmul(cat, params[f"{prefix}.pool.w"]),
                           params[f"{prefix}.pool.b"])
    return ad.reshape(out, (B,))
