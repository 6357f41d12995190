"""Independent reference implementations used as test oracles.

Everything here is written directly from the defining formulas with plain
numpy loops, deliberately avoiding the library's own code paths.
"""

import numpy as np


def naive_conv2d_same(x, w, b, stride_f):
    """Direct 3x3 convolution oracle, channels-last (B, T, F, Cin), stride 1
    in time and stride_f in frequency, TF-style same padding.  w rows are
    ordered (dt, df, cin)."""
    B, T, F, Cin = x.shape
    Cout = w.shape[1]
    out_f = -(-F // stride_f)
    total = max((out_f - 1) * stride_f + 3 - F, 0)
    left = total // 2
    padded = np.pad(x, ((0, 0), (1, 1), (left, total - left), (0, 0)))
    out = np.zeros((B, T, out_f, Cout))
    kernel = w.reshape(3, 3, Cin, Cout)
    for bi in range(B):
        for t in range(T):
            for f in range(out_f):
                acc = np.zeros(Cout)
                for dt in range(3):
                    for df in range(3):
                        acc += padded[bi, t + dt, f * stride_f + df] @ kernel[dt, df]
                out[bi, t, f] = acc + b
    return out


def el_reference(x, mask, codewords, smoothing):
    """Residual-encoding oracle in extended precision: per valid frame i and
    codeword k, r_ik = x_i - c_k, w_ik = softmax_k(-s_k r_ik^2),
    e_k = sum_i w_ik r_ik."""
    x = np.asarray(x, dtype=np.longdouble)
    c = np.asarray(codewords, dtype=np.longdouble)
    s = np.asarray(smoothing, dtype=np.longdouble)
    mask = np.asarray(mask, dtype=bool)
    e = np.zeros(c.shape[0], dtype=np.longdouble)
    for i in range(x.shape[0]):
        if not mask[i]:
            continue
        r = x[i] - c
        logits = -s * r * r
        ex = np.exp(logits - logits.max())
        w = ex / ex.sum()
        e += w * r
    return e.astype(np.float64)


def pearson_reference(a, b):
    """Correlation straight from the covariance definition."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    da, db = a - a.mean(), b - b.mean()
    return float(np.sum(da * db) / np.sqrt(np.sum(da * da) * np.sum(db * db)))


def average_tie_ranks(values):
    """1-based ranks with ties sharing their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_reference(a, b):
    return pearson_reference(average_tie_ranks(a), average_tie_ranks(b))


def loss_reference(utt_pred, utt_true, frame_preds, alpha):
    """Mean over utterances of squared utterance error plus alpha times the
    mean squared frame-vs-utterance-target error."""
    total = 0.0
    for q_hat, q, frames in zip(utt_pred, utt_true, frame_preds):
        frames = np.asarray(frames, dtype=np.float64)
        total += (q_hat - q) ** 2 + alpha * np.mean((frames - q) ** 2)
    return total / len(utt_true)
