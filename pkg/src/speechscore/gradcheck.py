"""Finite-difference verification harness.

Each named check draws random parameters/inputs, packs the checked
coordinates into one leaf vector, and runs autodiff.grad_check against
central differences.  Individual layers are checked over every coordinate
of a compact configuration; the eight full model variants check the scalar
training objective on a 5-frame input through a random subset of parameter
coordinates (the splice keeps the sweep affordable while still exercising
the complete graph).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers as L
from .autodiff import Tensor
from .models import ModelConfig, init_params, mos_forward, sim_forward
from .training import combined_mse_loss

TOLERANCE = 1e-4
EPS = 1e-6


@dataclass
class GradCheckResult:
    name: str
    draws: int
    max_err: float

    @property
    def passed(self) -> bool:
        return self.max_err <= TOLERANCE


def _flat_fn(shapes, build):
    names = list(shapes)
    sizes = [int(np.prod(shapes[n])) for n in names]

    def fn(v):
        tensors = {}
        off = 0
        for name, size in zip(names, sizes):
            seg = ad.slice_(v, (slice(off, off + size),))
            tensors[name] = ad.reshape(seg, shapes[name])
            off += size
        return build(tensors)

    return fn, sum(sizes)


def _check_conv_block(rng):
    shapes = {"x": (1, 2, 5, 1),
              "b.conv1.w": (9, 2), "b.conv1.b": (2,),
              "b.conv2.w": (18, 2), "b.conv2.b": (2,),
              "b.conv3.w": (18, 2), "b.conv3.b": (2,)}

    def build(p):
        return ad.sum_(L.conv_block_forward(p["x"], p, "b"))

    fn, total = _flat_fn(shapes, build)
    return fn, 0.5 * rng.standard_normal(total)


def _check_blstm(rng):
    d_in, hidden = 3, 2
    shapes = {"x": (2, 3, d_in),
              "m.fwd.wx": (d_in, 4 * hidden), "m.fwd.wh": (hidden, 4 * hidden),
              "m.fwd.b": (4 * hidden,),
              "m.bwd.wx": (d_in, 4 * hidden), "m.bwd.wh": (hidden, 4 * hidden),
              "m.bwd.b": (4 * hidden,)}

    def build(p):
        return ad.sum_(L.blstm_forward(p["x"], p, "m", hidden=hidden))

    fn, total = _flat_fn(shapes, build)
    return fn, 0.4 * rng.standard_normal(total)


def _check_gru(rng):
    d_in, hidden = 3, 2
    mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=bool)
    shapes = {"x": (2, 3, d_in),
              "g.wx": (d_in, 3 * hidden), "g.wh": (hidden, 3 * hidden),
              "g.bx": (3 * hidden,), "g.bh": (3 * hidden,)}

    def build(p):
        return ad.sum_(L.gru_last_hidden(p["x"], mask, p, "g", hidden=hidden))

    fn, total = _flat_fn(shapes, build)
    return fn, 0.4 * rng.standard_normal(total)


def _check_gqt(rng):
    d = 4
    shapes = {"ref": (2, d), "t.tokens": (3, d), "t.wq": (d, d),
              "t.wk": (d, d), "t.wv": (d, d)}

    def build(p):
        return ad.sum_(L.gqt_attention(p["ref"], p, "t", n_heads=2))

    fn, total = _flat_fn(shapes, build)
    return fn, 0.5 * rng.standard_normal(total)


def _check_encoding_layer(rng):
    mask = np.array([[1, 1, 1, 0]], dtype=bool)
    shapes = {"scores": (1, 4), "e.codewords": (3,), "e.smoothing": (3,)}

    def build(p):
        return ad.sum_(L.encoding_layer(p["scores"], mask, p, "e"))

    fn, total = _flat_fn(shapes, build)
    return fn, 0.5 * rng.standard_normal(total)


def _check_el_pooling(rng):
    mask = np.array([[1, 1, 1, 0]], dtype=bool)
    shapes = {"scores": (1, 4), "e.codewords": (3,), "e.smoothing": (3,),
              "e.pool.w": (4, 1), "e.pool.b": (1,)}

    def build(p):
        return ad.sum_(L.el_pooling(p["scores"], mask, p, "e"))

    fn, total = _flat_fn(shapes, build)
    return fn, 0.5 * rng.standard_normal(total)


LAYER_CHECKS = {
    "conv_block": _check_conv_block,
    "blstm": _check_blstm,
    "gru": _check_gru,
    "gqt_attention": _check_gqt,
    "encoding_layer": _check_encoding_layer,
    "el_pooling": _check_el_pooling,
}

VARIANTS = {
    "mos": ModelConfig(task="mos"),
    "mos+gqt": ModelConfig(task="mos", use_gqt=True),
    "mos+el": ModelConfig(task="mos", use_el=True),
    "mos+gqt+el": ModelConfig(task="mos", use_gqt=True, use_el=True),
    "sim": ModelConfig(task="similarity"),
    "sim+gqt": ModelConfig(task="similarity", use_gqt=True),
    "sim+el": ModelConfig(task="similarity", use_el=True),
    "sim+gqt+el": ModelConfig(task="similarity", use_gqt=True, use_el=True),
}

SPLICE_COORDS = 16


def _spliced_loss_fn(cfg: ModelConfig, rng):
    """Loss through a full variant as a function of a small leaf vector
    spliced into randomly chosen parameter coordinates."""
    params = init_params(cfg, rng)
    bases = {name: p.data.copy() for name, p in params.items()}
    spec = np.abs(rng.standard_normal((1, 5, cfg.n_bins)))
    mask = np.ones((1, 5), dtype=bool)
    if cfg.task == "similarity":
        spec_b = np.abs(rng.standard_normal((1, 4, cfg.n_bins)))
        mask_b = np.ones((1, 4), dtype=bool)
    target = np.array([rng.uniform(1.0, 5.0)])

    coords = [(name, i) for name in sorted(bases)
              for i in range(bases[name].size)]
    picks = [coords[j] for j in rng.choice(len(coords), size=SPLICE_COORDS,
                                           replace=False)]
    by_name: dict = {}
    for pos, (name, idx) in enumerate(picks):
        by_name.setdefault(name, []).append((pos, idx))

    def fn(v):
        spliced = {}
        for name, base in bases.items():
            if name not in by_name:
                spliced[name] = Tensor(base)
                continue
            rows = by_name[name]
            gather = np.zeros((1, len(rows)))
            scatter = np.zeros((len(rows), base.size))
            sel = np.zeros((len(rows), v.shape[0]))
            for r, (pos, idx) in enumerate(rows):
                sel[r, pos] = 1.0
                scatter[r, idx] = 1.0
            picked = ad.matmul(Tensor(sel), ad.reshape(v, (v.shape[0], 1)))
            delta = ad.reshape(ad.matmul(ad.transpose(picked, (1, 0)),
                                         Tensor(scatter)), base.shape)
            spliced[name] = ad.add(Tensor(base), delta)
        if cfg.task == "mos":
            out = mos_forward(cfg, spliced, spec, mask)
        else:
            out = sim_forward(cfg, spliced, spec, spec_b, mask, mask_b)
        return combined_mse_loss(out.frame_scores, out.utterance_score, target,
                        out.mask, alpha=0.8)

    return fn, np.zeros(SPLICE_COORDS)


def _check_variant(cfg):
    def check(rng):
        return _spliced_loss_fn(cfg, rng)
    return check


def _draw_error(fn, point) -> float:
    """Relative gradient error for one draw, refining the step on demand.

    A step that is too coarse inflates the estimate on stiff coordinates
    (saturated assignment softmaxes have huge higher derivatives); shrinking
    the step removes that truncation error, while a genuinely wrong adjoint
    keeps its gap at every step size.
    """
    err = ad.grad_check(fn, point, eps=EPS)
    for finer in (EPS / 4.0, EPS / 16.0):
        if err <= TOLERANCE:
            break
        err = min(err, ad.grad_check(fn, point, eps=finer))
    return err


ALL_CHECKS = dict(LAYER_CHECKS)
ALL_CHECKS.update({name: _check_variant(cfg) for name, cfg in VARIANTS.items()})


def run_gradcheck(which="all", trials=20, seed=0) -> list[GradCheckResult]:
    if which == "all":
        names = list(ALL_CHECKS)
    elif which in ALL_CHECKS:
        names = [which]
    else:
        raise ValueError(f"unknown gradcheck target {which!r}; "
                         f"choose from {['all'] + sorted(ALL_CHECKS)}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    results = []
    streams = np.random.SeedSequence(seed).spawn(len(names))
    for name, stream in zip(names, streams):
        rng = np.random.default_rng(stream)
        worst = 0.0
        for _ in range(trials):
            fn, point = ALL_CHECKS[name](rng)
            worst = max(worst, _draw_error(fn, point))
        results.append(GradCheckResult(name=name, draws=trials, max_err=worst))
    return results
