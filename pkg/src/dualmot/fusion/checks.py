"""Named, reproducible gradient checks for every differentiable op.

Each check pins a test point (seeded, then screened so no ReLU
pre-activation sits against the kink, where central differences would
lie) and wires the op's forward/vjp pair into the checker. The registry
is shared by the command line and the test suite, so both verify the
same thing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..assignment import Box
from . import ops, pfm
from .gradcheck import DEFAULT_STEP, GradReport, grad_check, probe_indices

# pre-activations closer to the ReLU kink than these would let a +-1e-5
# parameter step flip the branch mid-difference; candidate seeds that
# land there are skipped
FFN_MARGIN = 5e-4
STEM_MARGIN = 1e-4

# the difference quotient carries rounding noise of roughly
# eps * loss / (2h); a probed coordinate whose true gradient sits below
# this floor would compare as pure noise, so such seeds are skipped too
GRAD_FLOOR = 3e-5
MAX_LOSS = 100.0

# coordinates probed per array in the composed image-level checks; the
# small ops are checked coordinate-exhaustively
PFM_COORDS_PER_ARRAY = 6

_SEED_TRIES = 300


@dataclass
class CheckDef:
    point: dict[str, np.ndarray]
    loss_and_grads: Callable
    max_per_array: int | None


def _sq_loss(out: np.ndarray) -> float:
    return 0.5 * float((out * out).sum())


def _grads_resolvable(lag, point, max_per_array=None) -> bool:
    loss, grads = lag(point)
    if not np.isfinite(loss) or abs(loss) > MAX_LOSS:
        return False
    for name in point:
        g = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        if float(np.abs(g[probe_indices(g.size, max_per_array)]).min()) < GRAD_FLOOR:
            return False
    return True


def _randomize_ln(ln, rng: np.random.Generator) -> None:
    # with an identity affine, a normalized row keeps norm sqrt(d) and a
    # sum-of-squares loss goes flat; perturbing gamma/beta restores
    # informative gradients through the whole stack
    ln.gamma[:] = 1.0 + 0.2 * rng.normal(size=ln.gamma.size)
    ln.beta[:] = 0.2 * rng.normal(size=ln.beta.size)


def _ffn_ok(pre: np.ndarray) -> bool:
    # margin, and every hidden unit firing for at least one token: a
    # fully dead unit has an exactly-zero analytic gradient, which the
    # relative-error denominator floor turns into pure noise
    if float(np.abs(pre).min()) <= FFN_MARGIN:
        return False
    return bool(np.all((pre > 0.0).any(axis=0)))


def _build_softmax() -> CheckDef:
    rng = np.random.default_rng(11)
    point = {"x": rng.normal(0.0, 1.0, (5, 7))}

    def lag(p):
        y = ops.softmax_rows(p["x"])
        return _sq_loss(y), {"x": ops.softmax_rows_vjp(y, y)}

    return CheckDef(point, lag, None)


def _build_layer_norm() -> CheckDef:
    rng = np.random.default_rng(12)
    point = {
        "x": rng.normal(0.0, 1.0, (4, 6)),
        "gamma": 1.0 + 0.2 * rng.normal(size=6),
        "beta": 0.2 * rng.normal(size=6),
    }

    def lag(p):
        y, cache = ops.layer_norm_fwd(p["x"], p["gamma"], p["beta"])
        dx, dgamma, dbeta = ops.layer_norm_vjp(cache, y)
        return _sq_loss(y), {"x": dx, "gamma": dgamma, "beta": dbeta}

    return CheckDef(point, lag, None)


def _build_attention() -> CheckDef:
    rng = np.random.default_rng(13)
    ap = ops.attention_params(rng, 8, 2, biases=True, scale=0.2)
    point = {
        "q_in": rng.normal(size=(3, 8)),
        "k_in": rng.normal(size=(4, 8)),
        "v_in": rng.normal(size=(4, 8)),
    }
    names = ("w_q", "w_k", "w_v", "w_o", "b_q", "b_k", "b_v", "b_o")
    for k in names:
        point[k] = getattr(ap, k)

    def lag(p, _ap=ap):
        out, cache = ops.mha_fwd(p["q_in"], p["k_in"], p["v_in"], _ap)
        dq, dk, dv, grads = ops.mha_vjp(cache, out)
        grads.update({"q_in": dq, "k_in": dk, "v_in": dv})
        return _sq_loss(out), grads

    return CheckDef(point, lag, None)


def _build_ffn() -> CheckDef:
    for seed in range(_SEED_TRIES):
        rng = np.random.default_rng(140 + seed)
        fp = ops.ffn_params(rng, 6, 9, 4, scale=0.3)
        fp.b1 = fp.b1 + 0.3
        x = rng.normal(size=(3, 6))
        out, cache = ops.ffn_fwd(x, fp)
        pre = cache[1]
        if not _ffn_ok(pre) or not np.any(pre < 0.0):
            continue
        point = {"x": x, "w1": fp.w1, "b1": fp.b1, "w2": fp.w2, "b2": fp.b2}

        def lag(p, _fp=fp):
            o, c = ops.ffn_fwd(p["x"], _fp)
            dx, grads = ops.ffn_vjp(c, o)
            grads["x"] = dx
            return _sq_loss(o), grads

        if _grads_resolvable(lag, point):
            return CheckDef(point, lag, None)
    raise RuntimeError("no kink-safe point found for the ffn check")


def _build_temporal() -> CheckDef:
    pos = pfm.positional_encoding(2, 2, 8)
    for seed in range(_SEED_TRIES):
        rng = np.random.default_rng(1500 + seed)
        blk = pfm.block_params(rng, 8, 2, 12)
        # init-scale weights leave some gradients near the finite-difference
        # noise floor; widening them keeps every coordinate comparable
        for name in ("w_q", "w_k", "w_v", "w_o"):
            setattr(blk.attn, name, getattr(blk.attn, name) * 10.0)
        blk.ffn.w1 *= 10.0
        blk.ffn.b1 += 0.2
        _randomize_ln(blk.ln1, rng)
        _randomize_ln(blk.ln2, rng)
        xs = {k: rng.normal(size=(4, 8)) for k in ("x_t", "x_prev", "x_hm")}
        out, cache = pfm.temporal_fusion(xs["x_t"], xs["x_prev"], xs["x_hm"],
                                         pos, blk)
        pre = cache[2][1]
        if not _ffn_ok(pre) or not np.any(pre < 0.0):
            continue
        point = dict(xs)
        pfm._flat_block(point, "", blk)

        def lag(p, _blk=blk, _xs=xs):
            o, c = pfm.temporal_fusion(_xs["x_t"], _xs["x_prev"], _xs["x_hm"],
                                       pos, _blk)
            dx_t, dx_prev, dx_hm, grads = pfm.temporal_fusion_vjp(c, o)
            grads.update({"x_t": dx_t, "x_prev": dx_prev, "x_hm": dx_hm})
            return _sq_loss(o), grads

        if _grads_resolvable(lag, point):
            return CheckDef(point, lag, None)
    raise RuntimeError("no kink-safe point found for the temporal check")


def _build_multimodal(variant: str) -> CheckDef:
    d, heads = 8, 2
    n_branches = len(pfm._BRIDGE_INDICES[variant])
    for seed in range(_SEED_TRIES):
        rng = np.random.default_rng(1800 + seed)
        bridge = tuple(ops.attention_params(rng, d, heads, scale=0.2)
                       for _ in range(4))
        fuse_ffn = ops.ffn_params(rng, n_branches * d, 12, d, scale=0.1)
        fuse_ffn.w1 *= 5.0
        fuse_ffn.b1 = fuse_ffn.b1 + 0.15
        fuse_ln = ops.ln_params(d)
        _randomize_ln(fuse_ln, rng)
        xv = rng.normal(size=(3, d))
        xir = rng.normal(size=(3, d))
        out, cache = pfm.multimodal_fusion(xv, xir, bridge, fuse_ffn,
                                           fuse_ln, variant)
        pre = cache[3][1]
        if not _ffn_ok(pre) or not np.any(pre < 0.0):
            continue
        probe = pfm.multimodal_fusion_vjp(cache, out)[2]
        point = {"xv": xv, "xir": xir}
        flat: dict[str, np.ndarray] = {}
        for i, ap in enumerate(bridge):
            pfm._flat_attention(flat, f"bridge.{i}", ap)
        for k in ("w1", "b1", "w2", "b2"):
            flat[f"fuse_ffn.{k}"] = getattr(fuse_ffn, k)
        flat["fuse_ln.gamma"] = fuse_ln.gamma
        flat["fuse_ln.beta"] = fuse_ln.beta
        point.update({k: v for k, v in flat.items() if k in probe})

        def lag(p, _b=bridge, _ffn=fuse_ffn, _ln=fuse_ln, _xv=xv, _xir=xir):
            o, c = pfm.multimodal_fusion(_xv, _xir, _b, _ffn, _ln, variant)
            dxv, dxir, grads = pfm.multimodal_fusion_vjp(c, o)
            grads.update({"xv": dxv, "xir": dxir})
            return _sq_loss(o), grads

        if _grads_resolvable(lag, point):
            return CheckDef(point, lag, None)
    raise RuntimeError(f"no kink-safe point found for multimodal {variant}")


def _pfm_pre_activations(cache):
    _, embeds, (cache_v, cache_ir, cache_m), _ = cache
    stems = [ce[3] for ce in embeds if ce is not None]
    ffns = [ct[2][1] for ct in (cache_v, cache_ir) if ct is not None]
    if cache_m is not None:
        ffns.append(cache_m[3][1])
    return stems, ffns


def _build_pfm(variant: str) -> CheckDef:
    boxes = [Box(5.0, 6.0, 11.0, 9.0), Box(17.0, 15.0, 8.0, 12.0)]
    image_keys = ("vis_t", "vis_prev", "ir_t", "ir_prev")
    for seed in range(_SEED_TRIES):
        rng = np.random.default_rng(2500 + seed)
        params = pfm.init_pfm_params(seed=5000 + seed, d=16, n_heads=2,
                                     stem_channels=2, hidden=32,
                                     variant=variant)
        # Widen the activation spread so seed screening has headroom.  The
        # stem bias lift parks every conv pre-activation on the positive
        # side: with ~10k pixels per embed a sign change lands within any
        # margin almost surely, and a linear-regime ReLU is just as good for
        # validating the chain rule.
        for stem in (params.stem, params.hm_stem):
            stem.conv *= 5.0
            stem.bias += 1.0
        for blk in (params.temporal_v, params.temporal_ir):
            for w in (blk.attn.w_q, blk.attn.w_k, blk.attn.w_v, blk.attn.w_o):
                w *= 10.0
            blk.ffn.w1 *= 5.0
            blk.ffn.b1 += 0.7
            _randomize_ln(blk.ln1, rng)
            _randomize_ln(blk.ln2, rng)
        for att in params.bridge:
            for w in (att.w_q, att.w_k, att.w_v, att.w_o):
                w *= 10.0
        params.fuse_ffn.w1 *= 5.0
        params.fuse_ffn.b1 += 0.7
        _randomize_ln(params.fuse_ln, rng)
        images = {k: rng.uniform(0.0, 1.0, (1, 32, 32)) for k in image_keys}
        out, cache = pfm.pfm_forward(images["vis_t"], images["vis_prev"],
                                     images["ir_t"], images["ir_prev"],
                                     boxes, params)
        stems, ffns = _pfm_pre_activations(cache)
        if any(float(np.abs(y).min()) <= STEM_MARGIN for y in stems):
            continue
        # Margin only: a hidden unit dead across all tokens zeroes a few
        # analytic grads, and _grads_resolvable already rejects those when
        # a probed coordinate is affected.
        if any(float(np.abs(pre).min()) <= FFN_MARGIN for pre in ffns):
            continue
        probe = pfm.pfm_backward(cache, out)
        point = {k: v for k, v in pfm.flatten_params(params).items()
                 if k in probe}
        point.update({k: images[k] for k in image_keys if k in probe})

        def lag(p, _params=params, _imgs=images):
            o, c = pfm.pfm_forward(_imgs["vis_t"], _imgs["vis_prev"],
                                   _imgs["ir_t"], _imgs["ir_prev"],
                                   boxes, _params)
            return _sq_loss(o), pfm.pfm_backward(c, o)

        if _grads_resolvable(lag, point, PFM_COORDS_PER_ARRAY):
            return CheckDef(point, lag, PFM_COORDS_PER_ARRAY)
    raise RuntimeError(f"no kink-safe init found for pfm variant {variant}")


CHECKS: dict[str, Callable[[], CheckDef]] = {
    "softmax": _build_softmax,
    "layer_norm": _build_layer_norm,
    "attention": _build_attention,
    "ffn": _build_ffn,
    "temporal": _build_temporal,
    "multimodal_both": lambda: _build_multimodal("mff_both"),
    "multimodal_uni": lambda: _build_multimodal("mff_uni"),
    "multimodal_mul": lambda: _build_multimodal("mff_mul"),
    "pfm_full": lambda: _build_pfm("full"),
    "pfm_tff_only": lambda: _build_pfm("tff_only"),
    "pfm_mff_uni": lambda: _build_pfm("mff_uni"),
    "pfm_mff_mul": lambda: _build_pfm("mff_mul"),
    "pfm_mff_both": lambda: _build_pfm("mff_both"),
}


def run_check(name: str, h: float = DEFAULT_STEP) -> GradReport:
    if name not in CHECKS:
        raise KeyError(f"unknown check {name!r}; have {sorted(CHECKS)}")
    c = CHECKS[name]()
    return grad_check(c.loss_and_grads, c.point, h=h,
                      max_per_array=c.max_per_array)


def run_all(names=None, h: float = DEFAULT_STEP) -> dict[str, GradReport]:
    names = list(CHECKS) if names is None else list(names)
    return {n: run_check(n, h=h) for n in names}
