"""Progressive token fusion over paired visible/thermal frames.

Stage one enhances each modality's current-frame tokens with its previous
frame (cross-attention, then layer norm, a heatmap residual, and an FFN
block). Stage two bridges the modalities: branches of cross-attention
between each enhanced stream and their sum, concatenated and projected.
Variants select which stages run:

    full      both stages
    tff_only  stage one, then plain addition of the two streams
    mff_uni   stage two only, unimodal queries against the fused sum
    mff_mul   stage two only, fused queries against each modality
    mff_both  stage two only, all four branches

Forward passes return (output, cache); the matching backward maps the
upstream gradient onto every used parameter and input, and is verified
against central differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assignment import Box
from .ops import (
    AttentionParams,
    FfnParams,
    LnParams,
    attention_params,
    ffn_fwd,
    ffn_params,
    ffn_vjp,
    layer_norm_fwd,
    layer_norm_vjp,
    ln_params,
    mha_fwd,
    mha_vjp,
)

VARIANTS = ("full", "tff_only", "mff_uni", "mff_mul", "mff_both")

PATCH = 16
STEM_KERNEL = 7


# ---------------------------------------------------------------------------
# heatmap

def render_heatmap(boxes, height: int, width: int) -> np.ndarray:
    """Gaussian splat per box center, combined pointwise by max.

    Sigma is max(1, min(w, h) / 6); centers are clamped into the image.
    Values are in [0, 1]; no boxes yields the zero map.
    """
    out = np.zeros((height, width))
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    for b in boxes:
        if b.w <= 0 or b.h <= 0:
            raise ValueError(f"box with non-positive size: {b}")
        cx = min(max(b.cx, 0.0), width - 1.0)
        cy = min(max(b.cy, 0.0), height - 1.0)
        sigma = max(1.0, min(b.w, b.h) / 6.0)
        g = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))
        np.maximum(out, g, out=out)
    return out


# ---------------------------------------------------------------------------
# embedding

@dataclass
class StemParams:
    """7x7 same-size convolution plus per-channel affine (the inference
    form of a normalization layer) feeding a ReLU."""

    conv: np.ndarray  # (c_out, c_in, 7, 7)
    scale: np.ndarray
    bias: np.ndarray


@dataclass
class PatchParams:
    """Non-overlapping 16x16 patch projection; weight rows are the patch
    pixels flattened channel-major, row-major within each channel."""

    w: np.ndarray  # (c_in * 256, d)
    b: np.ndarray


def stem_params(rng: np.random.Generator, c_in: int, c_out: int,
                scale: float = 0.02) -> StemParams:
    # the affine bias sits well above zero so ReLU pre-activations stay
    # clear of the kink even on exactly-zero heatmap regions
    return StemParams(
        conv=rng.normal(0.0, scale, (c_out, c_in, STEM_KERNEL, STEM_KERNEL)),
        scale=np.ones(c_out) + rng.normal(0.0, scale, c_out),
        bias=np.full(c_out, 0.25) + rng.normal(0.0, scale, c_out),
    )


def patch_params(rng: np.random.Generator, c_in: int, d: int,
                 scale: float = 0.02) -> PatchParams:
    return PatchParams(w=rng.normal(0.0, scale, (c_in * PATCH * PATCH, d)),
                       b=rng.normal(0.0, scale, d))


def _conv7_fwd(x: np.ndarray, w: np.ndarray):
    c, h, wd = x.shape
    f = w.shape[0]
    pad = STEM_KERNEL // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((c, STEM_KERNEL, STEM_KERNEL, h, wd))
    for di in range(STEM_KERNEL):
        for dj in range(STEM_KERNEL):
            cols[:, di, dj] = xp[:, di:di + h, dj:dj + wd]
    cols2 = cols.reshape(c * STEM_KERNEL * STEM_KERNEL, h * wd)
    out = (w.reshape(f, -1) @ cols2).reshape(f, h, wd)
    return out, cols2


def _conv7_vjp(x_shape, w: np.ndarray, cols2: np.ndarray, dout: np.ndarray):
    c, h, wd = x_shape
    f = w.shape[0]
    pad = STEM_KERNEL // 2
    dflat = dout.reshape(f, h * wd)
    dw = (dflat @ cols2.T).reshape(w.shape)
    dcols = (w.reshape(f, -1).T @ dflat).reshape(
        c, STEM_KERNEL, STEM_KERNEL, h, wd)
    dxp = np.zeros((c, h + 2 * pad, wd + 2 * pad))
    for di in range(STEM_KERNEL):
        for dj in range(STEM_KERNEL):
            dxp[:, di:di + h, dj:dj + wd] += dcols[:, di, dj]
    return dxp[:, pad:pad + h, pad:pad + wd], dw


def _patchify(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    gh, gw = h // PATCH, w // PATCH
    return (x.reshape(c, gh, PATCH, gw, PATCH)
            .transpose(1, 3, 0, 2, 4)
            .reshape(gh * gw, c * PATCH * PATCH))


def _unpatchify(p: np.ndarray, shape) -> np.ndarray:
    c, h, w = shape
    gh, gw = h // PATCH, w // PATCH
    return (p.reshape(gh, gw, c, PATCH, PATCH)
            .transpose(2, 0, 3, 1, 4)
            .reshape(c, h, w))


def embed_tokens(image: np.ndarray, stem: StemParams, patch: PatchParams):
    """(c, H, W) image to ((H/16)*(W/16), d) tokens, row-major over the grid.

    Returns (tokens, cache); H and W must be divisible by 16 and the
    channel count must match the stem.
    """
    c, h, w = image.shape
    if h % PATCH or w % PATCH:
        raise ValueError(f"image size {h}x{w} not divisible by {PATCH}")
    if c != stem.conv.shape[1]:
        raise ValueError(f"{c} channels, stem expects {stem.conv.shape[1]}")
    y1, cols2 = _conv7_fwd(image, stem.conv)
    y2 = y1 * stem.scale[:, None, None] + stem.bias[:, None, None]
    y3 = np.maximum(y2, 0.0)
    p = _patchify(y3)
    tokens = p @ patch.w + patch.b
    return tokens, (image.shape, cols2, y1, y2, p, stem, patch)


def embed_tokens_vjp(cache, dtokens: np.ndarray):
    """Returns (dimage, grads) with grads keyed conv/scale/bias/w/b."""
    x_shape, cols2, y1, y2, p, stem, patch = cache
    grads = {"w": p.T @ dtokens, "b": dtokens.sum(axis=0)}
    dy3 = _unpatchify(dtokens @ patch.w.T, (stem.conv.shape[0],) + x_shape[1:])
    dy2 = dy3 * (y2 > 0.0)
    grads["scale"] = (dy2 * y1).sum(axis=(1, 2))
    grads["bias"] = dy2.sum(axis=(1, 2))
    dy1 = dy2 * stem.scale[:, None, None]
    dimage, dconv = _conv7_vjp(x_shape, stem.conv, cols2, dy1)
    grads["conv"] = dconv
    return dimage, grads


def positional_encoding(grid_h: int, grid_w: int, d: int) -> np.ndarray:
    """2-D sinusoidal encoding, (grid_h*grid_w, d), parameter free.

    The first d/2 channels encode the row index, the last d/2 the column,
    each as alternating sine/cosine over a geometric frequency ladder; the
    (0, 0) token gets 0 on sine channels and 1 on cosine channels.
    """
    if d % 4:
        raise ValueError(f"d={d} must be divisible by 4")
    half = d // 2
    freqs = 1.0 / (10000.0 ** (np.arange(half // 2) * 2.0 / half))
    rows = np.repeat(np.arange(grid_h, dtype=np.float64), grid_w)
    cols = np.tile(np.arange(grid_w, dtype=np.float64), grid_h)
    pe = np.empty((grid_h * grid_w, d))
    pe[:, 0:half:2] = np.sin(rows[:, None] * freqs)
    pe[:, 1:half:2] = np.cos(rows[:, None] * freqs)
    pe[:, half::2] = np.sin(cols[:, None] * freqs)
    pe[:, half + 1::2] = np.cos(cols[:, None] * freqs)
    return pe


# ---------------------------------------------------------------------------
# fusion stages

@dataclass
class BlockParams:
    """One temporal-enhancement block: attention, two norms, one FFN."""

    attn: AttentionParams
    ln1: LnParams
    ffn: FfnParams
    ln2: LnParams


def block_params(rng: np.random.Generator, d: int, n_heads: int,
                 hidden: int) -> BlockParams:
    return BlockParams(attn=attention_params(rng, d, n_heads),
                       ln1=ln_params(d),
                       ffn=ffn_params(rng, d, hidden, d),
                       ln2=ln_params(d))


def temporal_fusion(x_t: np.ndarray, x_prev: np.ndarray, x_hm: np.ndarray,
                    pos: np.ndarray, block: BlockParams):
    """Enhance current-frame tokens with the previous frame and heatmap.

    a    = CrossAttention(x_t + pos, x_prev + pos, x_prev)
    xbar = LN(x_t + a) + x_hm
    out  = LN(xbar + FFN(xbar))
    """
    a, c_attn = mha_fwd(x_t + pos, x_prev + pos, x_prev, block.attn)
    l1, c_ln1 = layer_norm_fwd(x_t + a, block.ln1.gamma, block.ln1.beta)
    xbar = l1 + x_hm
    f, c_ffn = ffn_fwd(xbar, block.ffn)
    out, c_ln2 = layer_norm_fwd(xbar + f, block.ln2.gamma, block.ln2.beta)
    return out, (c_attn, c_ln1, c_ffn, c_ln2)


def temporal_fusion_vjp(cache, dout: np.ndarray):
    """Returns (dx_t, dx_prev, dx_hm, grads) with attn./ln1./ffn./ln2. keys."""
    c_attn, c_ln1, c_ffn, c_ln2 = cache
    grads = {}
    ds2, dg2, db2 = layer_norm_vjp(c_ln2, dout)
    grads["ln2.gamma"] = dg2
    grads["ln2.beta"] = db2
    dxbar = ds2.copy()
    dffn_in, g_ffn = ffn_vjp(c_ffn, ds2)
    dxbar += dffn_in
    for k, v in g_ffn.items():
        grads[f"ffn.{k}"] = v
    dx_hm = dxbar
    ds1, dg1, db1 = layer_norm_vjp(c_ln1, dxbar)
    grads["ln1.gamma"] = dg1
    grads["ln1.beta"] = db1
    dq, dk, dv, g_attn = mha_vjp(c_attn, ds1)
    for k, v in g_attn.items():
        grads[f"attn.{k}"] = v
    dx_t = ds1 + dq
    dx_prev = dk + dv
    return dx_t, dx_prev, dx_hm, grads


_BRIDGE_INDICES = {"full": (0, 1, 2, 3), "mff_both": (0, 1, 2, 3),
                   "mff_uni": (0, 1), "mff_mul": (2, 3)}


def _bridge_layout(variant: str, xv, xir, xf):
    # branch k: (query, key/value source); 0,1 enhance the unimodal
    # streams with the fused sum, 2,3 enhance the sum with each stream
    by_index = {0: (xv, xf), 1: (xir, xf), 2: (xf, xv), 3: (xf, xir)}
    return [(k, *by_index[k]) for k in _BRIDGE_INDICES[variant]]


def multimodal_fusion(xv: np.ndarray, xir: np.ndarray,
                      bridge, fuse_ffn: FfnParams, fuse_ln: LnParams,
                      variant: str = "full"):
    """Bridge the two enhanced streams through their sum.

    Branches of cross-attention (no positional encoding at this stage) are
    concatenated feature-wise, pushed through the fusing FFN, and layer
    normalized. full/mff_both use all four branches (width 4d), mff_uni
    the first two, mff_mul the last two (width 2d).
    """
    if variant not in _BRIDGE_INDICES:
        raise ValueError(f"variant {variant!r} has no multimodal stage")
    xf = xv + xir
    caches = []
    outs = []
    for k, q_in, kv in _bridge_layout(variant, xv, xir, xf):
        o, c = mha_fwd(q_in, kv, kv, bridge[k])
        outs.append(o)
        caches.append((k, c))
    cat = np.concatenate(outs, axis=1)
    g, c_ffn = ffn_fwd(cat, fuse_ffn)
    out, c_ln = layer_norm_fwd(g, fuse_ln.gamma, fuse_ln.beta)
    return out, (variant, xv.shape[1], caches, c_ffn, c_ln)


def multimodal_fusion_vjp(cache, dout: np.ndarray):
    """Returns (dxv, dxir, grads) with bridge.k./fuse_ffn./fuse_ln. keys."""
    variant, d, caches, c_ffn, c_ln = cache
    grads = {}
    dg, dgamma, dbeta = layer_norm_vjp(c_ln, dout)
    grads["fuse_ln.gamma"] = dgamma
    grads["fuse_ln.beta"] = dbeta
    dcat, g_ffn = ffn_vjp(c_ffn, dg)
    for k, v in g_ffn.items():
        grads[f"fuse_ffn.{k}"] = v
    dxv = np.zeros_like(dout[:, :d])
    dxir = np.zeros_like(dxv)
    dxf = np.zeros_like(dxv)
    for col, (k, c) in enumerate(caches):
        dq, dk, dv, g = mha_vjp(c, dcat[:, col * d:(col + 1) * d])
        for name, v in g.items():
            grads[f"bridge.{k}.{name}"] = v
        dkv = dk + dv
        if k == 0:
            dxv += dq
            dxf += dkv
        elif k == 1:
            dxir += dq
            dxf += dkv
        elif k == 2:
            dxf += dq
            dxv += dkv
        else:
            dxf += dq
            dxir += dkv
    dxv += dxf
    dxir += dxf
    return dxv, dxir, grads


# ---------------------------------------------------------------------------
# full module

@dataclass
class PfmParams:
    """Every learnable piece of the fusion module plus the variant switch.

    The image stem/patch projection is shared by all four camera frames;
    the single-channel heatmap has its own. The fusing FFN input width
    follows the variant (4d for full/mff_both, 2d for mff_uni/mff_mul,
    d for tff_only where it is kept only for shape stability).
    """

    variant: str
    stem: StemParams
    patch: PatchParams
    hm_stem: StemParams
    hm_patch: PatchParams
    temporal_v: BlockParams
    temporal_ir: BlockParams
    bridge: tuple[AttentionParams, AttentionParams, AttentionParams, AttentionParams]
    fuse_ffn: FfnParams
    fuse_ln: LnParams

    @property
    def d(self) -> int:
        return self.patch.w.shape[1]

    @property
    def n_heads(self) -> int:
        return self.temporal_v.attn.n_heads


_FUSE_WIDTH = {"full": 4, "mff_both": 4, "mff_uni": 2, "mff_mul": 2, "tff_only": 1}


def init_pfm_params(seed: int, d: int = 64, n_heads: int = 4,
                    stem_channels: int = 8, in_channels: int = 1,
                    hidden: int | None = None,
                    variant: str = "full") -> PfmParams:
    """Seeded initialization at toy scale (defaults d=64, 4 heads)."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if d % 4:
        raise ValueError("d must be divisible by 4 for the positional encoding")
    rng = np.random.default_rng(seed)
    hidden = hidden if hidden is not None else 2 * d
    return PfmParams(
        variant=variant,
        stem=stem_params(rng, in_channels, stem_channels),
        patch=patch_params(rng, stem_channels, d),
        hm_stem=stem_params(rng, 1, stem_channels),
        hm_patch=patch_params(rng, stem_channels, d),
        temporal_v=block_params(rng, d, n_heads, hidden),
        temporal_ir=block_params(rng, d, n_heads, hidden),
        bridge=tuple(attention_params(rng, d, n_heads) for _ in range(4)),
        fuse_ffn=ffn_params(rng, _FUSE_WIDTH[variant] * d, hidden, d),
        fuse_ln=ln_params(d),
    )


def _key(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def _flat_attention(out: dict, prefix: str, ap: AttentionParams) -> None:
    for k in ("w_q", "w_k", "w_v", "w_o", "b_q", "b_k", "b_v", "b_o"):
        v = getattr(ap, k)
        if v is not None:
            out[_key(prefix, k)] = v


def _flat_block(out: dict, prefix: str, blk: BlockParams) -> None:
    _flat_attention(out, _key(prefix, "attn"), blk.attn)
    out[_key(prefix, "ln1.gamma")] = blk.ln1.gamma
    out[_key(prefix, "ln1.beta")] = blk.ln1.beta
    for k in ("w1", "b1", "w2", "b2"):
        out[_key(prefix, f"ffn.{k}")] = getattr(blk.ffn, k)
    out[_key(prefix, "ln2.gamma")] = blk.ln2.gamma
    out[_key(prefix, "ln2.beta")] = blk.ln2.beta


def flatten_params(p: PfmParams) -> dict[str, np.ndarray]:
    """Dotted-name view of every array in ``p`` (the arrays themselves,
    not copies). Key names match the gradient dict of pfm_backward."""
    out: dict[str, np.ndarray] = {}
    for prefix, stem in (("stem", p.stem), ("hm_stem", p.hm_stem)):
        out[f"{prefix}.conv"] = stem.conv
        out[f"{prefix}.scale"] = stem.scale
        out[f"{prefix}.bias"] = stem.bias
    for prefix, patch in (("patch", p.patch), ("hm_patch", p.hm_patch)):
        out[f"{prefix}.w"] = patch.w
        out[f"{prefix}.b"] = patch.b
    _flat_block(out, "temporal_v", p.temporal_v)
    _flat_block(out, "temporal_ir", p.temporal_ir)
    for i, ap in enumerate(p.bridge):
        _flat_attention(out, f"bridge.{i}", ap)
    for k in ("w1", "b1", "w2", "b2"):
        out[f"fuse_ffn.{k}"] = getattr(p.fuse_ffn, k)
    out["fuse_ln.gamma"] = p.fuse_ln.gamma
    out["fuse_ln.beta"] = p.fuse_ln.beta
    return out


def _unflat_attention(flat: dict, prefix: str, n_heads: int) -> AttentionParams:
    def get(name, required=True):
        key = _key(prefix, name)
        if key not in flat:
            if required:
                raise KeyError(f"missing parameter {key!r}")
            return None
        return np.asarray(flat[key], dtype=np.float64)

    return AttentionParams(
        w_q=get("w_q"), w_k=get("w_k"), w_v=get("w_v"), w_o=get("w_o"),
        n_heads=n_heads,
        b_q=get("b_q", required=False), b_k=get("b_k", required=False),
        b_v=get("b_v", required=False), b_o=get("b_o", required=False))


def unflatten_params(flat: dict[str, np.ndarray], variant: str,
                     n_heads: int) -> PfmParams:
    """Inverse of flatten_params; expects the complete key set."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")

    def arr(key):
        if key not in flat:
            raise KeyError(f"missing parameter {key!r}")
        return np.asarray(flat[key], dtype=np.float64)

    def stem(prefix):
        return StemParams(conv=arr(f"{prefix}.conv"), scale=arr(f"{prefix}.scale"),
                          bias=arr(f"{prefix}.bias"))

    def patch(prefix):
        return PatchParams(w=arr(f"{prefix}.w"), b=arr(f"{prefix}.b"))

    def ffn_p(prefix):
        return FfnParams(w1=arr(f"{prefix}.w1"), b1=arr(f"{prefix}.b1"),
                         w2=arr(f"{prefix}.w2"), b2=arr(f"{prefix}.b2"))

    def block(prefix):
        return BlockParams(
            attn=_unflat_attention(flat, f"{prefix}.attn", n_heads),
            ln1=LnParams(gamma=arr(f"{prefix}.ln1.gamma"), beta=arr(f"{prefix}.ln1.beta")),
            ffn=ffn_p(f"{prefix}.ffn"),
            ln2=LnParams(gamma=arr(f"{prefix}.ln2.gamma"), beta=arr(f"{prefix}.ln2.beta")))

    return PfmParams(
        variant=variant,
        stem=stem("stem"), patch=patch("patch"),
        hm_stem=stem("hm_stem"), hm_patch=patch("hm_patch"),
        temporal_v=block("temporal_v"), temporal_ir=block("temporal_ir"),
        bridge=tuple(_unflat_attention(flat, f"bridge.{i}", n_heads)
                     for i in range(4)),
        fuse_ffn=ffn_p("fuse_ffn"),
        fuse_ln=LnParams(gamma=arr("fuse_ln.gamma"), beta=arr("fuse_ln.beta")))


def pfm_forward(vis_t: np.ndarray, vis_prev: np.ndarray, ir_t: np.ndarray,
                ir_prev: np.ndarray, prev_boxes, params: PfmParams):
    """Fuse a visible/thermal frame pair into one token matrix.

    ``prev_boxes`` are the previous frame's object boxes; they drive the
    center heatmap. Returns (out, cache); out is (tokens, d). The cache
    feeds pfm_backward and also carries named intermediates for
    inspection.
    """
    shapes = {a.shape for a in (vis_t, vis_prev, ir_t, ir_prev)}
    if len(shapes) != 1:
        raise ValueError(f"input images disagree on shape: {sorted(shapes)}")
    _, h, w = vis_t.shape
    variant = params.variant
    use_tff = variant in ("full", "tff_only")

    stages: dict[str, np.ndarray] = {}
    tok_vt, c_vt = embed_tokens(vis_t, params.stem, params.patch)
    tok_it, c_it = embed_tokens(ir_t, params.stem, params.patch)
    stages["tokens_vis"] = tok_vt
    stages["tokens_ir"] = tok_it
    c_vp = c_ip = c_hm = None
    cache_v = cache_ir = None
    if use_tff:
        tok_vp, c_vp = embed_tokens(vis_prev, params.stem, params.patch)
        tok_ip, c_ip = embed_tokens(ir_prev, params.stem, params.patch)
        heatmap = render_heatmap(prev_boxes, h, w)[None]
        tok_hm, c_hm = embed_tokens(heatmap, params.hm_stem, params.hm_patch)
        stages["heatmap"] = heatmap[0]
        stages["tokens_heatmap"] = tok_hm
        pos = positional_encoding(h // PATCH, w // PATCH, params.d)
        xv, cache_v = temporal_fusion(tok_vt, tok_vp, tok_hm, pos, params.temporal_v)
        xir, cache_ir = temporal_fusion(tok_it, tok_ip, tok_hm, pos, params.temporal_ir)
    else:
        xv, xir = tok_vt, tok_it
    stages["enhanced_vis"] = xv
    stages["enhanced_ir"] = xir

    cache_m = None
    if variant == "tff_only":
        out = xv + xir
    else:
        out, cache_m = multimodal_fusion(xv, xir, params.bridge,
                                         params.fuse_ffn, params.fuse_ln,
                                         variant)
    stages["fused"] = out
    return out, (variant, (c_vt, c_vp, c_it, c_ip, c_hm),
                 (cache_v, cache_ir, cache_m), stages)


def pfm_backward(cache, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the composed forward for every used parameter and the
    four input images (keys vis_t, vis_prev, ir_t, ir_prev)."""
    variant, embeds, (cache_v, cache_ir, cache_m), _ = cache
    c_vt, c_vp, c_it, c_ip, c_hm = embeds
    use_tff = variant in ("full", "tff_only")
    grads: dict[str, np.ndarray] = {}

    if variant == "tff_only":
        dxv = dout
        dxir = dout.copy()
    else:
        dxv, dxir, g_m = multimodal_fusion_vjp(cache_m, dout)
        grads.update(g_m)

    def add(name, value):
        if name in grads:
            grads[name] = grads[name] + value
        else:
            grads[name] = value

    def add_embed(cache_e, dtok, prefix, image_key):
        dimg, g = embed_tokens_vjp(cache_e, dtok)
        for k, v in g.items():
            key = f"{prefix}.{k}" if k in ("conv", "scale", "bias") else \
                f"{'hm_patch' if prefix == 'hm_stem' else 'patch'}.{k}"
            add(key, v)
        if image_key is not None:
            add(image_key, dimg)

    if use_tff:
        dtok_vt, dtok_vp, dhm_v, g_v = temporal_fusion_vjp(cache_v, dxv)
        for k, v in g_v.items():
            add(f"temporal_v.{k}", v)
        dtok_it, dtok_ip, dhm_ir, g_ir = temporal_fusion_vjp(cache_ir, dxir)
        for k, v in g_ir.items():
            add(f"temporal_ir.{k}", v)
        add_embed(c_vt, dtok_vt, "stem", "vis_t")
        add_embed(c_vp, dtok_vp, "stem", "vis_prev")
        add_embed(c_it, dtok_it, "stem", "ir_t")
        add_embed(c_ip, dtok_ip, "stem", "ir_prev")
        # heatmap tokens feed both modality branches
        add_embed(c_hm, dhm_v + dhm_ir, "hm_stem", None)
    else:
        add_embed(c_vt, dxv, "stem", "vis_t")
        add_embed(c_it, dxir, "stem", "ir_t")
    return grads
