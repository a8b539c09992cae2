"""Token-matrix primitives: softmax, layer norm, cross-attention, FFN.

Everything is float64 numpy on (tokens, features) matrices. Each op has a
forward returning (output, cache) and a vjp that maps the upstream
gradient back onto inputs and parameters; the test suite checks every
backward against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN_EPS = 1e-5


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with the usual row-max subtraction."""
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_vjp(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=1, keepdims=True))


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = LN_EPS) -> np.ndarray:
    out, _ = layer_norm_fwd(x, gamma, beta, eps)
    return out


def layer_norm_fwd(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                   eps: float = LN_EPS):
    """Per-row normalization with biased variance and eps inside the sqrt."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma + beta
    return out, (xhat, inv, gamma)


def layer_norm_vjp(cache, dout: np.ndarray):
    xhat, inv, gamma = cache
    d = xhat.shape[1]
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    dx = inv * (dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=1, keepdims=True) / d)
    return dx, dgamma, dbeta


@dataclass
class AttentionParams:
    """Projection weights for multi-head cross-attention.

    Weights are (d, d) and right-multiply token rows. Biases are optional
    and disabled by default.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    n_heads: int
    b_q: np.ndarray | None = None
    b_k: np.ndarray | None = None
    b_v: np.ndarray | None = None
    b_o: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.w_q.shape[0]


def attention_params(rng: np.random.Generator, d: int, n_heads: int,
                     biases: bool = False, scale: float = 0.02) -> AttentionParams:
    if d % n_heads != 0:
        raise ValueError(f"d={d} not divisible by n_heads={n_heads}")
    w = lambda: rng.normal(0.0, scale, (d, d))
    b = (lambda: rng.normal(0.0, scale, d)) if biases else (lambda: None)
    return AttentionParams(w_q=w(), w_k=w(), w_v=w(), w_o=w(),
                           n_heads=n_heads, b_q=b(), b_k=b(), b_v=b(), b_o=b())


def multi_head_cross_attention(q_in: np.ndarray, k_in: np.ndarray,
                               v_in: np.ndarray, p: AttentionParams) -> np.ndarray:
    out, _ = mha_fwd(q_in, k_in, v_in, p)
    return out


def mha_fwd(q_in: np.ndarray, k_in: np.ndarray, v_in: np.ndarray,
            p: AttentionParams):
    """Cross-attention: queries from q_in, keys/values from k_in/v_in.

    Per head: softmax(Q K^T / sqrt(d_head)) V; heads are concatenated and
    mixed by the single post-concat output projection.
    """
    d = p.d
    if d % p.n_heads != 0:
        raise ValueError(f"d={d} not divisible by n_heads={p.n_heads}")
    if k_in.shape[0] != v_in.shape[0]:
        raise ValueError("keys and values must have the same token count")
    dh = d // p.n_heads
    q = q_in @ p.w_q + (p.b_q if p.b_q is not None else 0.0)
    k = k_in @ p.w_k + (p.b_k if p.b_k is not None else 0.0)
    v = v_in @ p.w_v + (p.b_v if p.b_v is not None else 0.0)
    attn = []
    outs = []
    for hd in range(p.n_heads):
        sl = slice(hd * dh, (hd + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
        a = softmax_rows(scores)
        attn.append(a)
        outs.append(a @ v[:, sl])
    o = np.concatenate(outs, axis=1)
    out = o @ p.w_o + (p.b_o if p.b_o is not None else 0.0)
    return out, (q_in, k_in, v_in, q, k, v, attn, o, p)


def mha_vjp(cache, dout: np.ndarray):
    """Returns (dq_in, dk_in, dv_in, grads) with grads keyed w_q..b_o."""
    q_in, k_in, v_in, q, k, v, attn, o, p = cache
    d = p.d
    dh = d // p.n_heads
    grads = {"w_o": o.T @ dout}
    if p.b_o is not None:
        grads["b_o"] = dout.sum(axis=0)
    do = dout @ p.w_o.T
    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    for hd in range(p.n_heads):
        sl = slice(hd * dh, (hd + 1) * dh)
        a = attn[hd]
        do_h = do[:, sl]
        da = do_h @ v[:, sl].T
        dv[:, sl] = a.T @ do_h
        ds = softmax_rows_vjp(a, da) / np.sqrt(dh)
        dq[:, sl] = ds @ k[:, sl]
        dk[:, sl] = ds.T @ q[:, sl]
    grads["w_q"] = q_in.T @ dq
    grads["w_k"] = k_in.T @ dk
    grads["w_v"] = v_in.T @ dv
    if p.b_q is not None:
        grads["b_q"] = dq.sum(axis=0)
        grads["b_k"] = dk.sum(axis=0)
        grads["b_v"] = dv.sum(axis=0)
    return dq @ p.w_q.T, dk @ p.w_k.T, dv @ p.w_v.T, grads


@dataclass
class FfnParams:
    """Two-layer ReLU feed-forward; input and output widths may differ."""

    w1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, d_out)
    b2: np.ndarray


def ffn_params(rng: np.random.Generator, d_in: int, hidden: int, d_out: int,
               scale: float = 0.02) -> FfnParams:
    return FfnParams(
        w1=rng.normal(0.0, scale, (d_in, hidden)),
        b1=rng.normal(0.0, scale, hidden),
        w2=rng.normal(0.0, scale, (hidden, d_out)),
        b2=rng.normal(0.0, scale, d_out),
    )


def ffn(x: np.ndarray, p: FfnParams) -> np.ndarray:
    out, _ = ffn_fwd(x, p)
    return out


def ffn_fwd(x: np.ndarray, p: FfnParams):
    pre = x @ p.w1 + p.b1
    act = np.maximum(pre, 0.0)
    out = act @ p.w2 + p.b2
    return out, (x, pre, act, p)


def ffn_vjp(cache, dout: np.ndarray):
    x, pre, act, p = cache
    grads = {"w2": act.T @ dout, "b2": dout.sum(axis=0)}
    dact = dout @ p.w2.T
    dpre = dact * (pre > 0.0)
    grads["w1"] = x.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    return dpre @ p.w1.T, grads


@dataclass
class LnParams:
    gamma: np.ndarray
    beta: np.ndarray


def ln_params(d: int) -> LnParams:
    return LnParams(gamma=np.ones(d), beta=np.zeros(d))
