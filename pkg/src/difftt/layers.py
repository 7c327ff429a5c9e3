"""Transformer building blocks on top of the autodiff engine.

Pre-LN blocks with learned positional embeddings. Attention masks are
additive numpy constants (0 for visible, -1e9 for hidden) and carry no
gradient.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore

NEG = -1e9


def pad_attention_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
    """(B, Tk) ids -> additive mask (B, 1, 1, Tk) hiding PAD keys."""
    visible = (ids != pad_id)
    return np.where(visible[:, None, None, :], 0.0, NEG)


def causal_attention_mask(t: int) -> np.ndarray:
    """(1, 1, T, T) additive mask hiding positions above the diagonal."""
    return np.where(np.tril(np.ones((t, t), dtype=bool)), 0.0, NEG)[None, None]


class MultiHeadAttention:
    def __init__(self, store: ParamStore, prefix: str, d_model: int, n_heads: int, group: str):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = store.linear(prefix + ".q", d_model, d_model, group)
        self.wk = store.linear(prefix + ".k", d_model, d_model, group)
        self.wv = store.linear(prefix + ".v", d_model, d_model, group)
        self.wo = store.linear(prefix + ".o", d_model, d_model, group)

    def _split(self, x: Tensor, b: int, t: int) -> Tensor:
        x = ad.reshape(x, (b, t, self.n_heads, self.d_head))
        return ad.transpose(x, (0, 2, 1, 3))

    def __call__(self, q_in: Tensor, kv_in: Tensor, mask: np.ndarray | None) -> Tensor:
        b, tq, _ = q_in.shape
        tk = kv_in.shape[1]
        q = self._split(ad.affine(q_in, self.wq[0].tensor, self.wq[1].tensor), b, tq)
        k = self._split(ad.affine(kv_in, self.wk[0].tensor, self.wk[1].tensor), b, tk)
        v = self._split(ad.affine(kv_in, self.wv[0].tensor, self.wv[1].tensor), b, tk)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                          1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = ad.shift(scores, mask)
        attn = ad.softmax(scores, axis=-1)
        ctx = ad.matmul(attn, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, tq, self.d_model))
        return ad.affine(ctx, self.wo[0].tensor, self.wo[1].tensor)


class FeedForward:
    def __init__(self, store: ParamStore, prefix: str, d_model: int, d_ff: int, group: str):
        self.w1 = store.linear(prefix + ".ff1", d_model, d_ff, group)
        self.w2 = store.linear(prefix + ".ff2", d_ff, d_model, group)

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.gelu(ad.affine(x, self.w1[0].tensor, self.w1[1].tensor))
        return ad.affine(h, self.w2[0].tensor, self.w2[1].tensor)


class EncoderLayer:
    def __init__(self, store: ParamStore, prefix: str, d_model: int, n_heads: int,
                 d_ff: int, group: str):
        self.attn = MultiHeadAttention(store, prefix + ".attn", d_model, n_heads, group)
        self.ffn = FeedForward(store, prefix, d_model, d_ff, group)
        self.ln1 = store.layer_norm(prefix + ".ln1", d_model, group)
        self.ln2 = store.layer_norm(prefix + ".ln2", d_model, group)

    def __call__(self, x: Tensor, mask: np.ndarray | None) -> Tensor:
        h = ad.layer_norm(x, self.ln1[0].tensor, self.ln1[1].tensor)
        x = ad.add(x, self.attn(h, h, mask))
        h = ad.layer_norm(x, self.ln2[0].tensor, self.ln2[1].tensor)
        return ad.add(x, self.ffn(h))


class DecoderLayer:
    def __init__(self, store: ParamStore, prefix: str, d_model: int, n_heads: int,
                 d_ff: int, group: str):
        self.self_attn = MultiHeadAttention(store, prefix + ".self", d_model, n_heads, group)
        self.cross_attn = MultiHeadAttention(store, prefix + ".cross", d_model, n_heads, group)
        self.ffn = FeedForward(store, prefix, d_model, d_ff, group)
        self.ln1 = store.layer_norm(prefix + ".ln1", d_model, group)
        self.ln2 = store.layer_norm(prefix + ".ln2", d_model, group)
        self.ln3 = store.layer_norm(prefix + ".ln3", d_model, group)

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray,
                 cross_mask: np.ndarray | None) -> Tensor:
        h = ad.layer_norm(x, self.ln1[0].tensor, self.ln1[1].tensor)
        x = ad.add(x, self.self_attn(h, h, self_mask))
        h = ad.layer_norm(x, self.ln2[0].tensor, self.ln2[1].tensor)
        x = ad.add(x, self.cross_attn(h, memory, cross_mask))
        h = ad.layer_norm(x, self.ln3[0].tensor, self.ln3[1].tensor)
        return ad.add(x, self.ffn(h))
