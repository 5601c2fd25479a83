"""Additive soft attention over region features and context blending."""
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import Tensor

# Added to the scores of padded regions; finite so gradients stay finite.
_MASK_SCORE = -1e30


@dataclass
class AttentionNet:
    """One-hidden-layer scorer ``u . tanh(r W_r + e W_e + h W_h + v W_v + b)``."""
    w_region: Tensor
    w_word: Tensor
    w_hidden: Tensor
    w_context: Tensor
    bias: Tensor
    score: Tensor  # (Ha, 1)

    @property
    def hidden_size(self):
        return self.bias.shape[0]


def init_attention(rng, feature_size, embed_size, hidden_size, attn_size):
    def w(fan_in, fan_out):
        return nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)))
    return AttentionNet(
        w(feature_size, attn_size), w(embed_size, attn_size), w(hidden_size, attn_size),
        w(feature_size, attn_size), nc.parameter(np.zeros(attn_size)), w(attn_size, 1),
    )


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def attention_scores(net, regions, prev_word_embed, prev_h, prev_v):
    """Unnormalized scores (B, R) for a (B, R, D) batch of region sets."""
    B, R, _ = regions.shape
    query = prev_word_embed @ net.w_word + prev_h @ net.w_hidden + prev_v @ net.w_context + net.bias
    hidden = nc.tanh(regions @ net.w_region + nc.reshape(query, (B, 1, net.hidden_size)))
    return nc.reshape(hidden @ net.score, (B, R))


def attend(net, regions, prev_word_embed, prev_h, prev_v, mask=None):
    """Attention weights over regions.

    ``regions`` is (R, D) with vector histories, or (B, R, D) with (B, .)
    histories.  ``mask`` (B, R) marks real regions when sets are padded.
    """
    regions = _t(regions)
    single = regions.ndim == 2
    if single:
        regions = nc.reshape(regions, (1,) + regions.shape)
        prev_word_embed, prev_h, prev_v = (
            nc.reshape(_t(x), (1, -1)) for x in (prev_word_embed, prev_h, prev_v))
    if regions.shape[1] == 0:
        raise ValueError("attention over an empty region set")
    scores = attention_scores(net, regions, _t(prev_word_embed), _t(prev_h), _t(prev_v))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(scores.shape)
        if not mask.any(axis=1).all():
            raise ValueError("attention over an empty region set")
        if not mask.all():
            scores = scores + np.where(mask, 0.0, _MASK_SCORE)
    p = nc.softmax(scores, axis=-1)
    return nc.reshape(p, (p.shape[1],)) if single else p


def blend(weights, regions):
    """Context vector ``sum_i p_i r_i``; (R,),(R, D) -> (D,) or batched."""
    weights, regions = _t(weights), _t(regions)
    if weights.shape[-1] != regions.shape[-2]:
        raise ValueError(f"{weights.shape[-1]} weights for {regions.shape[-2]} regions")
    if weights.ndim == 1:
        return nc.reshape(nc.reshape(weights, (1, -1)) @ regions, (regions.shape[-1],))
    B, R = weights.shape
    return nc.reshape(nc.reshape(weights, (B, 1, R)) @ regions, (B, regions.shape[-1]))
