"""Toy-scale bidirectional joint spatial-temporal cross-attention between a
panorama feature stream and N perspective feature streams.

Features are (T, tokens, C) arrays.  Attention is computed jointly over all
(frame, token) pairs: a query in frame t may attend keys in every frame, with
the spherical correspondence mask replicated across frame pairs.  Masking is
additive -inf before the softmax, so weights outside the mask are exactly
zero.  Forward and backward passes are written out explicitly; the test
suite checks every parameter gradient against central finite differences.

This module exists to make the masking / encoding / symmetry / gradient
behavior of the attention design executable at desk scale; it makes no
claim about generation quality and contains no pretrained components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Params = dict[str, np.ndarray]


@dataclass
class CrossAttentionConfig:
    """Per-call attention geometry: the boolean correspondence mask
    (query tokens x key tokens) and positional encodings added to the
    query / key token features before projection."""

    mask: np.ndarray
    enc_q: np.ndarray | None = None
    enc_kv: np.ndarray | None = None


class CrossAttention:
    """Multi-head scaled-dot-product cross-attention with mask support.

    Parameters are four (C, C) projections.  ``zero_init_output`` zeroes the
    output projection so the module starts as an exact no-op under residual
    composition.
    """

    def __init__(self, channels: int, heads: int, seed: int = 0,
                 zero_init_output: bool = False):
        if channels % heads != 0:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.head_dim = channels // heads
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(channels)
        self.params: Params = {
            "wq": rng.normal(0.0, scale, (channels, channels)),
            "wk": rng.normal(0.0, scale, (channels, channels)),
            "wv": rng.normal(0.0, scale, (channels, channels)),
            "wo": (np.zeros((channels, channels)) if zero_init_output
                   else rng.normal(0.0, scale, (channels, channels))),
        }

    # -- core ---------------------------------------------------------------

    def _check(self, query: np.ndarray, kv: np.ndarray, cfg: CrossAttentionConfig):
        if query.ndim != 3 or kv.ndim != 3:
            raise ValueError("features must be (frames, tokens, channels)")
        if query.shape[2] != self.channels or kv.shape[2] != self.channels:
            raise ValueError("channel count mismatch with attention parameters")
        if query.shape[0] != kv.shape[0]:
            raise ValueError("query and key/value streams must share the frame count")
        if cfg.mask.shape != (query.shape[1], kv.shape[1]):
            raise ValueError(
                f"mask shape {cfg.mask.shape} does not match token grids "
                f"({query.shape[1]}, {kv.shape[1]})")
        for enc, n in ((cfg.enc_q, query.shape[1]), (cfg.enc_kv, kv.shape[1])):
            if enc is not None and enc.shape != (n, self.channels):
                raise ValueError("positional encoding shape mismatch")

    def _split(self, x: np.ndarray) -> np.ndarray:
        # (M, C) -> (heads, M, head_dim)
        return x.reshape(x.shape[0], self.heads, self.head_dim).transpose(1, 0, 2)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        return x.transpose(1, 0, 2).reshape(x.shape[1], self.channels)

    def attend(self, query: np.ndarray, kv: np.ndarray, cfg: CrossAttentionConfig):
        """Attention update (zero rows where the mask row is empty).

        Returns (update (T, Nq, C), cache for backward).
        """
        self._check(query, kv, cfg)
        t, nq, c = query.shape
        nk = kv.shape[1]
        xq = query.reshape(t * nq, c)
        xk = kv.reshape(t * nk, c)
        xq_pe = xq + np.tile(cfg.enc_q, (t, 1)) if cfg.enc_q is not None else xq
        xk_pe = xk + np.tile(cfg.enc_kv, (t, 1)) if cfg.enc_kv is not None else xk

        q = self._split(xq_pe @ self.params["wq"])
        k = self._split(xk_pe @ self.params["wk"])
        v = self._split(xk @ self.params["wv"])

        mask_full = np.tile(np.asarray(cfg.mask, dtype=bool), (t, t))
        scores = q @ k.transpose(0, 2, 1) / math.sqrt(self.head_dim)
        scores = np.where(mask_full[None], scores, -np.inf)
        row_has_key = mask_full.any(axis=1)
        probs = np.zeros_like(scores)
        if row_has_key.any():
            s = scores[:, row_has_key, :]
            s = s - s.max(axis=2, keepdims=True)
            e = np.exp(s)
            probs[:, row_has_key, :] = e / e.sum(axis=2, keepdims=True)

        out_heads = probs @ v
        out = self._merge(out_heads) @ self.params["wo"]
        cache = dict(xq=xq, xk=xk, xq_pe=xq_pe, xk_pe=xk_pe, q=q, k=k, v=v,
                     probs=probs, out_heads=out_heads, t=t, nq=nq, nk=nk,
                     row_has_key=row_has_key)
        return out.reshape(t, nq, c), cache

    def attend_backward(self, cache: dict, d_out: np.ndarray):
        """Backward of :meth:`attend`.

        Returns (d_query, d_kv, param grads).
        """
        t, nq, nk = cache["t"], cache["nq"], cache["nk"]
        c = self.channels
        d_flat = d_out.reshape(t * nq, c)
        grads: Params = {}
        merged = self._merge(cache["out_heads"])
        grads["wo"] = merged.T @ d_flat
        d_merged = d_flat @ self.params["wo"].T
        d_heads = self._split(d_merged)

        probs, v = cache["probs"], cache["v"]
        d_probs = d_heads @ v.transpose(0, 2, 1)
        d_v = probs.transpose(0, 2, 1) @ d_heads
        d_scores = probs * (d_probs - np.sum(d_probs * probs, axis=2, keepdims=True))
        inv = 1.0 / math.sqrt(self.head_dim)
        d_q = d_scores @ cache["k"] * inv
        d_k = d_scores.transpose(0, 2, 1) @ cache["q"] * inv

        d_q_flat = self._merge(d_q)
        d_k_flat = self._merge(d_k)
        d_v_flat = self._merge(d_v)
        grads["wq"] = cache["xq_pe"].T @ d_q_flat
        grads["wk"] = cache["xk_pe"].T @ d_k_flat
        grads["wv"] = cache["xk"].T @ d_v_flat
        d_xq = d_q_flat @ self.params["wq"].T
        d_xk = d_k_flat @ self.params["wk"].T + d_v_flat @ self.params["wv"].T
        return d_xq.reshape(t, nq, c), d_xk.reshape(t, nk, c), grads

    def cross_attend(self, query: np.ndarray, kv: np.ndarray,
                     cfg: CrossAttentionConfig) -> np.ndarray:
        """Attention output; query rows with an empty mask row pass through
        unchanged (the softmax over an empty key set is undefined)."""
        update, cache = self.attend(query, kv, cfg)
        empty = ~cache["row_has_key"][:query.shape[1]]  # same for every frame
        if empty.any():
            update[:, empty, :] = query[:, empty, :]
        return update


class BidirectionalCrossAttention:
    """Both attention directions applied to the same pre-update features,
    with residual addition.

    The perspective->panorama direction attends over the concatenation of
    all views' tokens (one joint key set); the panorama->perspective
    direction runs per view with shared parameters, so swapping identical
    views leaves the outputs invariant.  Query rows with no corresponding
    keys receive a zero update, which preserves the residual path.
    """

    def __init__(self, channels: int, heads: int, seed: int = 0,
                 zero_init_output: bool = False):
        self.views_to_pano = CrossAttention(channels, heads, seed=seed,
                                            zero_init_output=zero_init_output)
        self.pano_to_views = CrossAttention(channels, heads, seed=seed + 1,
                                            zero_init_output=zero_init_output)

    def bidirectional_step(self, pano: np.ndarray, persps: list[np.ndarray],
                           masks: list[np.ndarray],
                           enc_pano: np.ndarray | None = None,
                           enc_persps: list[np.ndarray] | None = None):
        """One parallel exchange step.

        masks[i] is the (pano tokens x view-i tokens) correspondence mask.
        Returns (pano', [persp_i']).
        """
        n = len(persps)
        if n == 0 or len(masks) != n:
            raise ValueError("need one mask per perspective view")
        if enc_persps is None:
            enc_persps = [None] * n

        kv = np.concatenate(persps, axis=1)
        mask_cat = np.concatenate(masks, axis=1)
        enc_cat = (np.concatenate(enc_persps, axis=0)
                   if enc_persps[0] is not None else None)
        pano_update, _ = self.views_to_pano.attend(
            pano, kv, CrossAttentionConfig(mask=mask_cat, enc_q=enc_pano, enc_kv=enc_cat))
        new_pano = pano + pano_update

        new_persps = []
        for feat, mask, enc in zip(persps, masks, enc_persps):
            update, _ = self.pano_to_views.attend(
                feat, pano, CrossAttentionConfig(mask=mask.T, enc_q=enc, enc_kv=enc_pano))
            new_persps.append(feat + update)
        return new_pano, new_persps


class ToyDenoiser:
    """Minimal two-layer denoiser standing in for a full network: maps a
    noisy latent plus (timestep, conditioning tag) to a predicted noise
    field of the same shape."""

    def __init__(self, channels: int, hidden: int = 16, n_tags: int = 4, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.params: Params = {
            "w1": rng.normal(0.0, 1.0 / math.sqrt(channels), (channels, hidden)),
            "b1": np.zeros(hidden),
            "t_vec": rng.normal(0.0, 0.1, hidden),
            "tags": rng.normal(0.0, 0.1, (n_tags, hidden)),
            "w2": rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, channels)),
            "b2": np.zeros(channels),
        }

    def __call__(self, noisy: np.ndarray, t: float, tag: int) -> np.ndarray:
        p = self.params
        h = np.tanh(noisy @ p["w1"] + p["b1"] + t * p["t_vec"] + p["tags"][tag])
        return h @ p["w2"] + p["b2"]


def generation_loss(pano_pair: tuple[np.ndarray, np.ndarray],
                    persp_pairs: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Total denoising objective: panorama MSE plus the mean of the N
    per-view MSEs.  Each pair is (true noise, predicted noise)."""
    if len(persp_pairs) == 0:
        raise ValueError("at least one perspective pair is required")
    def mse(pair):
        noise, pred = pair
        if np.shape(noise) != np.shape(pred):
            raise ValueError("noise/prediction shape mismatch")
        return float(np.mean((np.asarray(noise, dtype=np.float64) - pred) ** 2))
    return mse(pano_pair) + sum(mse(p) for p in persp_pairs) / len(persp_pairs)
