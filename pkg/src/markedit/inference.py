"""Fast single-sentence inference.

Mirrors the training forward pass but advances one target position at a
time, caching the last kernel-width-minus-one inputs of every decoder layer
instead of recomputing the whole prefix. Pure numpy on detached parameter
values; safe to use from many threads or processes at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EditorModel, EncoderOutput
from .textpipe import AnnotatedGuess, BOS_ID


def _log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max()
    z = x - m
    return z - np.log(np.exp(z).sum())


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class PathContext:
    """Keys/values of one encoder for one sentence."""

    keys: np.ndarray    # (S, E)
    values: np.ndarray  # (S, E)
    valid: np.ndarray   # (S,) bool


@dataclass(frozen=True)
class DecoderState:
    """Per-layer causal convolution windows; immutable so beam hypotheses
    can share and branch freely."""

    buffers: tuple[np.ndarray, ...]


class NetworkScorer:
    """Scores next-token continuations for one example.

    ``start`` feeds the beginning-of-sentence token and returns the first
    next-token distribution; ``step`` advances by one emitted token.
    """

    def __init__(self, model: EditorModel, src_ids: list[int] | None = None,
                 guess: AnnotatedGuess | None = None,
                 collect_attention: bool = False):
        cfg = model.config
        if cfg.uses_source and src_ids is None:
            raise ValueError(f"{cfg.mode} mode needs a source sentence")
        if not cfg.uses_source and src_ids is not None:
            raise ValueError(f"{cfg.mode} mode does not accept a source sentence")
        if cfg.uses_guess and guess is None:
            raise ValueError(f"{cfg.mode} mode needs an annotated guess")
        self.model = model
        self.config = cfg
        self.collect_attention = collect_attention
        self.vocab_size = cfg.tgt_vocab_size
        self.last_attention: list[dict[str, np.ndarray]] | None = None

        self.source = self._context(
            model.encode_source(None, np.asarray([src_ids]))) if cfg.uses_source else None
        self.guess = self._context(
            model.encode_guess(None, np.asarray([guess.tokens]),
                               np.asarray([guess.markers]))) if cfg.uses_guess else None

        p = model.params
        layers = cfg.decoder_layers
        dtype = model.dtype
        self._layers = []
        h_in = layers[0][0] if layers else cfg.embed_dim
        for i, (h_out, k) in enumerate(layers):
            self._layers.append({
                "k": k, "h_in": h_in, "h_out": h_out,
                "conv": p[f"dec_l{i}_conv_k"].data.reshape(k * h_in, 2 * h_out),
                "conv_b": p[f"dec_l{i}_conv_b"].data,
                "q_w": p[f"dec_l{i}_attnq_w"].data, "q_b": p[f"dec_l{i}_attnq_b"].data,
                "o_w": p[f"dec_l{i}_attno_w"].data, "o_b": p[f"dec_l{i}_attno_b"].data,
                "res_w": p[f"dec_l{i}_res_w"].data if h_in != h_out else None,
            })
            h_in = h_out
        self._dtype = dtype

    @staticmethod
    def _context(enc: EncoderOutput) -> PathContext:
        return PathContext(keys=enc.keys.data[0], values=enc.values.data[0],
                           valid=enc.mask[0])

    def initial_state(self) -> DecoderState:
        bufs = tuple(
            np.zeros((layer["k"] - 1, layer["h_in"]), dtype=self._dtype)
            for layer in self._layers
        )
        return DecoderState(bufs)

    def start(self) -> tuple[DecoderState, np.ndarray]:
        return self.step(self.initial_state(), BOS_ID)

    def step(self, state: DecoderState, token_id: int) -> tuple[DecoderState, np.ndarray]:
        """Advance one position; returns (state, next-token log-probabilities)."""
        p = self.model.params
        emb = p["dec_tok_emb"].data[token_id]
        if self._layers:
            h = emb @ p["dec_in_w"].data + p["dec_in_b"].data
        else:
            h = emb
        new_bufs = []
        attention: list[dict[str, np.ndarray]] = []
        for layer, buf in zip(self._layers, state.buffers):
            window = np.concatenate([buf, h[None, :]], axis=0)
            new_bufs.append(window[1:])
            conv = window.reshape(-1) @ layer["conv"] + layer["conv_b"]
            h_out = layer["h_out"]
            x = conv[:h_out] * _sigmoid(conv[h_out:])
            q = x @ layer["q_w"] + layer["q_b"] + emb
            summaries = []
            step_attn: dict[str, np.ndarray] = {}
            for name, ctx in (("source", self.source), ("guess", self.guess)):
                if ctx is None:
                    continue
                scores = np.where(ctx.valid, ctx.keys @ q, -np.inf)
                e = np.exp(scores - scores.max())
                attn = e / e.sum()
                if self.collect_attention:
                    step_attn[name] = attn
                summaries.append(attn @ ctx.values)
            combined = (0.5 * summaries[0] + 0.5 * summaries[1]
                        if len(summaries) == 2 else summaries[0])
            x = x + combined @ layer["o_w"] + layer["o_b"]
            res = h if layer["res_w"] is None else h @ layer["res_w"]
            h = x + res
            if self.collect_attention:
                attention.append(step_attn)
        out = h @ p["dec_out_w"].data + p["dec_out_b"].data
        logits = out @ p["logits_w"].data + p["logits_b"].data
        self.last_attention = attention if self.collect_attention else None
        return DecoderState(tuple(new_bufs)), _log_softmax(logits)
