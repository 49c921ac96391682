"""Left-to-right beam search with hard negative constraints.

A banned word type may never appear in the output. In word mode the banned
ids are masked to -inf before candidates are ranked; in subword mode a
hypothesis is pruned the moment it completes a banned word. If pruning
eliminates every hypothesis the decoder falls back to an empty, flagged
output rather than violate a ban.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import multiprocessing as mp
from typing import Protocol, Sequence

import numpy as np

from .inference import NetworkScorer
from .model import EditorModel
from .textpipe import (AnnotatedGuess, BOS_ID, CONTINUE_SUFFIX, EOS_ID, PAD_ID,
                       TextPipeline, Vocabulary, tokenize_words)


class SequenceScorer(Protocol):
    vocab_size: int

    def start(self) -> tuple[object, np.ndarray]: ...

    def step(self, state: object, token_id: int) -> tuple[object, np.ndarray]: ...


def build_ban_set(guess: AnnotatedGuess, vocab: Vocabulary) -> set[str]:
    """Word types with at least one marked occurrence in the guess."""
    banned: set[str] = set()
    word_pieces: list[str] = []
    word_marked = False
    for tok, marker, boundary in zip(guess.tokens, guess.markers, guess.word_boundaries):
        piece = vocab.token(tok)
        word_pieces.append(piece.removesuffix(CONTINUE_SUFFIX))
        word_marked = word_marked or marker == 1
        if boundary:
            if word_marked:
                banned.add("".join(word_pieces))
            word_pieces = []
            word_marked = False
    return banned


def ban_set_from_words(guess_words: Sequence[str], markers: Sequence[int]) -> set[str]:
    if len(guess_words) != len(markers):
        raise ValueError(f"{len(markers)} markers for {len(guess_words)} words")
    return {w for w, m in zip(guess_words, markers) if m == 1}


@dataclass(frozen=True)
class BeamHypothesis:
    tokens: tuple[int, ...]
    score: float
    state: object
    logprobs: np.ndarray = field(compare=False)
    partial_word: str = ""
    attention: tuple = ()


@dataclass
class DecodeResult:
    tokens: list[int]
    score: float
    flagged: bool
    banned: list[str]
    attention: list | None = None


def beam_search(scorer: SequenceScorer, beam_size: int = 5,
                ban_words: set[str] | frozenset[str] = frozenset(),
                vocab: Vocabulary | None = None, subword: bool = False,
                max_tokens: int = 50,
                collect_attention: bool = False) -> DecodeResult:
    """Best constrained hypothesis under the scorer.

    Ties break toward the lexicographically smaller token sequence, which
    for single-token decisions means the lower token id. Scores are raw
    cumulative log-probabilities (no length normalization).
    """
    if beam_size < 1:
        raise ValueError(f"beam size must be >= 1, got {beam_size}")
    if ban_words and vocab is None:
        raise ValueError("banning words requires the vocabulary")
    V = scorer.vocab_size
    id_mask = np.zeros(V)
    id_mask[PAD_ID] = -np.inf
    id_mask[BOS_ID] = -np.inf
    if not subword:
        for w in ban_words:
            if vocab is not None and w in vocab:
                id_mask[vocab.id(w)] = -np.inf

    def grab_attention(sc):
        if collect_attention and getattr(sc, "last_attention", None) is not None:
            return (sc.last_attention,)
        return ()

    state0, lp0 = scorer.start()
    live = [BeamHypothesis((), 0.0, state0, lp0, "", grab_attention(scorer))]
    finished: list[BeamHypothesis] = []
    banned_sorted = sorted(ban_words)

    for _ in range(max_tokens + 1):
        if not live:
            break
        best_finished = max(f.score for f in finished) if finished else -np.inf
        if finished and max(h.score for h in live) < best_finished:
            break
        candidates: list[tuple[float, tuple[int, ...], BeamHypothesis, int]] = []
        for hyp in live:
            adjusted = hyp.logprobs + id_mask
            if len(hyp.tokens) >= max_tokens:
                token_ids: Sequence[int] = (EOS_ID,)
            elif V > 4 * beam_size + 8 and not (subword and ban_words):
                # only beam_size expansions can survive, so the top few plus
                # the finishing token are enough; with subword bans pruning
                # can strike candidates, so that mode scans the full vocab
                k = min(V, beam_size + 1)
                top = np.argpartition(-adjusted, k - 1)[:k]
                token_ids = list(top) if EOS_ID in top else list(top) + [EOS_ID]
            else:
                token_ids = range(V)
            for tok in token_ids:
                tok = int(tok)
                sc = adjusted[tok]
                if sc == -np.inf:
                    continue
                candidates.append((hyp.score + sc, hyp.tokens + (tok,), hyp, tok))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        new_live: list[BeamHypothesis] = []
        rank = 0  # admissible candidates seen; a finish must rank in the top beam
        for score, tokens, hyp, tok in candidates:
            if tok == EOS_ID:
                if subword and hyp.partial_word and hyp.partial_word in ban_words:
                    continue
                if rank < beam_size:
                    finished.append(BeamHypothesis(hyp.tokens, score, None,
                                                   hyp.logprobs, "", hyp.attention))
                rank += 1
                continue
            if len(new_live) < beam_size:
                partial = hyp.partial_word
                if subword:
                    piece = vocab.token(tok)
                    if piece.endswith(CONTINUE_SUFFIX):
                        partial = partial + piece.removesuffix(CONTINUE_SUFFIX)
                    else:
                        word = partial + piece
                        if word in ban_words:
                            continue
                        partial = ""
                new_state, lp = scorer.step(hyp.state, tok)
                new_live.append(BeamHypothesis(tokens, score, new_state, lp, partial,
                                               hyp.attention + grab_attention(scorer)))
            rank += 1
            if len(new_live) >= beam_size and rank >= beam_size:
                break
        live = new_live

    if not finished:
        return DecodeResult([], float("-inf"), True, banned_sorted,
                            [] if collect_attention else None)
    best = min(finished, key=lambda h: (-h.score, h.tokens))
    return DecodeResult(list(best.tokens), float(best.score), False, banned_sorted,
                        list(best.attention) if collect_attention else None)


# ---------------------------------------------------------------------------
# model-level decoding
# ---------------------------------------------------------------------------


@dataclass
class DecodeRequest:
    source: str | None = None
    guess: str | None = None
    markers: list[int] | None = None


@dataclass
class DecodeOutput:
    text: str
    score: float
    flagged: bool
    banned: list[str]
    attention: list | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        out = {
            "output": self.text,
            "score": None if not np.isfinite(self.score) else self.score,
            "flagged": self.flagged,
            "banned": self.banned,
        }
        if self.attention is not None:
            out["attention"] = self.attention
        if self.error is not None:
            out["error"] = self.error
        return out


def decode_request(model: EditorModel, pipe: TextPipeline, request: DecodeRequest,
                   beam_size: int = 5, constrained: bool = True,
                   max_tokens: int | None = None,
                   collect_attention: bool = False) -> DecodeOutput:
    cfg = model.config
    src_ids = None
    guess = None
    ban: set[str] = set()
    input_len = 0
    if cfg.uses_source:
        if not request.source:
            raise ValueError(f"{cfg.mode} model needs a source sentence")
        src_ids = pipe.vocab.encode(pipe.tokenize(request.source))
        input_len = max(input_len, len(src_ids))
    if request.guess is not None and request.markers is not None:
        if constrained:
            ban = ban_set_from_words(tokenize_words(request.guess), request.markers)
        if cfg.uses_guess:
            guess = pipe.annotate(request.guess, request.markers)
            input_len = max(input_len, len(guess.tokens))
    elif cfg.uses_guess:
        raise ValueError(f"{cfg.mode} model needs a guess with markers")

    scorer = NetworkScorer(model, src_ids=src_ids, guess=guess,
                           collect_attention=collect_attention)
    if max_tokens is None:
        max_tokens = min(2 * input_len + 10, model.config.max_positions)
    result = beam_search(scorer, beam_size=beam_size, ban_words=ban,
                         vocab=pipe.vocab, subword=(pipe.mode == "bpe"),
                         max_tokens=max_tokens, collect_attention=collect_attention)
    text = pipe.detokenize(pipe.vocab.decode(result.tokens))
    attention = None
    if collect_attention and result.attention is not None:
        attention = [
            [{path: w.tolist() for path, w in step_layer.items()}
             for step_layer in step]
            for step in result.attention
        ]
    return DecodeOutput(text=text, score=result.score, flagged=result.flagged,
                        banned=result.banned, attention=attention)


_WORKER_CTX: dict = {}


def _init_worker(model, pipe, kwargs):
    _WORKER_CTX["model"] = model
    _WORKER_CTX["pipe"] = pipe
    _WORKER_CTX["kwargs"] = kwargs


def _decode_indexed(args):
    idx, request = args
    try:
        out = decode_request(_WORKER_CTX["model"], _WORKER_CTX["pipe"], request,
                             **_WORKER_CTX["kwargs"])
    except Exception as exc:  # per-item isolation
        out = DecodeOutput("", float("-inf"), True, [], error=str(exc))
    return idx, out


def decode_batch(model: EditorModel, pipe: TextPipeline,
                 requests: Sequence[DecodeRequest], beam_size: int = 5,
                 constrained: bool = True, max_tokens: int | None = None,
                 collect_attention: bool = False, workers: int = 1) -> list[DecodeOutput]:
    """Decode many requests; output order always matches input order and the
    results are identical to one-by-one decoding regardless of worker count."""
    kwargs = dict(beam_size=beam_size, constrained=constrained,
                  max_tokens=max_tokens, collect_attention=collect_attention)
    if workers <= 1 or len(requests) < 4:
        _init_worker(model, pipe, kwargs)
        return [_decode_indexed((i, r))[1] for i, r in enumerate(requests)]
    ctx = mp.get_context("fork")
    results: list[DecodeOutput | None] = [None] * len(requests)
    chunk = max(1, len(requests) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx,
                             initializer=_init_worker,
                             initargs=(model, pipe, kwargs)) as pool:
        for idx, out in pool.map(_decode_indexed, enumerate(requests), chunksize=chunk):
            results[idx] = out
    return results  # type: ignore[return-value]
