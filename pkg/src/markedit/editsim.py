"""Simulated post-edit data construction.

A training example is a triple (source, guess, reference) where the guess
carries binary markers on the words a simulated editor rejected: exactly
those guess word types that never occur in the reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .textpipe import tokenize_words


class DecodeFailure(RuntimeError):
    """Raised by a guess producer when a sentence cannot be decoded."""


@dataclass
class EditTriple:
    source: str
    guess: str
    markers: list[int]
    reference: str

    def __post_init__(self):
        n_words = len(tokenize_words(self.guess))
        if len(self.markers) != n_words:
            raise ValueError(
                f"{len(self.markers)} markers for {n_words} guess words: {self.guess!r}"
            )
        if any(m not in (0, 1) for m in self.markers):
            raise ValueError("markers must be 0/1")

    def to_json(self) -> str:
        return json.dumps(
            {"source": self.source, "guess": self.guess,
             "markers": self.markers, "reference": self.reference},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "EditTriple":
        obj = json.loads(line)
        return cls(obj["source"], obj["guess"], [int(m) for m in obj["markers"]],
                   obj["reference"])


def save_triples(triples: Iterable[EditTriple], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(t.to_json() + "\n")


def load_triples(path: str | Path) -> list[EditTriple]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EditTriple.from_json(line))
    return out


@dataclass(frozen=True)
class MarkingPolicy:
    """How many of the incorrect tokens actually get marked.

    ``full`` keeps every marker; ``bernoulli`` keeps each independently with
    probability p; ``top_k`` keeps a uniform random subset of at most k.
    """

    mode: str = "full"
    p: float = 1.0
    k: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("full", "bernoulli", "top_k"):
            raise ValueError(f"unknown marking mode {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")


def simulate_markers(guess_words: Sequence[str], reference_words: Sequence[str]) -> list[int]:
    """Mark guess words whose type does not occur in the reference."""
    ref_types = set(reference_words)
    return [0 if w in ref_types else 1 for w in guess_words]


def subsample_markers(markers: Sequence[int], policy: MarkingPolicy,
                      rng: np.random.Generator | None = None) -> list[int]:
    """Thin a full marker sequence according to the policy.

    Never introduces a mark where the input has none.
    """
    if policy.mode == "full":
        return list(markers)
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    ones = [i for i, m in enumerate(markers) if m == 1]
    out = [0] * len(markers)
    if policy.mode == "bernoulli":
        keep = rng.random(len(ones)) < policy.p
        for idx, k in zip(ones, keep):
            if k:
                out[idx] = 1
    else:  # top_k
        n_keep = min(policy.k, len(ones))
        kept = rng.choice(len(ones), size=n_keep, replace=False) if n_keep else []
        for j in kept:
            out[ones[int(j)]] = 1
    return out


def synthetic_guess(reference_words: Sequence[str], corruption_rate: float,
                    vocab_words: Sequence[str],
                    rng: np.random.Generator | int = 0) -> list[str]:
    """Corrupt a reference by swapping tokens for random different ones.

    Stands in for an undertrained translation system when a quick, fully
    controlled error rate is needed.
    """
    if not 0.0 <= corruption_rate <= 1.0:
        raise ValueError(f"corruption rate must be in [0, 1], got {corruption_rate}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    out = []
    for w in reference_words:
        if rng.random() < corruption_rate:
            choice = vocab_words[int(rng.integers(len(vocab_words)))]
            while choice == w:
                choice = vocab_words[int(rng.integers(len(vocab_words)))]
            out.append(choice)
        else:
            out.append(w)
    return out


def build_dataset(bitext: Sequence[tuple[str, str]],
                  guesses: Sequence[str | None] | Callable[[str], str],
                  policy: MarkingPolicy = MarkingPolicy()) -> tuple[list[EditTriple], int]:
    """Assemble edit triples from aligned (source, reference) pairs.

    ``guesses`` is either a precomputed guess per pair (None marks a decode
    failure) or a callable source -> guess that may raise DecodeFailure.
    Failed sentences are skipped and counted. Marker subsampling is seeded
    per sentence index, so results do not depend on how the work is split.
    """
    triples: list[EditTriple] = []
    skipped = 0
    for idx, (source, reference) in enumerate(bitext):
        if callable(guesses):
            try:
                guess = guesses(source)
            except DecodeFailure:
                skipped += 1
                continue
        else:
            guess = guesses[idx]
            if guess is None:
                skipped += 1
                continue
        full = simulate_markers(tokenize_words(guess), tokenize_words(reference))
        rng = np.random.default_rng((policy.seed, idx))
        markers = subsample_markers(full, policy, rng=rng)
        triples.append(EditTriple(source, guess, markers, reference))
    return triples, skipped
