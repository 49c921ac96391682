"""Automatic paraphrasing via learned edit probabilities.

Counts how often each word type was marked for change in the edit training
data; at inference the per-word probability is thresholded to produce
markers automatically, and the monolingual editor rewrites under them.
Boldness measures how far the rewrite strays from its input.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .decoding import DecodeRequest, decode_request
from .editsim import EditTriple
from .model import EditorModel
from .textpipe import TextPipeline, tokenize_words


class MarkerModel:
    """Relative-frequency estimate of a word type's chance of being marked.

    Counts are kept as integers so probabilities stay exact ratios; unseen
    words have probability zero and are never marked.
    """

    def __init__(self, counts: dict[str, tuple[int, int]] | None = None):
        self.counts: dict[str, tuple[int, int]] = dict(counts or {})
        for word, (marked, total) in self.counts.items():
            if not 0 <= marked <= total or total <= 0:
                raise ValueError(f"bad counts for {word!r}: {marked}/{total}")

    def probability(self, word: str) -> Fraction:
        marked, total = self.counts.get(word, (0, 1))
        return Fraction(marked, total)

    def __len__(self) -> int:
        return len(self.counts)

    def save(self, path: str | Path) -> None:
        lines = [f"{w}\t{m}\t{t}" for w, (m, t) in sorted(self.counts.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "MarkerModel":
        counts: dict[str, tuple[int, int]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            word, marked, total = line.split("\t")
            counts[word] = (int(marked), int(total))
        return cls(counts)


def fit_marker_model(triples: Iterable[EditTriple]) -> MarkerModel:
    """Count marked occurrences per word type over fully marked triples."""
    marked: dict[str, int] = {}
    total: dict[str, int] = {}
    empty = True
    for t in triples:
        empty = False
        for word, m in zip(tokenize_words(t.guess), t.markers):
            total[word] = total.get(word, 0) + 1
            marked[word] = marked.get(word, 0) + m
    if empty:
        raise ValueError("cannot fit a marker model on an empty stream")
    return MarkerModel({w: (marked[w], total[w]) for w in total})


def auto_mark(words: Sequence[str], model: MarkerModel, tau: float) -> list[int]:
    """Mark word i when P(marked | word) strictly exceeds tau."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return [1 if model.probability(w) > tau else 0 for w in words]


def boldness(source_words: Sequence[str], paraphrase_words: Sequence[str]) -> float:
    """Fraction of paraphrase tokens whose type is absent from the source.

    An empty paraphrase scores zero by convention.
    """
    if not paraphrase_words:
        return 0.0
    source_types = set(source_words)
    fresh = sum(1 for w in paraphrase_words if w not in source_types)
    return fresh / len(paraphrase_words)


@dataclass
class ParaphraseResult:
    markers: list[int]
    output: str
    boldness: float
    flagged: bool
    score: float


def paraphrase(sentence: str, model: EditorModel, marker_model: MarkerModel,
               tau: float, pipe: TextPipeline, beam: int = 5) -> ParaphraseResult:
    """Auto-mark the sentence and rewrite it with the monolingual editor."""
    if model.config.mode != "monolingual":
        raise ValueError("paraphrasing needs a monolingual-mode model")
    words = tokenize_words(sentence)
    markers = auto_mark(words, marker_model, tau)
    out = decode_request(model, pipe, DecodeRequest(guess=sentence, markers=markers),
                         beam_size=beam)
    return ParaphraseResult(
        markers=markers, output=out.text,
        boldness=boldness(words, tokenize_words(out.text)),
        flagged=out.flagged, score=out.score,
    )
