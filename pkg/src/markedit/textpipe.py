"""Vocabulary, tokenization and subword segmentation.

Markers attach to whole words; in subword mode every piece of a word
carries its word's marker. Tokenization is case-sensitive whitespace
splitting; subword pieces use the trailing ``@@`` continuation convention.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")

CONTINUE_SUFFIX = "@@"
_WORD_END = "</w>"


class Vocabulary:
    """Bijective token-string <-> id map with fixed reserved ids."""

    def __init__(self, tokens: Iterable[str]):
        self._id_to_token: list[str] = list(RESERVED)
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self._token_to_id:
                raise ValueError(f"duplicate or reserved token {tok!r}")
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"token {tok!r} is empty or contains whitespace")
            self._token_to_id[tok] = len(self._id_to_token)
            self._id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._id_to_token[i] for i in ids]

    @property
    def real_tokens(self) -> list[str]:
        return self._id_to_token[len(RESERVED):]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.real_tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line for line in lines if line)

    @classmethod
    def from_corpus(cls, lines: Iterable[str]) -> "Vocabulary":
        counts = Counter()
        for line in lines:
            counts.update(tokenize_words(line))
        # frequency order, ties alphabetical, for a stable id assignment
        ordered = sorted(counts, key=lambda t: (-counts[t], t))
        return cls(ordered)


def tokenize_words(text: str) -> list[str]:
    return text.split()


def detokenize_words(words: Sequence[str]) -> str:
    return " ".join(words)


def train_bpe(lines: Iterable[str], merges: int) -> list[tuple[str, str]]:
    """Learn a byte-pair merge table.

    Ties between equally frequent pairs break by lexicographic pair order so
    the table is deterministic for a given corpus.
    """
    if merges <= 0:
        raise ValueError(f"merges must be positive, got {merges}")
    word_freq = Counter()
    for line in lines:
        word_freq.update(tokenize_words(line))
    if not word_freq:
        raise ValueError("empty corpus")
    words: dict[tuple[str, ...], int] = {}
    for word, freq in word_freq.items():
        symbols = tuple(word[:-1]) + (word[-1] + _WORD_END,)
        words[symbols] = words.get(symbols, 0) + freq

    table: list[tuple[str, str]] = []
    for _ in range(merges):
        pairs = Counter()
        for symbols, freq in words.items():
            for a, b in zip(symbols, symbols[1:]):
                pairs[(a, b)] += freq
        if not pairs:
            break
        # highest count wins; ties go to the lexicographically smallest pair
        best = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        table.append(best)
        merged: dict[tuple[str, ...], int] = {}
        for symbols, freq in words.items():
            merged_syms = _merge_pair(symbols, best)
            merged[merged_syms] = merged.get(merged_syms, 0) + freq
        words = merged
    return table


def _merge_pair(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            out.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


class BpeSegmenter:
    """Applies a learned merge table to words."""

    def __init__(self, merge_table: Sequence[tuple[str, str]]):
        self.merge_table = list(merge_table)
        self._rank = {pair: r for r, pair in enumerate(self.merge_table)}
        self._cache: dict[str, list[str]] = {}

    def segment_word(self, word: str) -> list[str]:
        """Split one word into pieces; non-final pieces end with ``@@``."""
        cached = self._cache.get(word)
        if cached is not None:
            return list(cached)
        symbols = list(word[:-1]) + [word[-1] + _WORD_END]
        while len(symbols) > 1:
            ranked = [
                (self._rank[p], i)
                for i, p in enumerate(zip(symbols, symbols[1:]))
                if p in self._rank
            ]
            if not ranked:
                break
            rank, _ = min(ranked)
            pair = self.merge_table[rank]
            symbols = list(_merge_pair(tuple(symbols), pair))
        pieces = [s + CONTINUE_SUFFIX for s in symbols[:-1]]
        pieces.append(symbols[-1].removesuffix(_WORD_END))
        self._cache[word] = pieces
        return list(pieces)

    def segment(self, words: Sequence[str]) -> tuple[list[str], list[int]]:
        """Segment a word sequence; returns (pieces, piece count per word)."""
        pieces: list[str] = []
        counts: list[int] = []
        for w in words:
            seg = self.segment_word(w)
            pieces.extend(seg)
            counts.append(len(seg))
        return pieces, counts

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "\n".join(f"{a} {b}" for a, b in self.merge_table) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "BpeSegmenter":
        table = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line:
                a, b = line.split(" ")
                table.append((a, b))
        return cls(table)


def propagate_markers(word_markers: Sequence[int], piece_counts: Sequence[int]) -> list[int]:
    """Expand word-level markers so every piece of word i carries marker i."""
    if len(word_markers) != len(piece_counts):
        raise ValueError(
            f"marker/word mismatch: {len(word_markers)} markers for {len(piece_counts)} words"
        )
    out: list[int] = []
    for m, n in zip(word_markers, piece_counts):
        if m not in (0, 1):
            raise ValueError(f"markers must be 0/1, got {m}")
        out.extend([m] * n)
    return out


@dataclass
class AnnotatedGuess:
    """Token ids paired with change markers.

    ``word_boundaries[i]`` is 1 when token i is the last piece of a word, so
    the flags partition the sequence back into words.
    """

    tokens: list[int]
    markers: list[int]
    word_boundaries: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.word_boundaries:
            self.word_boundaries = [1] * len(self.tokens)
        if len(self.tokens) != len(self.markers) or len(self.tokens) != len(self.word_boundaries):
            raise ValueError(
                f"length mismatch: {len(self.tokens)} tokens, {len(self.markers)} markers, "
                f"{len(self.word_boundaries)} boundary flags"
            )
        if any(m not in (0, 1) for m in self.markers):
            raise ValueError("markers must be 0/1")
        start = 0
        for i, flag in enumerate(self.word_boundaries):
            if flag:
                word_marks = set(self.markers[start:i + 1])
                if len(word_marks) > 1:
                    raise ValueError(f"pieces of the word ending at {i} carry mixed markers")
                start = i + 1

    def word_count(self) -> int:
        return sum(self.word_boundaries)


class TextPipeline:
    """Vocabulary plus the chosen tokenization mode, as one unit."""

    def __init__(self, vocab: Vocabulary, mode: str = "word",
                 segmenter: BpeSegmenter | None = None):
        if mode not in ("word", "bpe"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "bpe" and segmenter is None:
            raise ValueError("bpe mode needs a segmenter")
        self.vocab = vocab
        self.mode = mode
        self.segmenter = segmenter

    @classmethod
    def train(cls, lines: Sequence[str], mode: str = "word",
              merges: int = 0) -> "TextPipeline":
        if mode == "word":
            return cls(Vocabulary.from_corpus(lines), "word")
        table = train_bpe(lines, merges)
        segmenter = BpeSegmenter(table)
        types: Counter = Counter()
        for line in lines:
            pieces, _ = segmenter.segment(tokenize_words(line))
            types.update(pieces)
        ordered = sorted(types, key=lambda t: (-types[t], t))
        return cls(Vocabulary(ordered), "bpe", segmenter)

    def tokenize(self, text: str) -> list[str]:
        words = tokenize_words(text)
        if self.mode == "word":
            return words
        pieces, _ = self.segmenter.segment(words)
        return pieces

    def detokenize(self, tokens: Sequence[str]) -> str:
        if self.mode == "word":
            return detokenize_words(tokens)
        words: list[str] = []
        current = ""
        for tok in tokens:
            if tok.endswith(CONTINUE_SUFFIX):
                current += tok.removesuffix(CONTINUE_SUFFIX)
            else:
                words.append(current + tok)
                current = ""
        if current:
            words.append(current)
        return detokenize_words(words)

    def annotate(self, guess_text: str, word_markers: Sequence[int]) -> AnnotatedGuess:
        """Build the model-facing annotated token sequence for a guess."""
        words = tokenize_words(guess_text)
        if len(words) != len(word_markers):
            raise ValueError(
                f"{len(word_markers)} markers for {len(words)} guess words"
            )
        if self.mode == "word":
            return AnnotatedGuess(self.vocab.encode(words), list(word_markers))
        pieces, counts = self.segmenter.segment(words)
        markers = propagate_markers(word_markers, counts)
        boundaries = [0 if p.endswith(CONTINUE_SUFFIX) else 1 for p in pieces]
        return AnnotatedGuess(self.vocab.encode(pieces), markers, boundaries)
