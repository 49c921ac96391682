"""Independent reference implementations used to check the main library.

Everything here is deliberately written the slow, obvious way and shares no
code with src/markedit. Keep it that way: these are the oracles.
"""

from __future__ import annotations

import math
from collections import Counter


def numeric_gradient(f, arrays, eps: float = 1e-4):
    """Central finite differences of scalar f with respect to each array.

    ``arrays`` are float64 numpy arrays mutated in place while probing;
    returns one gradient array per input, same shapes.
    """
    grads = []
    for a in arrays:
        g = a.copy() * 0.0
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f())
            flat[i] = orig - eps
            down = float(f())
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Worst-case elementwise relative error between two gradients."""
    worst = 0.0
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    for x, y in zip(a, n):
        denom = max(abs(x), abs(y), floor)
        worst = max(worst, abs(x - y) / denom)
    return worst


def brute_force_markers(guess_words: list[str], reference_words: list[str]) -> list[int]:
    """Mark every guess word whose type is absent from the reference."""
    ref_types = set()
    for w in reference_words:
        ref_types.add(w)
    out = []
    for w in guess_words:
        out.append(0 if w in ref_types else 1)
    return out


def brute_force_ban_set(guess_words: list[str], markers: list[int]) -> set[str]:
    banned = set()
    for w, m in zip(guess_words, markers):
        if m == 1:
            banned.add(w)
    return banned


def brute_force_introduced(guess_words: list[str], output_words: list[str]) -> list[int]:
    guess_types = set(guess_words)
    return [i for i, w in enumerate(output_words) if w not in guess_types]


def brute_force_boldness(source_words: list[str], paraphrase_words: list[str]) -> float:
    if not paraphrase_words:
        return 0.0
    src = set(source_words)
    fresh = sum(1 for w in paraphrase_words if w not in src)
    return fresh / len(paraphrase_words)


def reference_corpus_bleu(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    """Corpus BLEU4 from the textbook definition: clipped n-gram precision
    summed over the corpus, geometric mean, brevity penalty, no smoothing.
    Scores on the 0-100 scale."""
    assert len(hypotheses) == len(references) and hypotheses
    log_prec_sum = 0.0
    for n in range(1, 5):
        match, total = 0, 0
        for hyp, ref in zip(hypotheses, references):
            hyp_ngrams = Counter(tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1))
            ref_ngrams = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
            for ng, count in hyp_ngrams.items():
                match += min(count, ref_ngrams[ng])
            total += max(0, len(hyp) - n + 1)
        if match == 0 or total == 0:
            return 0.0
        log_prec_sum += 0.25 * math.log(match / total)
    c = sum(len(h) for h in hypotheses)
    r = sum(len(rf) for rf in references)
    bp = 1.0 if c > r else math.exp(1.0 - r / max(c, 1))
    return 100.0 * bp * math.exp(log_prec_sum)


def exhaustive_best_sequence(scorer, vocab_ids: list[int], eos_id: int,
                             max_len: int, banned_ids: frozenset[int] = frozenset()):
    """Enumerate every token sequence of length <= max_len that ends with
    eos, skipping banned ids, and return (best_sequence_without_eos, score).

    Ties break toward the lexicographically smaller sequence. Returns
    (None, None) when no admissible sequence exists.
    """
    best_seq, best_score = None, None

    def consider(seq, score):
        nonlocal best_seq, best_score
        if best_score is None or score > best_score or (
                score == best_score and seq < best_seq):
            best_seq, best_score = seq, score

    def expand(prefix, score):
        logprobs = scorer(prefix)
        eos_lp = logprobs[eos_id]
        consider(tuple(prefix), score + eos_lp)
        if len(prefix) + 1 >= max_len:
            return
        for tok in vocab_ids:
            if tok == eos_id or tok in banned_ids:
                continue
            expand(prefix + [tok], score + logprobs[tok])

    expand([], 0.0)
    return best_seq, best_score


def count_bpe_pairs(words_with_freq: dict[tuple[str, ...], int]) -> Counter:
    """Frequency of each adjacent symbol pair, weighted by word frequency."""
    pairs: Counter = Counter()
    for symbols, freq in words_with_freq.items():
        for a, b in zip(symbols, symbols[1:]):
            pairs[(a, b)] += freq
    return pairs
