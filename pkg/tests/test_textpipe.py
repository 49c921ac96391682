import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markedit import textpipe as tp

from oracles import count_bpe_pairs

WORDS = st.text(alphabet="abcde", min_size=1, max_size=6)


class TestVocabulary:
    def test_reserved_ids_fixed(self):
        v = tp.Vocabulary(["x", "y"])
        assert v.id("<pad>") == tp.PAD_ID == 0
        assert v.id("<s>") == tp.BOS_ID == 1
        assert v.id("</s>") == tp.EOS_ID == 2
        assert v.id("<unk>") == tp.UNK_ID == 3
        assert v.id("x") == 4 and v.id("y") == 5

    def test_bijection_over_real_tokens(self):
        v = tp.Vocabulary(["a", "b", "c"])
        for tok in v.real_tokens:
            assert v.token(v.id(tok)) == tok

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError):
            tp.Vocabulary(["a", "a"])

    def test_unknown_maps_to_unk(self):
        v = tp.Vocabulary(["a"])
        assert v.id("nope") == tp.UNK_ID

    def test_file_roundtrip(self, tmp_path):
        v = tp.Vocabulary(["alpha", "beta", "gamma"])
        path = tmp_path / "vocab.txt"
        v.save(path)
        loaded = tp.Vocabulary.load(path)
        assert loaded.real_tokens == v.real_tokens
        assert path.read_text().splitlines()[0] == "alpha"


class TestWordTokenization:
    def test_simple_split(self):
        pipe = tp.TextPipeline.train(["a b"], mode="word")
        assert pipe.tokenize("a b") == ["a", "b"]

    def test_unseen_word_encodes_to_unk(self):
        pipe = tp.TextPipeline.train(["a b"], mode="word")
        assert pipe.vocab.encode(pipe.tokenize("a zzz")) == [pipe.vocab.id("a"), tp.UNK_ID]

    @given(st.lists(WORDS, min_size=1, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_roundtrip_whitespace_normalized(self, words):
        text = "  ".join(words)
        pipe = tp.TextPipeline.train([" ".join(words)], mode="word")
        assert pipe.detokenize(pipe.tokenize(text)) == " ".join(words)


class TestBpe:
    def test_first_merge_of_repeated_pair(self):
        table = tp.train_bpe(["aa aa aa"], merges=1)
        assert table[0] == ("a", "a</w>")

    def test_nonpositive_merges_rejected(self):
        with pytest.raises(ValueError):
            tp.train_bpe(["ab"], merges=0)

    def test_unseen_pair_never_merged(self):
        table = tp.train_bpe(["ab ab cd"], merges=10)
        assert ("a", "c") not in table
        assert ("b", "d") not in table

    def test_merge_counts_match_pair_counting_oracle(self):
        corpus = ["abab abab cdcd", "abab cdcd cdcd", "abab xy"]
        words: dict[tuple[str, ...], int] = {}
        for line in corpus:
            for w in line.split():
                sym = tuple(w[:-1]) + (w[-1] + "</w>",)
                words[sym] = words.get(sym, 0) + 1
        oracle_pairs = count_bpe_pairs(words)
        expected_first = min(oracle_pairs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        table = tp.train_bpe(corpus, merges=1)
        assert table[0] == expected_first

    def test_frequent_word_becomes_single_piece(self):
        corpus = ["hello hello hello world"] * 5
        pipe = tp.TextPipeline.train(corpus, mode="bpe", merges=40)
        assert pipe.tokenize("hello") == ["hello"]

    def test_deterministic_table(self):
        corpus = ["the cat sat", "the bat sat", "a cat"]
        assert tp.train_bpe(corpus, merges=12) == tp.train_bpe(corpus, merges=12)

    @given(st.lists(WORDS, min_size=1, max_size=6))
    @settings(max_examples=40, deadline=None)
    def test_bpe_roundtrip(self, words):
        corpus = [" ".join(words)]
        pipe = tp.TextPipeline.train(corpus, mode="bpe", merges=8)
        text = " ".join(words)
        assert pipe.detokenize(pipe.tokenize(text)) == text


class TestMarkerPropagation:
    def test_marked_word_split_in_two(self):
        assert tp.propagate_markers([1], [2]) == [1, 1]

    def test_all_zero(self):
        assert tp.propagate_markers([0, 0, 0], [2, 1, 3]) == [0] * 6

    def test_mismatch_rejected(self):
        with pytest.raises(ValueError):
            tp.propagate_markers([1, 0], [2])

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(1, 4)), min_size=1, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_equals_brute_force_expansion(self, spec):
        markers = [m for m, _ in spec]
        counts = [c for _, c in spec]
        brute = []
        for m, c in spec:
            brute.extend([m] * c)
        assert tp.propagate_markers(markers, counts) == brute

    def test_idempotent_on_trivial_segmentation(self):
        markers = [1, 0, 1, 1]
        once = tp.propagate_markers(markers, [1] * 4)
        assert tp.propagate_markers(once, [1] * 4) == once


class TestAnnotatedGuess:
    def test_boundaries_partition_words(self):
        corpus = ["alpha beta gamma"] * 3
        pipe = tp.TextPipeline.train(corpus, mode="bpe", merges=3)
        g = pipe.annotate("alpha beta gamma", [1, 0, 1])
        assert g.word_count() == 3
        assert len(g.tokens) == len(g.markers) == len(g.word_boundaries)

    def test_pieces_of_one_word_share_marker(self):
        with pytest.raises(ValueError):
            tp.AnnotatedGuess([5, 6], [1, 0], [0, 1])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            tp.AnnotatedGuess([5, 6], [1])

    def test_word_mode_annotation(self):
        pipe = tp.TextPipeline.train(["a b"], mode="word")
        g = pipe.annotate("a b", [0, 1])
        assert g.word_boundaries == [1, 1]
        assert g.markers == [0, 1]
