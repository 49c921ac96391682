import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markedit import editsim as es

from oracles import brute_force_markers

WORD = st.text(alphabet="abcdef", min_size=1, max_size=3)


class TestSimulateMarkers:
    def test_identical_all_zero(self):
        assert es.simulate_markers(["a", "b"], ["a", "b"]) == [0, 0]

    def test_set_membership(self):
        assert es.simulate_markers(["a", "b", "c"], ["a", "c"]) == [0, 1, 0]

    def test_type_level_repeats(self):
        assert es.simulate_markers(["a", "a", "b"], ["a"]) == [0, 0, 1]

    def test_empty_guess(self):
        assert es.simulate_markers([], ["a"]) == []

    def test_hundred_random_pairs_match_brute_force(self):
        rng = np.random.default_rng(7)
        words = [f"w{i}" for i in range(12)]
        for _ in range(100):
            guess = [words[i] for i in rng.integers(0, 12, size=rng.integers(0, 9))]
            ref = [words[i] for i in rng.integers(0, 12, size=rng.integers(1, 9))]
            assert es.simulate_markers(guess, ref) == brute_force_markers(guess, ref)


class TestSubsampleMarkers:
    def test_bernoulli_one_is_identity(self):
        m = [1, 0, 1, 1, 0]
        policy = es.MarkingPolicy("bernoulli", p=1.0, seed=3)
        assert es.subsample_markers(m, policy) == m

    def test_bernoulli_zero_clears(self):
        policy = es.MarkingPolicy("bernoulli", p=0.0, seed=3)
        assert es.subsample_markers([1, 1, 1], policy) == [0, 0, 0]

    def test_bernoulli_half_statistics(self):
        markers = [1] * 10_000
        policy = es.MarkingPolicy("bernoulli", p=0.5, seed=123)
        kept = sum(es.subsample_markers(markers, policy))
        assert abs(kept / 10_000 - 0.5) < 0.02

    def test_top_k_size(self):
        markers = [1, 0, 1, 1, 1, 0]
        policy = es.MarkingPolicy("top_k", k=2, seed=5)
        out = es.subsample_markers(markers, policy)
        assert sum(out) == 2

    def test_top_k_larger_than_ones_keeps_all(self):
        markers = [1, 0, 1]
        policy = es.MarkingPolicy("top_k", k=10, seed=5)
        assert es.subsample_markers(markers, policy) == markers

    @given(st.lists(st.integers(0, 1), max_size=20), st.integers(0, 5), st.integers(0, 99))
    @settings(max_examples=80, deadline=None)
    def test_never_introduces_marks(self, markers, k, seed):
        out = es.subsample_markers(markers, es.MarkingPolicy("top_k", k=k, seed=seed))
        assert all(o <= m for o, m in zip(out, markers))
        out2 = es.subsample_markers(markers, es.MarkingPolicy("bernoulli", p=0.3, seed=seed))
        assert all(o <= m for o, m in zip(out2, markers))

    def test_invalid_policy_rejected(self):
        with pytest.raises(ValueError):
            es.MarkingPolicy("bernoulli", p=1.5)
        with pytest.raises(ValueError):
            es.MarkingPolicy("top_k", k=-1)
        with pytest.raises(ValueError):
            es.MarkingPolicy("weird")


class TestSyntheticGuess:
    VOCAB = [f"w{i}" for i in range(20)]

    def test_rate_zero_is_identity(self):
        ref = ["w1", "w2", "w3"]
        assert es.synthetic_guess(ref, 0.0, self.VOCAB, rng=1) == ref

    def test_rate_one_changes_everything(self):
        ref = ["w1", "w2", "w3", "w4"]
        out = es.synthetic_guess(ref, 1.0, self.VOCAB, rng=1)
        assert all(a != b for a, b in zip(out, ref))

    def test_rate_statistics(self):
        ref = ["w5"] * 10_000
        out = es.synthetic_guess(ref, 0.3, self.VOCAB, rng=99)
        frac = sum(1 for a, b in zip(out, ref) if a != b) / len(ref)
        assert abs(frac - 0.3) < 0.02

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            es.synthetic_guess(["w1"], 1.2, self.VOCAB)


class TestBuildDataset:
    BITEXT = [("s one", "r one"), ("s two", "r two x")]

    def test_perfect_guesses_mean_zero_markers(self):
        triples, skipped = es.build_dataset(self.BITEXT, [ref for _, ref in self.BITEXT])
        assert skipped == 0
        assert all(sum(t.markers) == 0 for t in triples)

    def test_failures_skipped_and_counted(self):
        triples, skipped = es.build_dataset(self.BITEXT, ["r one", None])
        assert skipped == 1
        assert len(triples) == 1

    def test_callable_guesser(self):
        def guesser(src):
            if src == "s two":
                raise es.DecodeFailure("nope")
            return "r one"

        triples, skipped = es.build_dataset(self.BITEXT, guesser)
        assert skipped == 1 and len(triples) == 1

    def test_full_marking_types_absent_from_reference(self):
        rng = np.random.default_rng(11)
        words = [f"w{i}" for i in range(15)]
        bitext = []
        guesses = []
        for _ in range(50):
            ref = [words[i] for i in rng.integers(0, 15, size=rng.integers(3, 10))]
            guess = es.synthetic_guess(ref, 0.4, words, rng=rng)
            bitext.append(("src", " ".join(ref)))
            guesses.append(" ".join(guess))
        triples, _ = es.build_dataset(bitext, guesses)
        for t in triples:
            ref_types = set(t.reference.split())
            for w, m in zip(t.guess.split(), t.markers):
                if m:
                    assert w not in ref_types

    def test_reproducible_subsampling(self):
        bitext = [("s", "a b c")] * 5
        guesses = ["x y z"] * 5
        policy = es.MarkingPolicy("bernoulli", p=0.5, seed=42)
        a, _ = es.build_dataset(bitext, guesses, policy)
        b, _ = es.build_dataset(bitext, guesses, policy)
        assert [t.markers for t in a] == [t.markers for t in b]

    def test_jsonl_roundtrip(self, tmp_path):
        triples, _ = es.build_dataset(self.BITEXT, ["g one", "g two y"])
        path = tmp_path / "triples.jsonl"
        es.save_triples(triples, path)
        loaded = es.load_triples(path)
        assert loaded == triples


class TestEditTriple:
    def test_marker_length_enforced(self):
        with pytest.raises(ValueError):
            es.EditTriple("s", "two words", [1], "r")

    def test_json_fields(self):
        t = es.EditTriple("s", "g h", [0, 1], "r")
        j = t.to_json()
        assert '"source"' in j and '"markers"' in j
        assert es.EditTriple.from_json(j) == t
