import numpy as np
import pytest

from markedit import evaluation as ev
from markedit.decoding import DecodeOutput
from markedit.editsim import EditTriple
from markedit.model import EditorModel, preset_config
from markedit.textpipe import TextPipeline

from oracles import reference_corpus_bleu


def random_corpus(rng, n_pairs, vocab=12, min_len=4, max_len=12):
    words = [f"w{i}" for i in range(vocab)]
    hyps, refs = [], []
    for _ in range(n_pairs):
        ref = [words[i] for i in rng.integers(0, vocab, size=rng.integers(min_len, max_len))]
        # hypotheses overlap the reference partially for nonzero n-gram hits
        hyp = list(ref)
        for j in range(len(hyp)):
            if rng.random() < 0.3:
                hyp[j] = words[int(rng.integers(0, vocab))]
        if rng.random() < 0.3:
            hyp = hyp[:-1] if len(hyp) > 4 else hyp
        hyps.append(hyp)
        refs.append(ref)
    return hyps, refs


class TestBleu:
    def test_identical_corpora_score_exactly_100(self):
        sents = ["a b c d e", "f g h i"]
        report = ev.bleu4(sents, sents)
        assert report.bleu == 100.0
        assert report.brevity_penalty == 1.0

    def test_no_fourgram_overlap_scores_zero(self):
        report = ev.bleu4(["a b c d e"], ["a b x d e"])
        assert report.bleu == 0.0
        assert report.precisions[3] == 0.0

    def test_twenty_random_corpora_match_independent_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            hyps, refs = random_corpus(rng, int(rng.integers(3, 15)))
            mine = ev.bleu4(hyps, refs).bleu
            oracle = reference_corpus_bleu(hyps, refs)
            assert mine == pytest.approx(oracle, abs=1e-6)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        hyps, refs = random_corpus(rng, 10)
        base = ev.bleu4(hyps, refs).bleu
        order = rng.permutation(10)
        shuffled = ev.bleu4([hyps[i] for i in order], [refs[i] for i in order]).bleu
        assert shuffled == base

    def test_report_identity(self):
        rng = np.random.default_rng(3)
        hyps, refs = random_corpus(rng, 8)
        rep = ev.bleu4(hyps, refs)
        if all(p > 0 for p in rep.precisions):
            geo = np.exp(np.mean([np.log(p) for p in rep.precisions]))
            assert rep.bleu == pytest.approx(100.0 * rep.brevity_penalty * geo, abs=1e-9)
        assert 0.0 <= rep.bleu <= 100.0

    def test_adding_perfect_pair_never_decreases(self):
        rng = np.random.default_rng(11)
        hyps, refs = random_corpus(rng, 6)
        # pad hypotheses so brevity penalty is 1 before and after
        hyps = [h + ["pad1", "pad2"] for h in hyps]
        before = ev.bleu4(hyps, refs)
        assert before.brevity_penalty == 1.0
        perfect = ["x1 x2 x3 x4 x5 x6"]
        after = ev.bleu4(hyps + [perfect[0].split()], refs + [perfect[0].split()])
        assert after.bleu >= before.bleu

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            ev.bleu4([], [])

    def test_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ev.bleu4(["a"], ["a", "b"])


class TestSyntheticTask:
    def small_spec(self, **kw):
        base = dict(vocab_size=12, min_len=4, max_len=8, seed=5,
                    train_size=60, valid_size=15, test_size=15)
        base.update(kw)
        return ev.SyntheticTaskSpec(**base)

    def test_identity_config_copies_source(self):
        task = ev.make_synthetic_task(self.small_spec(identity_bijection=True,
                                                      reorder="none"))
        for src, tgt in task.train + task.valid + task.test:
            assert src == tgt

    def test_inverse_recovers_source(self):
        task = ev.make_synthetic_task(self.small_spec())
        for src, tgt in task.train[:20]:
            assert ev.invert_target(task, tgt) == src

    def test_split_sizes_and_disjointness(self):
        task = ev.make_synthetic_task(self.small_spec())
        assert (len(task.train), len(task.valid), len(task.test)) == (60, 15, 15)
        srcs = [s for s, _ in task.train + task.valid + task.test]
        assert len(set(srcs)) == len(srcs)

    def test_lengths_within_range(self):
        task = ev.make_synthetic_task(self.small_spec())
        for src, tgt in task.train:
            assert 4 <= len(src.split()) <= 8
            assert len(src.split()) == len(tgt.split())

    def test_deterministic(self):
        a = ev.make_synthetic_task(self.small_spec())
        b = ev.make_synthetic_task(self.small_spec())
        assert a.train == b.train and a.valid == b.valid and a.test == b.test

    def test_unigram_distributions_match_across_splits(self):
        from scipy import stats
        spec = ev.SyntheticTaskSpec(vocab_size=20, min_len=5, max_len=15, seed=3,
                                    train_size=2000, valid_size=500, test_size=500)
        task = ev.make_synthetic_task(spec)

        def counts(pairs):
            c = np.zeros(20)
            for s, _ in pairs:
                for w in s.split():
                    c[int(w[1:])] += 1
            return c

        train_c, test_c = counts(task.train), counts(task.test)
        expected = train_c / train_c.sum() * test_c.sum()
        keep = expected > 1
        _, p_value = stats.chisquare(test_c[keep], expected[keep])
        assert p_value > 1e-4

    def test_bitext_files_roundtrip(self, tmp_path):
        task = ev.make_synthetic_task(self.small_spec())
        ev.save_bitext(task.train, tmp_path / "s.txt", tmp_path / "t.txt")
        loaded = ev.load_bitext(tmp_path / "s.txt", tmp_path / "t.txt")
        assert loaded == task.train


def perfect_decode_batch(model, pipe, requests, **kwargs):
    """Stand-in for decode_batch simulating models that always hit the
    reference; the reference is recoverable because tests attach it."""
    outs = []
    for req in requests:
        text = perfect_decode_batch.lookup[req.source or req.guess]
        outs.append(DecodeOutput(text=text, score=-1.0, flagged=False, banned=[]))
    return outs


class TestProtocolWiring:
    CORPUS = [f"w{i}" for i in range(8)]
    PIPE = TextPipeline.train([" ".join(CORPUS)], mode="word")

    def models(self):
        v = len(self.PIPE.vocab)
        return {
            "initial": EditorModel.build(preset_config("toy", "translation", v, v), 1),
            "editor": EditorModel.build(preset_config("toy", "bilingual", v, v), 2),
            "editor-mono": EditorModel.build(preset_config("toy", "monolingual", v, v), 3),
        }

    def triples(self, n=6, perfect=False):
        rng = np.random.default_rng(4)
        out = []
        for i in range(n):
            ref = " ".join(self.CORPUS[j] for j in rng.integers(0, 8, size=5))
            guess = ref if perfect else " ".join(
                self.CORPUS[j] for j in rng.integers(0, 8, size=5))
            markers = [0] * 5 if perfect else [
                int(w not in ref.split()) for w in guess.split()]
            out.append(EditTriple(f"s{i} x y", guess, markers, ref))
        return out

    def test_perfect_models_score_100_everywhere(self, monkeypatch):
        triples = self.triples(perfect=True)
        lookup = {}
        for t in triples:
            lookup[t.source] = t.reference
            lookup[t.guess] = t.reference
        perfect_decode_batch.lookup = lookup
        monkeypatch.setattr(ev, "decode_batch", perfect_decode_batch)
        report = ev.run_protocol(self.models(), triples, self.PIPE)
        assert set(report.scores) == {"initial", "baseline", "editor", "editor-mono"}
        for system, bleu in report.scores.items():
            assert bleu == 100.0, system
        assert report.missing == []

    def test_baseline_reuses_initial_and_empty_bans_match(self):
        # with all markers zero the constrained baseline decodes exactly
        # like the initial system
        models = self.models()
        triples = self.triples(perfect=True)
        report = ev.run_protocol({"initial": models["initial"]}, triples, self.PIPE)
        assert report.scores["initial"] == report.scores["baseline"]
        assert set(report.missing) == {"editor", "editor-mono"}

    def test_missing_models_flagged(self):
        report = ev.run_protocol({}, self.triples(), self.PIPE)
        assert report.scores == {}
        assert report.missing == ["initial", "baseline", "editor", "editor-mono"]


class TestFeedbackCurve:
    CORPUS = [f"w{i}" for i in range(8)]
    PIPE = TextPipeline.train([" ".join(CORPUS)], mode="word")

    def setup_models_and_triples(self):
        v = len(self.PIPE.vocab)
        models = {
            "baseline": EditorModel.build(preset_config("toy", "translation", v, v), 1),
            "editor-m100": EditorModel.build(preset_config("toy", "bilingual", v, v), 2),
        }
        rng = np.random.default_rng(9)
        triples = []
        for i in range(8):
            ref = " ".join(self.CORPUS[j] for j in rng.integers(0, 8, size=5))
            guess = " ".join(self.CORPUS[j] for j in rng.integers(0, 8, size=6))
            markers = [int(w not in ref.split()) for w in guess.split()]
            triples.append(EditTriple(f"a{i} b c d", guess, markers, ref))
        return models, triples

    def test_huge_k_equals_full_marking_protocol(self):
        models, triples = self.setup_models_and_triples()
        curves = ev.feedback_curve(models, triples, self.PIPE, k_max=12, seed=3)
        protocol = ev.run_protocol(
            {"initial": models["baseline"], "editor": models["editor-m100"]},
            triples, self.PIPE)
        max_incorrect = max(sum(t.markers) for t in triples)
        assert 12 >= max_incorrect
        assert curves["editor-m100"][-1].bleu == protocol.scores["editor"]
        assert curves["baseline"][-1].bleu == protocol.scores["baseline"]

    def test_k1_applies_at_most_one_mark(self):
        models, triples = self.setup_models_and_triples()
        curves = ev.feedback_curve(models, triples, self.PIPE, k_max=1, seed=3)
        expected = np.mean([min(1, sum(t.markers)) for t in triples])
        for pts in curves.values():
            assert pts[0].k == 1
            assert pts[0].mean_marks == pytest.approx(expected)
            assert pts[0].mean_marks <= 1.0

    def test_curve_csv_roundtrip_and_plot(self, tmp_path):
        curves = {
            "baseline": [ev.CurvePoint(1, 0.9, 10.0), ev.CurvePoint(2, 1.7, 12.5)],
            "editor-m100": [ev.CurvePoint(1, 0.9, 15.0), ev.CurvePoint(2, 1.7, 22.0)],
        }
        path = tmp_path / "curve.csv"
        ev.write_curve_csv(path, curves)
        loaded = ev.read_curve_csv(path)
        assert loaded == curves
        svg = tmp_path / "curve.svg"
        ev.plot_curves(curves, svg)
        assert svg.read_text().startswith("<?xml")
