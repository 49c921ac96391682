"""End-to-end experiment orchestration on the synthetic task.

One seed runs: generate the task, train an initial translation system on a
deliberately small update budget so its guesses contain errors, decode the
corpus with it, mark wrong tokens against the references, train the editor
variants on those simulated post-edits, then score the four-system protocol
and the partial-feedback curve. Everything is reproducible from the seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

from .decoding import DecodeRequest, decode_batch
from .editsim import EditTriple, MarkingPolicy, build_dataset, save_triples
from .evaluation import (CurvePoint, ProtocolReport, SyntheticTask, SyntheticTaskSpec,
                         feedback_curve, make_synthetic_task, run_protocol,
                         save_bitext, write_curve_csv)
from .model import EditorModel, preset_config
from .textpipe import TextPipeline, Vocabulary
from .training import TrainConfig, train

logger = logging.getLogger("markedit.pipeline")

EDITOR_SYSTEMS = ("editor", "editor-mono", "editor-m25", "editor-m50")


@dataclass
class PipelineConfig:
    task: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    preset: str = "toy"
    beam: int = 5
    workers: int = 2
    k_max: int = 8
    train_partial_models: bool = True
    # the initial system's small fixed budget stops it mid-learning, so its
    # guesses carry roughly one wrong-type token per sentence for the
    # simulated editor to mark; the editors train an order of magnitude longer
    initial_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        lr=0.5, momentum=0.9, batch_tokens=800, max_updates=200,
        clip_norm=0.1, valid_interval=100))
    editor_train: TrainConfig = field(default_factory=lambda: TrainConfig(
        lr=0.5, momentum=0.9, batch_tokens=800, max_updates=2500,
        clip_norm=0.1, valid_interval=250))

    def digest(self) -> str:
        payload = {
            "task": self.task.to_dict(), "preset": self.preset, "beam": self.beam,
            "k_max": self.k_max,
            "initial_train": asdict(self.initial_train),
            "editor_train": asdict(self.editor_train),
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SeedResult:
    seed: int
    protocol: ProtocolReport
    curves: dict[str, list[CurvePoint]]
    skipped: dict[str, int]
    paths: dict[str, str]


def _train_config_with(base: TrainConfig, seed: int) -> TrainConfig:
    cfg = TrainConfig(**asdict(base))
    cfg.seed = seed
    return cfg


def build_pipe(task: SyntheticTask) -> TextPipeline:
    return TextPipeline(Vocabulary(task.vocab_words), "word")


def bitext_to_plain_triples(pairs: Sequence[tuple[str, str]]) -> list[EditTriple]:
    """Translation-model training rows: no guess, no markers."""
    return [EditTriple(src, "", [], ref) for src, ref in pairs]


def decode_guesses(model: EditorModel, pipe: TextPipeline,
                   sources: Sequence[str], beam: int, workers: int) -> list[str | None]:
    outs = decode_batch(model, pipe, [DecodeRequest(source=s) for s in sources],
                        beam_size=beam, constrained=False, workers=workers)
    # an empty decode cannot serve as a guess: the editor attends over it
    return [None if o.error is not None or o.flagged or not o.text else o.text
            for o in outs]


def simulate_split(model: EditorModel, pipe: TextPipeline,
                   pairs: Sequence[tuple[str, str]], policy: MarkingPolicy,
                   beam: int, workers: int) -> tuple[list[EditTriple], int]:
    guesses = decode_guesses(model, pipe, [s for s, _ in pairs], beam, workers)
    return build_dataset(pairs, guesses, policy)


def run_seed(workdir: str | Path, seed: int, cfg: PipelineConfig) -> SeedResult:
    root = Path(workdir) / f"seed{seed}"
    for sub in ("task", "models", "editsim", "reports"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    spec = SyntheticTaskSpec(**{**cfg.task.to_dict(), "seed": seed,
                                "bijection_seed": seed + 1})
    task = make_synthetic_task(spec)
    pipe = build_pipe(task)
    pipe.vocab.save(root / "task" / "vocab.txt")
    for name in ("train", "valid", "test"):
        save_bitext(task.split(name), root / "task" / f"{name}.src",
                    root / "task" / f"{name}.tgt")

    v = len(pipe.vocab)
    logger.info("seed %d: training initial translation system", seed)
    initial = EditorModel.build(preset_config(cfg.preset, "translation", v, v),
                                seed=seed * 1000 + 1)
    train(initial, bitext_to_plain_triples(task.train),
          bitext_to_plain_triples(task.valid), pipe,
          _train_config_with(cfg.initial_train, seed * 1000 + 2),
          curve_path=root / "reports" / "initial_train.csv",
          checkpoint_path=root / "models" / "initial.ckpt")

    logger.info("seed %d: building simulated post-edits", seed)
    skipped: dict[str, int] = {}
    triples: dict[str, list[EditTriple]] = {}
    for name in ("train", "valid", "test"):
        triples[name], skipped[name] = simulate_split(
            initial, pipe, task.split(name), MarkingPolicy("full"),
            cfg.beam, cfg.workers)
        save_triples(triples[name], root / "editsim" / f"{name}.jsonl")

    def train_editor(mode: str, name: str, policy: MarkingPolicy | None,
                     init_seed: int) -> EditorModel:
        logger.info("seed %d: training %s", seed, name)
        model = EditorModel.build(preset_config(cfg.preset, mode, v, v), seed=init_seed)
        if policy is None:
            train_rows, valid_rows = triples["train"], triples["valid"]
        else:
            train_rows, _ = build_dataset(
                [(t.source, t.reference) for t in triples["train"]],
                [t.guess for t in triples["train"]], policy)
            valid_rows, _ = build_dataset(
                [(t.source, t.reference) for t in triples["valid"]],
                [t.guess for t in triples["valid"]], policy)
        train(model, train_rows, valid_rows, pipe,
              _train_config_with(cfg.editor_train, init_seed + 1),
              curve_path=root / "reports" / f"{name}_train.csv",
              checkpoint_path=root / "models" / f"{name}.ckpt")
        return model

    editor = train_editor("bilingual", "editor", None, seed * 1000 + 10)
    mono = train_editor("monolingual", "editor-mono", None, seed * 1000 + 20)

    logger.info("seed %d: scoring protocol", seed)
    protocol = run_protocol(
        {"initial": initial, "editor": editor, "editor-mono": mono},
        triples["test"], pipe, beam=cfg.beam, workers=cfg.workers)
    (root / "reports" / "protocol.json").write_text(json.dumps({
        "seed": seed, "scores": protocol.scores, "missing": protocol.missing,
        "skipped": skipped, "config_digest": cfg.digest(),
    }, indent=2, sort_keys=True) + "\n")

    curve_models: dict[str, EditorModel] = {"baseline": initial, "editor-m100": editor}
    if cfg.train_partial_models:
        m25 = train_editor("bilingual", "editor-m25",
                           MarkingPolicy("bernoulli", p=0.25, seed=seed * 1000 + 31),
                           seed * 1000 + 30)
        m50 = train_editor("bilingual", "editor-m50",
                           MarkingPolicy("bernoulli", p=0.50, seed=seed * 1000 + 41),
                           seed * 1000 + 40)
        curve_models["editor-m25"] = m25
        curve_models["editor-m50"] = m50

    logger.info("seed %d: scoring feedback curve", seed)
    curves = feedback_curve(curve_models, triples["valid"], pipe, k_max=cfg.k_max,
                            seed=seed * 1000 + 50, beam=cfg.beam, workers=cfg.workers)
    write_curve_csv(root / "reports" / "curve.csv", curves)

    return SeedResult(
        seed=seed, protocol=protocol, curves=curves, skipped=skipped,
        paths={
            "protocol": str(root / "reports" / "protocol.json"),
            "curve": str(root / "reports" / "curve.csv"),
            "models": str(root / "models"),
            "editsim": str(root / "editsim"),
        },
    )


def median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    return ordered[mid] if n % 2 else (ordered[mid - 1] + ordered[mid]) / 2.0


def run_experiment(workdir: str | Path, seeds: Sequence[int] = (0, 1, 2),
                   cfg: PipelineConfig | None = None) -> dict:
    """Run every seed and aggregate medians into summary.json."""
    cfg = cfg or PipelineConfig()
    results = [run_seed(workdir, s, cfg) for s in seeds]

    protocol_medians = {}
    for system in results[0].protocol.scores:
        protocol_medians[system] = median([r.protocol.scores[system] for r in results])
    curve_medians: dict[str, dict[str, float]] = {}
    for name in results[0].curves:
        curve_medians[name] = {
            str(pt.k): median([r.curves[name][i].bleu for r in results])
            for i, pt in enumerate(results[0].curves[name])
        }

    summary = {
        "seeds": list(seeds),
        "config_digest": cfg.digest(),
        "protocol": {
            "per_seed": {str(r.seed): r.protocol.scores for r in results},
            "median": protocol_medians,
        },
        "curve_median_bleu_by_k": curve_medians,
        "skipped": {str(r.seed): r.skipped for r in results},
    }
    out = Path(workdir) / "summary.json"
    out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
