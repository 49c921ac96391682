"""Command-line surface covering the whole pipeline.

Every subcommand writes its declared artifacts and exits 0, or prints a
one-line diagnostic to stderr, removes partial outputs, and exits 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .decoding import DecodeRequest, decode_batch
from .editsim import MarkingPolicy, load_triples, save_triples
from .evaluation import (SyntheticTaskSpec, feedback_curve, make_synthetic_task,
                         plot_curves, read_curve_csv, run_protocol, save_bitext,
                         write_curve_csv)
from .model import EditorModel, preset_config
from .paraphrase import MarkerModel, fit_marker_model, paraphrase
from .pipeline import (PipelineConfig, bitext_to_plain_triples, run_experiment,
                       simulate_split)
from .textpipe import BpeSegmenter, TextPipeline, Vocabulary
from .training import TrainConfig, load_train_config, train

logger = logging.getLogger("markedit.cli")


def _load_pipe(vocab_path: str, merges_path: str | None = None) -> TextPipeline:
    vocab = Vocabulary.load(vocab_path)
    if merges_path:
        return TextPipeline(vocab, "bpe", BpeSegmenter.load(merges_path))
    return TextPipeline(vocab, "word")


def _train_config(args) -> TrainConfig:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _policy(text: str, seed: int) -> MarkingPolicy:
    if text == "full":
        return MarkingPolicy("full")
    kind, _, value = text.partition(":")
    if kind == "bernoulli":
        return MarkingPolicy("bernoulli", p=float(value), seed=seed)
    if kind == "top-k":
        return MarkingPolicy("top_k", k=int(value), seed=seed)
    raise ValueError(f"unknown policy {text!r} (use full, bernoulli:P or top-k:K)")


def cmd_make_task(args, outputs: list[Path]) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticTaskSpec(
        vocab_size=args.vocab_size, min_len=args.min_len, max_len=args.max_len,
        seed=args.seed if args.seed is not None else 0,
        bijection_seed=(args.seed if args.seed is not None else 0) + 1,
        reorder=args.reorder, train_size=args.train_size,
        valid_size=args.valid_size, test_size=args.test_size,
        corruption_rate=args.corruption_rate,
    )
    task = make_synthetic_task(spec)
    outputs.append(out / "task.json")
    (out / "task.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    vocab = Vocabulary(task.vocab_words)
    outputs.append(out / "vocab.txt")
    vocab.save(out / "vocab.txt")
    for name in ("train", "valid", "test"):
        outputs.extend([out / f"{name}.src", out / f"{name}.tgt"])
        save_bitext(task.split(name), out / f"{name}.src", out / f"{name}.tgt")
    print(f"task written to {out}")


def _load_bitext_split(task_dir: Path, name: str) -> list[tuple[str, str]]:
    from .evaluation import load_bitext
    return load_bitext(task_dir / f"{name}.src", task_dir / f"{name}.tgt")


def cmd_train_initial(args, outputs: list[Path]) -> None:
    task_dir = Path(args.task)
    pipe = _load_pipe(task_dir / "vocab.txt")
    v = len(pipe.vocab)
    cfg = _train_config(args)
    model = EditorModel.build(preset_config(args.preset, "translation", v, v),
                              seed=cfg.seed)
    outputs.append(Path(args.out))
    curve = Path(args.curve) if args.curve else None
    if curve:
        outputs.append(curve)
    result = train(model, bitext_to_plain_triples(_load_bitext_split(task_dir, "train")),
                   bitext_to_plain_triples(_load_bitext_split(task_dir, "valid")),
                   pipe, cfg, curve_path=curve, checkpoint_path=args.out)
    print(f"initial model: valid_nll={result.best_valid:.4f} -> {args.out}")


def cmd_build_editsim(args, outputs: list[Path]) -> None:
    task_dir = Path(args.task)
    pipe = _load_pipe(task_dir / "vocab.txt")
    model = EditorModel.load(args.model)
    policy = _policy(args.policy, args.seed if args.seed is not None else 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test"):
        pairs = _load_bitext_split(task_dir, name)
        triples, skipped = simulate_split(model, pipe, pairs, policy,
                                          args.beam, args.workers)
        outputs.append(out / f"{name}.jsonl")
        save_triples(triples, out / f"{name}.jsonl")
        print(f"{name}: {len(triples)} triples, {skipped} skipped")


def cmd_train_editor(args, outputs: list[Path]) -> None:
    task_dir = Path(args.task)
    pipe = _load_pipe(task_dir / "vocab.txt")
    v = len(pipe.vocab)
    cfg = _train_config(args)
    editsim = Path(args.editsim)
    model = EditorModel.build(preset_config(args.preset, args.mode, v, v),
                              seed=cfg.seed)
    outputs.append(Path(args.out))
    curve = Path(args.curve) if args.curve else None
    if curve:
        outputs.append(curve)
    result = train(model, load_triples(editsim / "train.jsonl"),
                   load_triples(editsim / "valid.jsonl"), pipe, cfg,
                   curve_path=curve, checkpoint_path=args.out)
    print(f"{args.mode} editor: valid_nll={result.best_valid:.4f} -> {args.out}")


def cmd_decode(args, outputs: list[Path]) -> None:
    pipe = _load_pipe(Path(args.task) / "vocab.txt", args.merges)
    model = EditorModel.load(args.model)
    triples = load_triples(args.input)
    requests = [DecodeRequest(source=t.source or None, guess=t.guess or None,
                              markers=t.markers if t.guess else None)
                for t in triples]
    outs = decode_batch(model, pipe, requests, beam_size=args.beam,
                        constrained=not args.unconstrained,
                        collect_attention=args.attention, workers=args.workers)
    outputs.append(Path(args.out))
    with open(args.out, "w", encoding="utf-8") as fh:
        for o in outs:
            fh.write(json.dumps(o.to_json_dict(), ensure_ascii=False) + "\n")
    failures = sum(1 for o in outs if o.error is not None)
    print(f"decoded {len(outs)} ({failures} failures) -> {args.out}")


def cmd_protocol(args, outputs: list[Path]) -> None:
    pipe = _load_pipe(Path(args.task) / "vocab.txt")
    models = {"initial": EditorModel.load(args.initial)}
    if args.editor:
        models["editor"] = EditorModel.load(args.editor)
    if args.mono:
        models["editor-mono"] = EditorModel.load(args.mono)
    triples = load_triples(Path(args.editsim) / "test.jsonl")
    report = run_protocol(models, triples, pipe, beam=args.beam, workers=args.workers)
    payload = {"scores": report.scores, "missing": report.missing}
    outputs.append(Path(args.out))
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for system, bleu in report.ordered_rows():
        print(f"{system:12s} BLEU4 {bleu:6.2f}")
    if report.missing:
        print(f"missing rows: {', '.join(report.missing)}")


def cmd_curve(args, outputs: list[Path]) -> None:
    pipe = _load_pipe(Path(args.task) / "vocab.txt")
    models = {"baseline": EditorModel.load(args.initial)}
    for name, path in (("editor-m25", args.m25), ("editor-m50", args.m50),
                       ("editor-m100", args.m100)):
        if path:
            models[name] = EditorModel.load(path)
    triples = load_triples(Path(args.editsim) / "valid.jsonl")
    curves = feedback_curve(models, triples, pipe, k_max=args.k_max,
                            seed=args.seed if args.seed is not None else 0,
                            beam=args.beam, workers=args.workers)
    outputs.append(Path(args.out))
    write_curve_csv(args.out, curves)
    if args.svg:
        outputs.append(Path(args.svg))
        plot_curves(curves, args.svg)
    print(f"curve -> {args.out}" + (f" and {args.svg}" if args.svg else ""))


def cmd_fit_markers(args, outputs: list[Path]) -> None:
    triples = load_triples(args.input)
    model = fit_marker_model(triples)
    outputs.append(Path(args.out))
    model.save(args.out)
    print(f"marker model over {len(model)} word types -> {args.out}")


def cmd_paraphrase(args, outputs: list[Path]) -> None:
    pipe = _load_pipe(Path(args.task) / "vocab.txt", args.merges)
    model = EditorModel.load(args.model)
    marker_model = MarkerModel.load(args.markers)
    result = paraphrase(args.text, model, marker_model, args.tau, pipe,
                        beam=args.beam)
    payload = {"input": args.text, "markers": result.markers,
               "output": result.output, "boldness": result.boldness,
               "flagged": result.flagged}
    if args.out:
        outputs.append(Path(args.out))
        Path(args.out).write_text(json.dumps(payload, indent=2,
                                             ensure_ascii=False) + "\n")
    print(json.dumps(payload, ensure_ascii=False))


def cmd_serve(args, outputs: list[Path]) -> None:
    from .service import create_app

    pipe = _load_pipe(Path(args.task) / "vocab.txt", args.merges)
    models = {}
    for entry in args.model:
        model_id, _, path = entry.partition("=")
        if not path:
            model_id, path = Path(entry).stem, entry
        models[model_id] = EditorModel.load(path)
    marker_model = MarkerModel.load(args.markers) if args.markers else None
    app = create_app(models, pipe, marker_model=marker_model,
                     default_beam=args.beam, ui_dir=args.ui)
    import uvicorn
    uvicorn.run(app, host=args.host, port=args.port)


def cmd_experiment(args, outputs: list[Path]) -> None:
    cfg = PipelineConfig()
    if not args.partial_models:
        cfg.train_partial_models = False
    cfg.workers = args.workers
    seeds = [int(s) for s in args.seeds.split(",")]
    outputs.append(Path(args.out) / "summary.json")
    summary = run_experiment(args.out, seeds=seeds, cfg=cfg)
    print(json.dumps(summary["protocol"]["median"], indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markedit",
                                     description="marker-guided sentence rewriting")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_train_flags(p):
        p.add_argument("--config", help="flat key=value training config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", default="toy", choices=["toy", "iwslt"])
        p.add_argument("--curve", help="write the training curve CSV here")

    p = sub.add_parser("make-task", help="generate the synthetic bitext")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--train-size", type=int, default=8000)
    p.add_argument("--valid-size", type=int, default=500)
    p.add_argument("--test-size", type=int, default=500)
    p.add_argument("--reorder", default="adjacent_swap",
                   choices=["adjacent_swap", "none"])
    p.add_argument("--corruption-rate", type=float, default=0.3)
    p.set_defaults(fn=cmd_make_task)

    p = sub.add_parser("train-initial", help="train the initial translation system")
    p.add_argument("--task", required=True)
    p.add_argument("--out", required=True)
    common_train_flags(p)
    p.set_defaults(fn=cmd_train_initial)

    p = sub.add_parser("build-editsim", help="decode and mark simulated post-edits")
    p.add_argument("--task", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--policy", default="full")
    p.add_argument("--seed", type=int)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_build_editsim)

    p = sub.add_parser("train-editor", help="train a rewriting model on edit triples")
    p.add_argument("--task", required=True)
    p.add_argument("--editsim", required=True)
    p.add_argument("--mode", default="bilingual",
                   choices=["bilingual", "monolingual"])
    p.add_argument("--out", required=True)
    common_train_flags(p)
    p.set_defaults(fn=cmd_train_editor)

    p = sub.add_parser("decode", help="constrained decoding over edit triples")
    p.add_argument("--task", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="edit triples JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--unconstrained", action="store_true")
    p.add_argument("--attention", action="store_true")
    p.add_argument("--merges", help="BPE merge table for subword decoding")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("protocol", help="score the four-system comparison")
    p.add_argument("--task", required=True)
    p.add_argument("--editsim", required=True)
    p.add_argument("--initial", required=True)
    p.add_argument("--editor")
    p.add_argument("--mono")
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_protocol)

    p = sub.add_parser("curve", help="partial-feedback curve, CSV and optional SVG")
    p.add_argument("--task", required=True)
    p.add_argument("--editsim", required=True)
    p.add_argument("--initial", required=True)
    p.add_argument("--m25")
    p.add_argument("--m50")
    p.add_argument("--m100")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--seed", type=int)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_curve)

    p = sub.add_parser("fit-markers", help="estimate per-word edit probabilities")
    p.add_argument("--input", required=True, help="fully marked triples JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fit_markers)

    p = sub.add_parser("paraphrase", help="auto-mark and rewrite one sentence")
    p.add_argument("--task", required=True)
    p.add_argument("--model", required=True, help="monolingual checkpoint")
    p.add_argument("--markers", required=True, help="marker model file")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--merges")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_paraphrase)

    p = sub.add_parser("serve", help="run the HTTP editing service")
    p.add_argument("--task", required=True)
    p.add_argument("--model", action="append", required=True,
                   help="id=checkpoint.ckpt (repeatable)")
    p.add_argument("--markers", help="marker model file for /paraphrase")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--merges")
    p.add_argument("--ui", help="serve this directory as the web UI")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("experiment", help="full pipeline: task, training, reports")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--no-partial-models", dest="partial_models",
                   action="store_false")
    p.set_defaults(fn=cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", datefmt="%H:%M:%S")
    outputs: list[Path] = []
    try:
        args.fn(args, outputs)
        return 0
    except Exception as exc:
        for path in outputs:
            if path.exists() and path.is_file():
                path.unlink()
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
