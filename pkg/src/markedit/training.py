"""Training: negative log-likelihood on edit triples, Nesterov SGD.

The trained objective is the summed NLL of reference tokens given source
and annotated guess. Batches are packed by token count over length-sorted
buckets; batch order, initialisation and every other random choice is
seeded, so identical runs produce bitwise identical checkpoints.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .editsim import EditTriple
from .model import Batch, EditorModel
from .textpipe import BOS_ID, EOS_ID, PAD_ID, UNK_ID, TextPipeline

logger = logging.getLogger("markedit.training")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.25
    momentum: float = 0.9
    batch_tokens: int = 400
    max_updates: int = 2000
    clip_norm: float = 0.1
    seed: int = 0
    valid_interval: int = 100
    anneal_factor: float = 0.5
    anneal_patience: int = 2
    min_lr: float = 1e-4
    divergence_factor: float = 10.0
    # fraction of source tokens hidden (as unk) while training dual-input
    # models: with the source occasionally unreliable the model learns to
    # trust unmarked guess tokens and reach for the source at marked ones,
    # which is what makes its output respond to how much is marked
    source_unk_rate: float = 0.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_tokens < 1 or self.max_updates < 1 or self.valid_interval < 1:
            raise ValueError("batch_tokens, max_updates and valid_interval must be >= 1")
        if not 0.0 <= self.source_unk_rate < 1.0:
            raise ValueError(f"source_unk_rate must be in [0, 1), got {self.source_unk_rate}")


def load_train_config(path: str | Path) -> TrainConfig:
    """Read a flat key=value file; unknown keys are rejected."""
    values: dict = {}
    types = {f.name: f.type for f in fields(TrainConfig)}
    int_fields = {f.name for f in fields(TrainConfig) if f.type == "int"}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = int(val) if key in int_fields else float(val)
    return TrainConfig(**values)


@dataclass
class TrainState:
    params: dict[str, ad.Array]
    momentum: dict[str, np.ndarray]
    update: int = 0
    best_valid: float = float("inf")

    @classmethod
    def for_model(cls, model: EditorModel) -> "TrainState":
        return cls(params=model.params,
                   momentum={n: np.zeros_like(p.data) for n, p in model.params.items()})


def nll_loss(tape: ad.Tape | None, logits: ad.Array, targets: np.ndarray,
             token_mask: np.ndarray) -> ad.Array:
    """Summed negative log-likelihood; padding contributes exactly zero."""
    return ad.cross_entropy(tape, logits, targets, token_mask)


def clip_gradients(grads: Sequence[np.ndarray], clip_norm: float) -> float:
    """Scale gradients in place to the given global norm; returns the norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if clip_norm > 0 and total > clip_norm:
        factor = clip_norm / total
        for g in grads:
            g *= factor
    return total


def nesterov_step(state: TrainState, grads: dict[str, np.ndarray], lr: float,
                  momentum: float) -> None:
    """Nesterov momentum on stored lookahead parameters.

    buf <- mu * buf + g; theta <- theta - lr * (g + mu * buf). With mu = 0
    this is a plain SGD step.
    """
    for name, p in state.params.items():
        g = grads[name]
        buf = state.momentum[name]
        buf *= momentum
        buf += g
        p.data -= lr * (g + momentum * buf)
    state.update += 1


def _encode_triples(triples: Sequence[EditTriple], pipe: TextPipeline, mode: str):
    rows = []
    for t in triples:
        ref_ids = pipe.vocab.encode(pipe.tokenize(t.reference))
        row = {
            "target_in": [BOS_ID] + ref_ids,
            "target_out": ref_ids + [EOS_ID],
        }
        if mode in ("bilingual", "translation"):
            row["src"] = pipe.vocab.encode(pipe.tokenize(t.source))
        if mode in ("bilingual", "monolingual"):
            if not t.guess:
                raise ValueError(f"{mode} training needs a non-empty guess: {t!r}")
            guess = pipe.annotate(t.guess, t.markers)
            row["guess"] = guess.tokens
            row["guess_markers"] = guess.markers
        rows.append(row)
    return rows


def _pad(seqs: list[list[int]], width: int, fill: int = PAD_ID) -> np.ndarray:
    out = np.full((len(seqs), width), fill, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def make_batches(triples: Sequence[EditTriple], pipe: TextPipeline, mode: str,
                 batch_tokens: int) -> list[Batch]:
    """Pack length-sorted triples into batches of at most batch_tokens
    padded target tokens."""
    rows = _encode_triples(triples, pipe, mode)
    order = sorted(range(len(rows)),
                   key=lambda i: (len(rows[i]["target_in"]),
                                  len(rows[i].get("src", ())),
                                  len(rows[i].get("guess", ())), i))
    batches: list[Batch] = []
    bucket: list[dict] = []

    def flush():
        if not bucket:
            return
        t_in = _pad([r["target_in"] for r in bucket], max(len(r["target_in"]) for r in bucket))
        t_out = _pad([r["target_out"] for r in bucket], t_in.shape[1])
        mask = (t_out != PAD_ID).astype(np.float64)
        kw = {}
        if "src" in bucket[0]:
            kw["src_ids"] = _pad([r["src"] for r in bucket],
                                 max(len(r["src"]) for r in bucket))
        if "guess" in bucket[0]:
            width = max(len(r["guess"]) for r in bucket)
            kw["guess_ids"] = _pad([r["guess"] for r in bucket], width)
            kw["guess_markers"] = _pad([r["guess_markers"] for r in bucket], width, fill=0)
        batches.append(Batch(target_in=t_in, target_out=t_out, target_mask=mask, **kw))
        bucket.clear()

    for i in order:
        candidate_len = max([len(rows[i]["target_in"])] + [len(r["target_in"]) for r in bucket])
        if bucket and (len(bucket) + 1) * candidate_len > batch_tokens:
            flush()
        bucket.append(rows[i])
    flush()
    return batches


def batch_loss(model: EditorModel, batch: Batch, tape: ad.Tape | None
               ) -> tuple[ad.Array, float]:
    """(summed nll Array, token count)."""
    logits, _ = model.forward(tape, batch)
    total = nll_loss(tape, logits, batch.target_out, batch.target_mask)
    return total, float(batch.target_mask.sum())


def evaluate(model: EditorModel, batches: Sequence[Batch]) -> float:
    """Mean per-token negative log-likelihood."""
    loss, tokens = 0.0, 0.0
    for b in batches:
        total, n = batch_loss(model, b, None)
        loss += float(total.data)
        tokens += n
    return loss / max(tokens, 1.0)


@dataclass
class TrainResult:
    best_valid: float
    best_update: int
    updates: int
    curve: list[tuple[int, float, float, float]]  # update, train_nll, valid_nll, lr


def write_curve(path: str | Path, curve: Sequence[tuple[int, float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["update", "train_nll", "valid_nll", "lr"])
        for row in curve:
            writer.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}", f"{row[3]:.6g}"])


def train(model: EditorModel, train_triples: Sequence[EditTriple],
          valid_triples: Sequence[EditTriple], pipe: TextPipeline,
          config: TrainConfig, curve_path: str | Path | None = None,
          checkpoint_path: str | Path | None = None) -> TrainResult:
    """Optimize until the update budget runs out; keeps the parameters with
    the lowest validation NLL. Learning rate halves when validation stalls."""
    mode = model.config.mode
    train_batches = make_batches(train_triples, pipe, mode, config.batch_tokens)
    valid_batches = make_batches(valid_triples, pipe, mode, config.batch_tokens)
    if not train_batches or not valid_batches:
        raise ValueError("empty training or validation set")
    if config.source_unk_rate > 0 and model.config.uses_source:
        unk_rng = np.random.default_rng((config.seed, 7))
        for b in train_batches:
            hide = ((unk_rng.random(b.src_ids.shape) < config.source_unk_rate)
                    & (b.src_ids != PAD_ID))
            b.src_ids = np.where(hide, UNK_ID, b.src_ids)

    state = TrainState.for_model(model)
    rng = np.random.default_rng(config.seed)
    lr = config.lr
    names = list(model.params)

    initial_valid = evaluate(model, valid_batches)
    state.best_valid = initial_valid
    best_snapshot = {n: p.data.copy() for n, p in model.params.items()}
    best_update = 0
    stale_validations = 0
    curve: list[tuple[int, float, float, float]] = [(0, float("nan"), initial_valid, lr)]
    logger.info("update 0: valid_nll=%.4f", initial_valid)

    running_loss, running_tokens = 0.0, 0.0
    done = False
    while not done:
        order = rng.permutation(len(train_batches))
        for bi in order:
            batch = train_batches[bi]
            tape = ad.Tape()
            total, n_tokens = batch_loss(model, batch, tape)
            mean = ad.scale(tape, total, 1.0 / n_tokens)
            tape.backward(mean, params=model.parameters())
            running_loss += float(total.data)
            running_tokens += n_tokens

            grads = {n: model.params[n].grad for n in names}
            if any(not np.isfinite(g).all() for g in grads.values()):
                logger.warning("update %d: non-finite gradient, step skipped",
                               state.update + 1)
                for p in model.parameters():
                    p.zero_grad()
                state.update += 1
            else:
                clip_gradients(list(grads.values()), config.clip_norm)
                nesterov_step(state, grads, lr, config.momentum)
                for p in model.parameters():
                    p.zero_grad()

            if state.update % config.valid_interval == 0 or state.update >= config.max_updates:
                valid_nll = evaluate(model, valid_batches)
                train_nll = running_loss / max(running_tokens, 1.0)
                running_loss, running_tokens = 0.0, 0.0
                curve.append((state.update, train_nll, valid_nll, lr))
                logger.info("update %d: train_nll=%.4f valid_nll=%.4f lr=%.4g",
                            state.update, train_nll, valid_nll, lr)
                if valid_nll > config.divergence_factor * initial_valid:
                    raise TrainingDiverged(
                        f"validation nll {valid_nll:.3f} exceeds "
                        f"{config.divergence_factor}x the initial {initial_valid:.3f}"
                    )
                if valid_nll < state.best_valid:
                    state.best_valid = valid_nll
                    best_snapshot = {n: p.data.copy() for n, p in model.params.items()}
                    best_update = state.update
                    stale_validations = 0
                else:
                    stale_validations += 1
                    if stale_validations >= config.anneal_patience:
                        lr = max(lr * config.anneal_factor, config.min_lr)
                        stale_validations = 0
            if state.update >= config.max_updates:
                done = True
                break

    for n, p in model.params.items():
        p.data = best_snapshot[n]
    if checkpoint_path is not None:
        model.save(checkpoint_path)
    if curve_path is not None:
        write_curve(curve_path, curve)
    return TrainResult(best_valid=state.best_valid, best_update=best_update,
                       updates=state.update, curve=curve)
