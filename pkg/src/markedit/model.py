"""The editor network.

Convolutional encoders over the source sentence and over the annotated
guess, and a causal convolutional decoder that attends to both encodings at
every layer. The guess encoder sees marker state through two separate
positional embedding tables, one for unmarked and one for marked positions.
The two attention summaries are averaged with fixed 1/2 weights; the
monolingual variant drops the source path, the plain translation variant
drops the guess path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .textpipe import BOS_ID, PAD_ID

MODES = ("bilingual", "monolingual", "translation")

CHECKPOINT_MAGIC = b"MEDK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "bilingual"
    src_vocab_size: int = 0
    tgt_vocab_size: int = 0
    embed_dim: int = 32
    out_embed_dim: int = 32
    encoder_layers: tuple[tuple[int, int], ...] = ((32, 3), (32, 3))
    decoder_layers: tuple[tuple[int, int], ...] = ((32, 3), (32, 3))
    max_positions: int = 64

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        for hidden, kernel in tuple(self.encoder_layers) + tuple(self.decoder_layers):
            if kernel % 2 == 0 or kernel < 1:
                raise ValueError(f"kernel widths must be odd, got {kernel}")
            if hidden < 1:
                raise ValueError(f"hidden size must be positive, got {hidden}")
        if self.tgt_vocab_size <= 0:
            raise ValueError("tgt_vocab_size required")
        if self.mode in ("bilingual", "translation") and self.src_vocab_size <= 0:
            raise ValueError(f"src_vocab_size required in {self.mode} mode")
        # normalise lists from JSON into tuples
        object.__setattr__(self, "encoder_layers",
                           tuple((int(h), int(k)) for h, k in self.encoder_layers))
        object.__setattr__(self, "decoder_layers",
                           tuple((int(h), int(k)) for h, k in self.decoder_layers))

    @property
    def uses_source(self) -> bool:
        return self.mode in ("bilingual", "translation")

    @property
    def uses_guess(self) -> bool:
        return self.mode in ("bilingual", "monolingual")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder_layers"] = tuple(tuple(l) for l in d["encoder_layers"])
        d["decoder_layers"] = tuple(tuple(l) for l in d["decoder_layers"])
        return cls(**d)


def preset_config(name: str, mode: str, src_vocab_size: int, tgt_vocab_size: int) -> ModelConfig:
    """Architecture presets; 'toy' trains on a laptop CPU in seconds."""
    if name == "toy":
        return ModelConfig(
            mode=mode, src_vocab_size=src_vocab_size, tgt_vocab_size=tgt_vocab_size,
            embed_dim=32, out_embed_dim=32,
            encoder_layers=((32, 3), (32, 3)), decoder_layers=((32, 3), (32, 3)),
            max_positions=64,
        )
    if name == "iwslt":
        return ModelConfig(
            mode=mode, src_vocab_size=src_vocab_size, tgt_vocab_size=tgt_vocab_size,
            embed_dim=256, out_embed_dim=256,
            encoder_layers=((256, 3),) * 4, decoder_layers=((256, 3),) * 3,
            max_positions=1024,
        )
    raise ValueError(f"unknown preset {name!r}")


def parameter_specs(config: ModelConfig) -> list[tuple[str, tuple[int, ...], int]]:
    """(name, shape, fan_in) for every parameter, in a fixed order."""
    E = config.embed_dim
    specs: list[tuple[str, tuple[int, ...], int]] = []

    def encoder(prefix: str):
        layers = config.encoder_layers
        if layers:
            specs.append((f"{prefix}_in_w", (E, layers[0][0]), E))
            specs.append((f"{prefix}_in_b", (layers[0][0],), layers[0][0]))
            h_in = layers[0][0]
            for i, (h_out, k) in enumerate(layers):
                specs.append((f"{prefix}_l{i}_conv_k", (k, h_in, 2 * h_out), k * h_in))
                specs.append((f"{prefix}_l{i}_conv_b", (2 * h_out,), k * h_in))
                if h_in != h_out:
                    specs.append((f"{prefix}_l{i}_res_w", (h_in, h_out), h_in))
                h_in = h_out
            specs.append((f"{prefix}_out_w", (h_in, E), h_in))
            specs.append((f"{prefix}_out_b", (E,), h_in))

    if config.uses_source:
        specs.append(("src_tok_emb", (config.src_vocab_size, E), E))
        specs.append(("src_pos_emb", (config.max_positions, E), E))
        encoder("src")
    if config.uses_guess:
        specs.append(("guess_tok_emb", (config.tgt_vocab_size, E), E))
        specs.append(("guess_pos_emb_0", (config.max_positions, E), E))
        specs.append(("guess_pos_emb_1", (config.max_positions, E), E))
        encoder("guess")

    specs.append(("dec_tok_emb", (config.tgt_vocab_size, E), E))
    layers = config.decoder_layers
    h_in = layers[0][0] if layers else E
    if layers:
        specs.append(("dec_in_w", (E, h_in), E))
        specs.append(("dec_in_b", (h_in,), h_in))
        for i, (h_out, k) in enumerate(layers):
            specs.append((f"dec_l{i}_conv_k", (k, h_in, 2 * h_out), k * h_in))
            specs.append((f"dec_l{i}_conv_b", (2 * h_out,), k * h_in))
            specs.append((f"dec_l{i}_attnq_w", (h_out, E), h_out))
            specs.append((f"dec_l{i}_attnq_b", (E,), h_out))
            specs.append((f"dec_l{i}_attno_w", (E, h_out), E))
            specs.append((f"dec_l{i}_attno_b", (h_out,), E))
            if h_in != h_out:
                specs.append((f"dec_l{i}_res_w", (h_in, h_out), h_in))
            h_in = h_out
    specs.append(("dec_out_w", (h_in, config.out_embed_dim), h_in))
    specs.append(("dec_out_b", (config.out_embed_dim,), h_in))
    specs.append(("logits_w", (config.out_embed_dim, config.tgt_vocab_size), config.out_embed_dim))
    specs.append(("logits_b", (config.tgt_vocab_size,), config.out_embed_dim))
    return specs


def init_parameters(config: ModelConfig, seed: int, dtype=np.float32) -> dict[str, ad.Array]:
    rng = np.random.default_rng(seed)
    params: dict[str, ad.Array] = {}
    for name, shape, fan_in in parameter_specs(config):
        params[name] = ad.Array(ad.uniform_init(rng, shape, fan_in, dtype=dtype),
                                requires_grad=True, name=name)
    return params


@dataclass
class EncoderOutput:
    """Attention keys and values, one pair per input position."""

    keys: ad.Array      # (B, S, E)
    values: ad.Array    # (B, S, E)
    mask: np.ndarray    # (B, S) bool, False at padding

    def __len__(self) -> int:
        return self.keys.shape[1]


@dataclass
class Batch:
    """Padded id arrays for one forward pass; targets are teacher-forced."""

    target_in: np.ndarray          # (B, T), starts with BOS
    target_out: np.ndarray         # (B, T)
    target_mask: np.ndarray        # (B, T) float, 0 at padding
    src_ids: np.ndarray | None = None      # (B, S)
    guess_ids: np.ndarray | None = None    # (B, G)
    guess_markers: np.ndarray | None = None  # (B, G) in {0, 1}

    @property
    def size(self) -> int:
        return self.target_in.shape[0]


class EditorModel:
    """Configured network plus its parameters."""

    def __init__(self, config: ModelConfig, params: dict[str, ad.Array]):
        expected = parameter_specs(config)
        if [n for n, _, _ in expected] != list(params.keys()):
            raise ValueError("parameter names do not match the configuration")
        for name, shape, _ in expected:
            if tuple(params[name].shape) != shape:
                raise ValueError(
                    f"parameter {name} has shape {params[name].shape}, expected {shape}"
                )
        self.config = config
        self.params = params

    @classmethod
    def build(cls, config: ModelConfig, seed: int, dtype=np.float32) -> "EditorModel":
        return cls(config, init_parameters(config, seed, dtype))

    def parameters(self) -> list[ad.Array]:
        return list(self.params.values())

    @property
    def dtype(self):
        return self.params["dec_tok_emb"].dtype

    # -- embedding ---------------------------------------------------------

    def _check_positions(self, lengths: np.ndarray, what: str) -> None:
        limit = self.config.max_positions
        over = np.nonzero(lengths > limit)[0]
        if over.size:
            raise ValueError(
                f"{what} sentence {int(over[0])} has {int(lengths[int(over[0])])} tokens, "
                f"over the {limit}-position limit"
            )

    def embed_guess(self, tape: ad.Tape | None, guess_ids: np.ndarray,
                    markers: np.ndarray) -> ad.Array:
        """Token embedding plus the positional table selected by the marker."""
        if guess_ids.shape != markers.shape:
            raise ValueError(f"ids {guess_ids.shape} vs markers {markers.shape}")
        B, G = guess_ids.shape
        lengths = (guess_ids != PAD_ID).sum(axis=1)
        self._check_positions(lengths, "guess")
        positions = np.broadcast_to(np.arange(G), (B, G))
        tok = ad.gather(tape, self.params["guess_tok_emb"], guess_ids)
        pos0 = ad.gather(tape, self.params["guess_pos_emb_0"], positions)
        pos1 = ad.gather(tape, self.params["guess_pos_emb_1"], positions)
        c = markers.astype(self.dtype)[..., None]
        pos = ad.add(tape, ad.mul(tape, pos0, 1.0 - c), ad.mul(tape, pos1, c))
        return ad.add(tape, tok, pos)

    def _embed_source(self, tape, src_ids: np.ndarray) -> ad.Array:
        B, S = src_ids.shape
        lengths = (src_ids != PAD_ID).sum(axis=1)
        self._check_positions(lengths, "source")
        positions = np.broadcast_to(np.arange(S), (B, S))
        tok = ad.gather(tape, self.params["src_tok_emb"], src_ids)
        pos = ad.gather(tape, self.params["src_pos_emb"], positions)
        return ad.add(tape, tok, pos)

    # -- encoders ----------------------------------------------------------

    def _encoder_stack(self, tape, prefix: str, emb: ad.Array,
                       mask: np.ndarray) -> EncoderOutput:
        p = self.params
        fmask = mask.astype(self.dtype)[..., None]
        e = ad.mul(tape, emb, fmask)
        layers = self.config.encoder_layers
        if not layers:
            return EncoderOutput(keys=e, values=ad.add(tape, e, e), mask=mask)
        h = ad.linear(tape, e, p[f"{prefix}_in_w"], p[f"{prefix}_in_b"])
        h = ad.mul(tape, h, fmask)
        h_in_dim = layers[0][0]
        for i, (h_out, _) in enumerate(layers):
            x = ad.glu(tape, ad.conv1d(tape, h, p[f"{prefix}_l{i}_conv_k"],
                                       p[f"{prefix}_l{i}_conv_b"], padding="same"))
            res = h if h_in_dim == h_out else ad.linear(tape, h, p[f"{prefix}_l{i}_res_w"])
            h = ad.mul(tape, ad.add(tape, x, res), fmask)
            h_in_dim = h_out
        z = ad.linear(tape, h, p[f"{prefix}_out_w"], p[f"{prefix}_out_b"])
        z = ad.mul(tape, z, fmask)
        return EncoderOutput(keys=z, values=ad.add(tape, z, e), mask=mask)

    def encode_source(self, tape, src_ids: np.ndarray) -> EncoderOutput:
        if not self.config.uses_source:
            raise ValueError(f"source encoding not available in {self.config.mode} mode")
        if src_ids.shape[1] == 0:
            raise ValueError("cannot encode a zero-length source")
        return self._encoder_stack(tape, "src", self._embed_source(tape, src_ids),
                                   src_ids != PAD_ID)

    def encode_guess(self, tape, guess_ids: np.ndarray, markers: np.ndarray) -> EncoderOutput:
        if not self.config.uses_guess:
            raise ValueError(f"guess encoding not available in {self.config.mode} mode")
        if guess_ids.shape[1] == 0:
            raise ValueError("cannot encode a zero-length guess")
        return self._encoder_stack(tape, "guess",
                                   self.embed_guess(tape, guess_ids, markers),
                                   guess_ids != PAD_ID)

    # -- attention ---------------------------------------------------------

    def dual_attend(self, tape, query: ad.Array, source: EncoderOutput | None,
                    guess: EncoderOutput | None) -> tuple[ad.Array, dict[str, np.ndarray]]:
        """Attend to whichever encodings exist; average the two summaries.

        With both paths the result is 1/2 source summary + 1/2 guess summary;
        with a single path it is that path's summary unscaled.
        """
        if source is None and guess is None:
            raise ValueError("dual_attend needs at least one encoder output")
        summaries = []
        trace: dict[str, np.ndarray] = {}
        for name, enc in (("source", source), ("guess", guess)):
            if enc is None:
                continue
            if len(enc) == 0:
                raise ValueError(f"zero-length {name} encoder output")
            scores = ad.attend_scores(tape, query, enc.keys)
            attn = ad.softmax(tape, scores, key_mask=enc.mask[:, None, :])
            trace[name] = attn.data
            summaries.append(ad.attend_mix(tape, attn, enc.values))
        if len(summaries) == 2:
            combined = ad.add(tape, ad.scale(tape, summaries[0], 0.5),
                              ad.scale(tape, summaries[1], 0.5))
        else:
            combined = summaries[0]
        return combined, trace

    # -- full forward ------------------------------------------------------

    def forward(self, tape: ad.Tape | None, batch: Batch,
                collect_attention: bool = False
                ) -> tuple[ad.Array, list[dict[str, np.ndarray]]]:
        """Teacher-forced forward pass.

        Returns logits (B, T, V) and, when requested, per-layer attention
        weights for every target step.
        """
        cfg = self.config
        p = self.params
        if (batch.target_in[:, 0] != BOS_ID).any():
            raise ValueError("target prefix must start with the beginning-of-sentence id")
        source = self.encode_source(tape, batch.src_ids) if cfg.uses_source else None
        guess = (self.encode_guess(tape, batch.guess_ids, batch.guess_markers)
                 if cfg.uses_guess else None)

        emb = ad.gather(tape, p["dec_tok_emb"], batch.target_in)
        trace: list[dict[str, np.ndarray]] = []
        layers = cfg.decoder_layers
        if not layers:
            h = emb
        else:
            h = ad.linear(tape, emb, p["dec_in_w"], p["dec_in_b"])
            h_in_dim = layers[0][0]
            for i, (h_out, _) in enumerate(layers):
                x = ad.glu(tape, ad.conv1d(tape, h, p[f"dec_l{i}_conv_k"],
                                           p[f"dec_l{i}_conv_b"], padding="causal"))
                q = ad.add(tape, ad.linear(tape, x, p[f"dec_l{i}_attnq_w"],
                                           p[f"dec_l{i}_attnq_b"]), emb)
                summary, tr = self.dual_attend(tape, q, source, guess)
                if collect_attention:
                    trace.append(tr)
                ctx = ad.linear(tape, summary, p[f"dec_l{i}_attno_w"], p[f"dec_l{i}_attno_b"])
                x = ad.add(tape, x, ctx)
                res = h if h_in_dim == h_out else ad.linear(tape, h, p[f"dec_l{i}_res_w"])
                h = ad.add(tape, x, res)
                h_in_dim = h_out
        out = ad.linear(tape, h, p["dec_out_w"], p["dec_out_b"])
        logits = ad.linear(tape, out, p["logits_w"], p["logits_b"])
        return logits, trace

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.config, self.params)

    @classmethod
    def load(cls, path: str | Path) -> "EditorModel":
        config, params = load_checkpoint(path)
        return cls(config, params)


def save_checkpoint(path: str | Path, config: ModelConfig,
                    params: dict[str, ad.Array]) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "params": [
            {"name": name, "shape": list(a.shape), "dtype": str(a.dtype)}
            for name, a in params.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in params.values():
            fh.write(np.ascontiguousarray(a.data).tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, ad.Array]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header['version']}")
        config = ModelConfig.from_dict(header["config"])
        expected = {name: shape for name, shape, _ in parameter_specs(config)}
        params: dict[str, ad.Array] = {}
        for entry in header["params"]:
            name, shape, dtype = entry["name"], tuple(entry["shape"]), np.dtype(entry["dtype"])
            if name not in expected:
                raise ValueError(f"{path}: unexpected parameter {name}")
            if shape != expected[name]:
                raise ValueError(
                    f"{path}: parameter {name} has shape {shape}, config implies {expected[name]}"
                )
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype).reshape(shape)
            params[name] = ad.Array(data.copy(), requires_grad=True, name=name)
        missing = set(expected) - {e["name"] for e in header["params"]}
        if missing:
            raise ValueError(f"{path}: missing parameters {sorted(missing)}")
    return config, params
