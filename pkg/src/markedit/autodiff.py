"""Reverse-mode automatic differentiation over numpy arrays.

Deliberately minimal: only the operations the editor network needs
(embedding gather, 1-d convolution, gated linear unit, linear maps,
dot-product attention, softmax, elementwise arithmetic, cross-entropy).
First-order gradients only. A Tape records ops in execution order, which
is a valid topological order, so backward is a single reverse sweep.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operation inputs have incompatible shapes."""


class Array:
    """A numpy array with a gradient slot.

    Arrays produced by ops under a tape carry ``tape_src=True`` so the
    backward sweep knows to propagate into them. Detached arrays are plain
    value holders and are safe to share between threads.
    """

    __slots__ = ("data", "grad", "requires_grad", "tape_src", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape_src = False
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def grad_or_zero(self) -> np.ndarray:
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Array(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


class Tape:
    """Ordered record of executed operations.

    ``backward`` may be called once; the sweep visits nodes exactly once in
    reverse execution order.
    """

    def __init__(self):
        self._nodes: list[Callable[[], None]] = []
        self._consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._nodes.append(backward_fn)

    def backward(self, loss: Array, params: Iterable[Array] | None = None) -> None:
        """Seed d(loss)=1 and sweep the tape in reverse.

        Parameters listed in ``params`` that did not participate in the
        computation receive an exact zero gradient.
        """
        if self._consumed:
            raise RuntimeError("backward already called on this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self._nodes):
            fn()
        if params is not None:
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)


def as_array(x) -> Array:
    return x if isinstance(x, Array) else Array(x)


def _wants_grad(*inputs: Array) -> bool:
    return any(a.requires_grad or a.tape_src for a in inputs)


def _accumulate(a: Array, g: np.ndarray) -> None:
    if not (a.requires_grad or a.tape_src):
        return
    if a.grad is None:
        a.grad = np.zeros_like(a.data)
    a.grad += g


def _emit(tape: Tape | None, out_data: np.ndarray, inputs: Sequence[Array],
          backward: Callable[[np.ndarray], None]) -> Array:
    out = Array(out_data)
    if tape is not None and _wants_grad(*inputs):
        out.tape_src = True

        def node():
            if out.grad is not None:
                backward(out.grad)

        tape.record(node)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------


def add(tape: Tape | None, a, b) -> Array:
    a, b = as_array(a), as_array(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _emit(tape, out_data, (a, b), backward)


def mul(tape: Tape | None, a, b) -> Array:
    a, b = as_array(a), as_array(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _emit(tape, out_data, (a, b), backward)


def scale(tape: Tape | None, a, c: float) -> Array:
    a = as_array(a)
    out_data = a.data * c

    def backward(g):
        _accumulate(a, g * c)

    return _emit(tape, out_data, (a,), backward)


def sum_all(tape: Tape | None, a) -> Array:
    a = as_array(a)
    out_data = np.asarray(a.data.sum())

    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _emit(tape, out_data, (a,), backward)


# ---------------------------------------------------------------------------
# lookup and linear algebra
# ---------------------------------------------------------------------------


def gather(tape: Tape | None, table, ids) -> Array:
    """Row lookup: table (N, D), integer ids of any shape -> ids.shape + (D,)."""
    table = as_array(table)
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeError(f"gather table must be 2-d, got {table.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError("gather ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"gather ids out of range [0, {table.shape[0]}): min={ids.min()}, max={ids.max()}"
        )
    out_data = table.data[ids]

    def backward(g):
        if not (table.requires_grad or table.tape_src):
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))

    return _emit(tape, out_data, (table,), backward)


def linear(tape: Tape | None, x, w, b=None) -> Array:
    """x (..., In) @ w (In, Out) + b (Out,)."""
    x, w = as_array(x), as_array(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: x {x.shape} incompatible with w {w.shape}")
    out_data = x.data @ w.data
    inputs = [x, w]
    if b is not None:
        b = as_array(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"linear: bias {b.shape} does not match w {w.shape}")
        out_data = out_data + b.data
        inputs.append(b)

    def backward(g):
        flat_g = g.reshape(-1, w.shape[1])
        flat_x = x.data.reshape(-1, w.shape[0])
        _accumulate(w, flat_x.T @ flat_g)
        _accumulate(x, (g @ w.data.T).reshape(x.shape))
        if b is not None:
            _accumulate(b, flat_g.sum(axis=0))

    return _emit(tape, out_data, tuple(inputs), backward)


def conv1d(tape: Tape | None, x, kernel, bias=None, padding: str = "same") -> Array:
    """Length-preserving 1-d convolution over time.

    x (B, T, Cin), kernel (K, Cin, Cout), bias (Cout,).
    padding 'same' centres the window (K must be odd); 'causal' left-pads
    so position t sees only positions <= t.
    """
    x, kernel = as_array(x), as_array(kernel)
    if x.data.ndim != 3 or kernel.data.ndim != 3:
        raise ShapeError(f"conv1d: x {x.shape} and kernel {kernel.shape} must be 3-d")
    K, cin, cout = kernel.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"conv1d: x channels {x.shape} do not match kernel {kernel.shape}")
    if padding == "same":
        if K % 2 == 0:
            raise ShapeError(f"conv1d: 'same' padding needs odd kernel width, got {K}")
        left, right = (K - 1) // 2, (K - 1) // 2
    elif padding == "causal":
        left, right = K - 1, 0
    else:
        raise ShapeError(f"conv1d: unknown padding {padding!r}")

    B, T, _ = x.shape
    padded = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    # windows[b, t, k, c] = padded[b, t + k, c]
    windows = np.lib.stride_tricks.sliding_window_view(padded, K, axis=1)
    windows = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(B, T, K * cin)
    kr = kernel.data.reshape(K * cin, cout)
    out_data = windows @ kr
    inputs = [x, kernel]
    if bias is not None:
        bias = as_array(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv1d: bias {bias.shape} does not match kernel {kernel.shape}")
        out_data = out_data + bias.data
        inputs.append(bias)

    def backward(g):
        flat_g = g.reshape(-1, cout)
        _accumulate(kernel, (windows.reshape(-1, K * cin).T @ flat_g).reshape(K, cin, cout))
        if x.requires_grad or x.tape_src:
            g_windows = (g @ kr.T).reshape(B, T, K, cin)
            g_padded = np.zeros_like(padded)
            for k in range(K):
                g_padded[:, k:k + T, :] += g_windows[:, :, k, :]
            _accumulate(x, g_padded[:, left:left + T, :])
        if bias is not None:
            _accumulate(bias, flat_g.sum(axis=0))

    return _emit(tape, out_data, tuple(inputs), backward)


def glu(tape: Tape | None, x) -> Array:
    """Gated linear unit over the last axis: (a, b) -> a * sigmoid(b)."""
    x = as_array(x)
    c2 = x.shape[-1]
    if c2 % 2:
        raise ShapeError(f"glu: last axis must be even, got shape {x.shape}")
    c = c2 // 2
    a_data = x.data[..., :c]
    s = _sigmoid(x.data[..., c:])
    out_data = a_data * s

    def backward(g):
        gx = np.empty_like(x.data)
        gx[..., :c] = g * s
        gx[..., c:] = g * a_data * s * (1.0 - s)
        _accumulate(x, gx)

    return _emit(tape, out_data, (x,), backward)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# attention and normalization
# ---------------------------------------------------------------------------


def attend_scores(tape: Tape | None, q, k) -> Array:
    """Plain dot products: q (B, T, E), k (B, S, E) -> scores (B, T, S)."""
    q, k = as_array(q), as_array(k)
    if q.data.ndim != 3 or k.data.ndim != 3 or q.shape[0] != k.shape[0] or q.shape[2] != k.shape[2]:
        raise ShapeError(f"attend_scores: incompatible q {q.shape} and k {k.shape}")
    out_data = np.einsum("bte,bse->bts", q.data, k.data, optimize=True)

    def backward(g):
        _accumulate(q, np.einsum("bts,bse->bte", g, k.data, optimize=True))
        _accumulate(k, np.einsum("bts,bte->bse", g, q.data, optimize=True))

    return _emit(tape, out_data, (q, k), backward)


def attend_mix(tape: Tape | None, weights, v) -> Array:
    """Weighted sum of values: weights (B, T, S), v (B, S, E) -> (B, T, E)."""
    weights, v = as_array(weights), as_array(v)
    if weights.shape[0] != v.shape[0] or weights.shape[2] != v.shape[1]:
        raise ShapeError(f"attend_mix: incompatible weights {weights.shape} and v {v.shape}")
    out_data = np.einsum("bts,bse->bte", weights.data, v.data, optimize=True)

    def backward(g):
        _accumulate(weights, np.einsum("bte,bse->bts", g, v.data, optimize=True))
        _accumulate(v, np.einsum("bts,bte->bse", weights.data, g, optimize=True))

    return _emit(tape, out_data, (weights, v), backward)


def softmax(tape: Tape | None, x, key_mask=None) -> Array:
    """Numerically stable softmax over the last axis.

    ``key_mask`` (broadcastable to x, boolean) marks valid entries; masked
    entries get exactly zero weight. Every row must keep at least one valid
    entry.
    """
    x = as_array(x)
    data = x.data
    if key_mask is not None:
        mask = np.broadcast_to(np.asarray(key_mask, dtype=bool), data.shape)
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax: a row has no valid entries under the mask")
        data = np.where(mask, data, -np.inf)
    m = data.max(axis=-1, keepdims=True)
    e = np.exp(data - m)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        _accumulate(x, out_data * (g - inner))

    return _emit(tape, out_data, (x,), backward)


def cross_entropy(tape: Tape | None, logits, targets, token_mask=None) -> Array:
    """Summed negative log-likelihood with optional padding mask.

    logits (B, T, V), integer targets (B, T), token_mask (B, T) with 1 for
    real tokens. Masked positions contribute exactly zero loss and gradient.
    """
    logits = as_array(logits)
    targets = np.asarray(targets)
    if logits.data.ndim != 3:
        raise ShapeError(f"cross_entropy: logits must be 3-d, got {logits.shape}")
    if targets.shape != logits.shape[:2]:
        raise ShapeError(
            f"cross_entropy: targets {targets.shape} do not match logits {logits.shape}"
        )
    B, T, V = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise ShapeError(f"cross_entropy: target ids out of range for vocab {V}")
    if token_mask is None:
        mask = np.ones((B, T), dtype=logits.dtype)
    else:
        mask = np.asarray(token_mask).astype(logits.dtype)
        if mask.shape != (B, T):
            raise ShapeError(f"cross_entropy: mask {mask.shape} does not match targets {targets.shape}")

    m = logits.data.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(logits.data - m).sum(axis=-1))
    picked = np.take_along_axis(logits.data, targets[..., None], axis=-1)[..., 0]
    out_data = np.asarray(((lse - picked) * mask).sum())

    def backward(g):
        probs = np.exp(logits.data - m)
        probs /= probs.sum(axis=-1, keepdims=True)
        bi, ti = np.indices(targets.shape)
        probs[bi, ti, targets] -= 1.0
        _accumulate(logits, probs * (g * mask)[..., None])

    return _emit(tape, out_data, (logits,), backward)


# ---------------------------------------------------------------------------
# parameter initialisation
# ---------------------------------------------------------------------------


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                 dtype=np.float32) -> np.ndarray:
    """Scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
