"""Dense-matrix tensors with tape-based reverse-mode differentiation.

Every value is a 2-D array. Operations whose inputs require gradients are
appended to the active :class:`Tape`; :func:`backward` replays the tape in
reverse and accumulates (``+=``) gradients into every tensor that requires
them, so a parameter used twice receives the sum of both contributions.

Broadcasting is deliberately narrow: only the explicit row-vector and
column-vector helpers (:func:`add_row`, :func:`mul_col`) and 1x1 scalars
(:func:`scale`, :func:`mix`) broadcast.
"""

from __future__ import annotations

import itertools
import math
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .exceptions import ContractError, DimensionError

GELU_TANH_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC_COEF = 0.044715

_ids = itertools.count()


class Tensor:
    """A dense real matrix that can take part in a recorded computation."""

    def __init__(self, values, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        arr = np.array(values, dtype=dtype if dtype is not None else _infer_dtype(values))
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D, got shape {arr.shape}")
        self.values: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids)
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.values = arr
        t.grad = None
        t.requires_grad = False
        t.node_id = next(_ids)
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.size != 1:
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.values, dtype=self.values.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}({self.rows}x{self.cols}{flag})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    def __radd__(self, other):
        return add(_as_tensor(other, self), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            return mul_const(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return mul_const(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _infer_dtype(values):
    if isinstance(values, np.ndarray) and values.dtype in (np.float32, np.float64):
        return values.dtype
    return np.float64


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.full(like.shape, x, dtype=like.values.dtype))


class Tape:
    """Ordered log of differentiable operations, in the order they ran."""

    def __init__(self):
        self.records: list[tuple[tuple[Tensor, ...], Tensor, Callable]] = []
        self.enabled = True

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward_fn: Callable) -> None:
        self.records.append((tuple(inputs), output, backward_fn))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self):
        return len(self.records)


_TAPE = Tape()


def get_tape() -> Tape:
    return _TAPE


@contextmanager
def no_grad():
    """Suspend recording; tensors produced inside never require gradients."""
    previous = _TAPE.enabled
    _TAPE.enabled = False
    try:
        yield
    finally:
        _TAPE.enabled = previous


def apply_op(values: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap ``values`` as the output of an operation on ``inputs``.

    ``backward_fn(grad_out)`` must return one gradient (or ``None``) per input.
    Nothing is recorded unless the tape is enabled and some input needs grad.
    """
    out = Tensor._wrap(values)
    if _TAPE.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE.record(inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape."""
    tape = tape if tape is not None else _TAPE
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    try:
        if not loss.requires_grad:
            return
        seed = np.ones_like(loss.values)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        for inputs, output, backward_fn in reversed(tape.records):
            if output.grad is None:
                continue
            grads = backward_fn(output.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if g.shape != inp.values.shape:
                    raise DimensionError(
                        f"gradient shape {g.shape} does not match tensor shape {inp.values.shape}"
                    )
                inp.grad = g if inp.grad is None else inp.grad + g
    finally:
        tape.clear()


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# linear algebra and elementwise arithmetic
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.values, b.values

    def back(g):
        return (g @ bv.T if a.requires_grad else None), (av.T @ g if b.requires_grad else None)

    return apply_op(av @ bv, (a, b), back)


def dense(h: Tensor, weight: Tensor, bias: Tensor, act: str = "relu") -> Tensor:
    """Fused ``act(h @ weight + bias)`` for ``act`` in {relu, identity}."""
    if h.cols != weight.rows:
        raise DimensionError(f"dense: {h.shape} @ {weight.shape}")
    if bias.shape != (1, weight.cols):
        raise DimensionError(f"dense: bias {bias.shape} for output width {weight.cols}")
    hv, wv = h.values, weight.values
    pre = hv @ wv
    pre += bias.values
    if act == "relu":
        active = pre > 0
        out = pre * active
    elif act == "identity":
        active = None
        out = pre
    else:
        raise ValueError(f"dense supports relu or identity, got {act!r}")

    def back(g):
        gm = g if active is None else g * active
        return (gm @ wv.T if h.requires_grad else None), hv.T @ gm, gm.sum(axis=0, keepdims=True)

    return apply_op(out, (h, weight, bias), back)


def spmm(matrix, a: Tensor, matrix_t=None) -> Tensor:
    """Product of a constant scipy sparse matrix with a tensor.

    ``matrix_t`` may supply a precomputed CSR transpose for the backward pass.
    """
    if matrix.shape[1] != a.rows:
        raise DimensionError(f"spmm: {matrix.shape} @ {a.shape}")
    out = np.asarray(matrix @ a.values)

    def back(g):
        mt = matrix_t if matrix_t is not None else matrix.T
        return (np.asarray(mt @ g),)

    return apply_op(out, (a,), back)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return apply_op(a.values + b.values, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return apply_op(a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    av, bv = a.values, b.values
    return apply_op(av * bv, (a, b), lambda g: (g * bv, g * av))


def mul_const(a: Tensor, c: float) -> Tensor:
    return apply_op(a.values * c, (a,), lambda g: (g * c,))


def add_row(a: Tensor, row: Tensor) -> Tensor:
    """``a + row`` with a 1 x cols row vector repeated over every row."""
    if row.shape != (1, a.cols):
        raise DimensionError(f"add_row: row {row.shape} for matrix {a.shape}")
    return apply_op(a.values + row.values, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul_col(a: Tensor, col: Tensor) -> Tensor:
    """``a * col`` with an rows x 1 column vector repeated over every column."""
    if col.shape != (a.rows, 1):
        raise DimensionError(f"mul_col: column {col.shape} for matrix {a.shape}")
    av, cv = a.values, col.values
    return apply_op(av * cv, (a, col), lambda g: (g * cv, (g * av).sum(axis=1, keepdims=True)))


def weighted_sum(terms: Sequence[Tensor], weights: Tensor) -> Tensor:
    """``sum_i weights[:, i] * terms[i]`` with each weight column broadcast per row."""
    if weights.cols != len(terms):
        raise DimensionError(f"weighted_sum: {len(terms)} terms but {weights.cols} weight columns")
    for t in terms:
        if t.shape != terms[0].shape or t.rows != weights.rows:
            raise DimensionError("weighted_sum: terms must share a shape matching the weight rows")
    wv = weights.values
    tvs = [t.values for t in terms]
    out = tvs[0] * wv[:, 0:1]
    for i in range(1, len(tvs)):
        out += tvs[i] * wv[:, i:i + 1]

    def back(g):
        grads = [g * wv[:, i:i + 1] if terms[i].requires_grad else None for i in range(len(tvs))]
        gw = np.stack([np.einsum("ij,ij->i", g, tv) for tv in tvs], axis=1)
        return (*grads, gw)

    return apply_op(out, (*terms, weights), back)


def scale(a: Tensor, s: Tensor) -> Tensor:
    """Multiply every entry of ``a`` by the 1x1 tensor ``s``."""
    if s.shape != (1, 1):
        raise DimensionError(f"scale: factor must be 1x1, got {s.shape}")
    av, sv = a.values, s.values[0, 0]
    return apply_op(av * sv, (a, s), lambda g: (g * sv, np.array([[np.sum(g * av)]])))


def mix(a: Tensor, b: Tensor, w: Tensor) -> Tensor:
    """Convex combination ``w * a + (1 - w) * b`` with a 1x1 weight."""
    _check_same(a, b, "mix")
    if w.shape != (1, 1):
        raise DimensionError(f"mix: weight must be 1x1, got {w.shape}")
    av, bv, wv = a.values, b.values, w.values[0, 0]

    def back(g):
        return g * wv, g * (1.0 - wv), np.array([[np.sum(g * (av - bv))]], dtype=g.dtype)

    return apply_op(wv * av + (1.0 - wv) * bv, (a, b, w), back)


def sum_all(a: Tensor) -> Tensor:
    av = a.values
    return apply_op(np.array([[av.sum()]], dtype=av.dtype), (a,), lambda g: (np.full_like(av, g[0, 0]),))


def mean_rows(a: Tensor) -> Tensor:
    """Average over rows, giving a 1 x cols row vector."""
    n = a.rows
    return apply_op(
        a.values.mean(axis=0, keepdims=True),
        (a,),
        lambda g: (np.repeat(g / n, n, axis=0),),
    )


def column(a: Tensor, j: int) -> Tensor:
    """Column ``j`` of ``a`` as a rows x 1 tensor."""
    av = a.values

    def back(g):
        full = np.zeros_like(av)
        full[:, j] = g[:, 0]
        return (full,)

    return apply_op(av[:, j : j + 1].copy(), (a,), back)


# ---------------------------------------------------------------------------
# nonlinearities and normalization
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return special.expit(x)


def activation(a: Tensor, kind: str, slope: float = 0.01) -> Tensor:
    """Elementwise ``relu``, ``gelu`` (tanh form), ``gelu_erf``, ``swish``,
    ``leaky_relu`` or ``sigmoid``. The ReLU subgradient at 0 is 0."""
    x = a.values
    if kind == "relu":
        out = np.maximum(x, 0.0)
        deriv = (x > 0).astype(x.dtype)
    elif kind == "leaky_relu":
        out = np.where(x > 0, x, slope * x)
        deriv = np.where(x > 0, 1.0, slope).astype(x.dtype)
    elif kind == "swish":
        s = _sigmoid(x)
        out = x * s
        deriv = s * (1.0 + x * (1.0 - s))
    elif kind == "sigmoid":
        out = _sigmoid(x)
        deriv = out * (1.0 - out)
    elif kind == "gelu":
        inner = GELU_TANH_COEF * (x + GELU_CUBIC_COEF * x**3)
        t = np.tanh(inner)
        out = 0.5 * x * (1.0 + t)
        dinner = GELU_TANH_COEF * (1.0 + 3.0 * GELU_CUBIC_COEF * x**2)
        deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
    elif kind == "gelu_erf":
        out = 0.5 * x * (1.0 + special.erf(x / np.sqrt(2.0)))
        deriv = 0.5 * (1.0 + special.erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x**2) / np.sqrt(2.0 * np.pi)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    return apply_op(out, (a,), lambda g: (g * deriv,))


def relu(a: Tensor) -> Tensor:
    return activation(a, "relu")


def sigmoid(a: Tensor) -> Tensor:
    return activation(a, "sigmoid")


def softmax_rows(a: Tensor) -> Tensor:
    x = a.values
    e = np.exp(x - x.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return apply_op(p, (a,), back)


def layernorm_rows(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row over its columns, then apply ``gain`` and ``bias``."""
    if eps <= 0:
        raise ContractError("layernorm eps must be positive")
    if gain.shape != (1, a.cols) or bias.shape != (1, a.cols):
        raise DimensionError(f"layernorm: gain {gain.shape} / bias {bias.shape} for {a.shape}")
    x = a.values
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv_std = 1.0 / np.sqrt((xc**2).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv_std
    gv = gain.values

    def back(g):
        gx = g * gv
        dx = inv_std * (
            gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).mean(axis=1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True)

    return apply_op(xhat * gv + bias.values, (a, gain, bias), back)


def dropout(a: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not training or rate <= 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    mask = (rng.random(a.shape) >= rate).astype(a.values.dtype) / (1.0 - rate)
    return apply_op(a.values * mask, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# losses and estimators
# ---------------------------------------------------------------------------


def cross_entropy(logits: Tensor, labels: np.ndarray, index: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of ``labels[index]`` under row softmax.

    The softmax is fused in via log-sum-exp.
    """
    index = np.asarray(index, dtype=np.int64)
    if index.size == 0:
        raise ContractError("cross_entropy needs a nonempty node subset")
    x = logits.values[index]
    y = np.asarray(labels, dtype=np.int64)[index]
    shifted = x - x.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    m = index.size
    value = -logp[np.arange(m), y].sum() / m

    def back(g):
        p = np.exp(logp)
        p[np.arange(m), y] -= 1.0
        full = np.zeros_like(logits.values)
        np.add.at(full, index, p * (g[0, 0] / m))
        return (full,)

    return apply_op(np.array([[value]], dtype=logits.values.dtype), (logits,), back)


def straight_through(soft: Tensor, hard: np.ndarray, anchor: Optional[np.ndarray] = None) -> Tensor:
    """Forward value ``hard``, gradient passed unchanged to ``soft``.

    With ``anchor`` the forward value becomes ``hard + soft - anchor``; at
    ``soft == anchor`` this equals ``hard``, and its true derivative is the
    straight-through estimate, which makes finite-difference checks possible.
    """
    hard = np.asarray(hard, dtype=soft.values.dtype).reshape(soft.shape)
    value = hard if anchor is None else hard + soft.values - anchor
    return apply_op(value.copy(), (soft,), lambda g: (g,))
