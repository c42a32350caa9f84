"""Dense float64 array math with a reverse-mode gradient tape.

Everything differentiable in this package runs through one mechanism: ops
record themselves on a :class:`GradTape` while computing forward values with
numpy, and :func:`backward` replays the records in reverse to produce exact
gradients for the tape's designated parameters. An independent
:func:`finite_diff_grad` oracle is provided for checking those gradients.

All values are float64. Tensors are immutable once constructed; a tape is a
single-threaded builder.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, InternalError

Array = np.ndarray

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _as_array(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


class GradTape:
    """Ordered record of primitive operations for reverse-mode differentiation.

    Parameters are designated with :meth:`param`; every op involving a taped
    tensor appends a node, so creation order is a topological order of the
    computation DAG.
    """

    def __init__(self) -> None:
        self._nodes: list[Tensor] = []
        self._params: list[Tensor] = []

    def param(self, data, name: str | None = None) -> "Tensor":
        """Register a differentiation target (leaf) on this tape."""
        t = Tensor(_as_array(data), tape=self, name=name)
        self._params.append(t)
        return t

    def constant(self, data) -> "Tensor":
        """A taped leaf that gradients flow through but are not reported for."""
        return Tensor(_as_array(data), tape=self)

    @property
    def params(self) -> list["Tensor"]:
        return list(self._params)

    def _record(self, t: "Tensor") -> None:
        t._idx = len(self._nodes)
        self._nodes.append(t)


class Tensor:
    """Immutable float64 array node, optionally recorded on a GradTape."""

    __slots__ = ("data", "tape", "name", "_idx", "_parents", "_backward")

    def __init__(
        self,
        data: Array,
        tape: GradTape | None = None,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[Array], tuple[Array, ...]] | None = None,
        name: str | None = None,
    ) -> None:
        self.data = data
        self.tape = tape
        self.name = name
        self._parents = parents
        self._backward = backward
        self._idx = -1
        if tape is not None:
            tape._record(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, taped={self.tape is not None})"

    # Operator sugar; all routed through the module-level primitives.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _index(self, key)


def as_tensor(x) -> Tensor:
    """Coerce array-likes to constant (untaped) tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(_as_array(x))


def _merge_tape(*tensors: Tensor) -> GradTape | None:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise InternalError("operands belong to different tapes")
    return tape


def _make(data: Array, parents: tuple[Tensor, ...], backward) -> Tensor:
    tape = _merge_tape(*parents)
    if tape is None:
        return Tensor(data)
    return Tensor(data, tape=tape, parents=parents, backward=backward)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# --- elementwise and structural primitives -----------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bwd(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g: Array):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bwd(g: Array):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(out, (a, b), bwd)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def bwd(g: Array):
        return (g * 0.5 / out,)

    return _make(out, (a,), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def bwd(g: Array):
        return (g * (a.data > 0.0),)

    return _make(out, (a,), bwd)


def gelu_tanh(a) -> Tensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bwd(g: Array):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner),)

    return _make(out, (a,), bwd)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def bwd(g: Array):
        return (g.reshape(a.shape),)

    return _make(out, (a,), bwd)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    extents = [t.shape[axis] for t in ts]
    splits = np.cumsum(extents)[:-1]

    def bwd(g: Array):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(ts), bwd)


def _index(a: Tensor, key) -> Tensor:
    out = a.data[key]
    fancy = isinstance(key, (list, np.ndarray)) or (
        isinstance(key, tuple) and any(isinstance(k, (list, np.ndarray)) for k in key)
    )

    def bwd(g: Array):
        ga = np.zeros_like(a.data)
        if fancy:
            np.add.at(ga, key, g)  # duplicate indices accumulate
        else:
            ga[key] = g
        return (ga,)

    return _make(np.asarray(out, dtype=np.float64), (a,), bwd)


def take(a, indices) -> Tensor:
    """Gather along axis 0; duplicate indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.intp)
    return _index(as_tensor(a), idx)


def sum_(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum())

    def bwd(g: Array):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), bwd)


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    out = np.asarray(a.data.mean())

    def bwd(g: Array):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _make(out, (a,), bwd)


# --- matrix / row-structured primitives ---------------------------------------


def matmul(a, b) -> Tensor:
    """Standard matrix product of a 2-D (m,k) by a 2-D (k,n) operand."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g: Array):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), bwd)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    out = a.data.T.copy()

    def bwd(g: Array):
        return (g.T.copy(),)

    return _make(out, (a,), bwd)


def softmax_rows(a) -> Tensor:
    """Row-wise softmax of a 2-D array, stabilized by per-row max subtraction."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"softmax_rows expects a 2-D array, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def bwd(g: Array):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), bwd)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance (population) then apply affine.

    Accepts a length-d vector or an (n, d) matrix normalized row-wise; `gain`
    and `bias` are length-d. Requires d >= 2.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.shape[-1] < 2:
        raise DegenerateInputError(f"layer_norm needs d >= 2, got d={x.shape[-1]}")
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise DimensionError("layer_norm gain/bias must be length-d vectors")
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = gain.data * xhat + bias.data

    def bwd(g: Array):
        gxhat = g * gain.data
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        axes = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=axes) if axes else g * xhat
        gbias = g.sum(axis=axes) if axes else g.copy()
        return gx, ggain.reshape(d), gbias.reshape(d)

    return _make(out, (x, gain, bias), bwd)


# --- backward pass -------------------------------------------------------------


def backward(tape: GradTape, loss: Tensor) -> list[Array]:
    """Reverse-replay the tape from a scalar loss.

    Returns one gradient per designated parameter, in registration order;
    parameters the loss does not reach get zeros.
    """
    if loss.data.size != 1:
        raise DimensionError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, Array] = {}
    if loss.tape is tape:
        grads[loss._idx] = np.ones_like(loss.data)
    elif loss.tape is not None:
        raise InternalError("loss was recorded on a different tape")

    for node in reversed(tape._nodes):
        if node._backward is None:
            continue  # leaf; its accumulated grad stays for collection below
        g = grads.pop(node._idx, None)
        if g is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if parent.tape is None:
                continue
            if parent._idx >= node._idx:
                raise InternalError("tape order violated: parent recorded after child")
            if parent._idx in grads:
                grads[parent._idx] = grads[parent._idx] + pg
            else:
                grads[parent._idx] = pg

    return [grads.get(p._idx, np.zeros_like(p.data)) for p in tape._params]


# --- independent gradient oracle ------------------------------------------------


def finite_diff_grad(
    f: Callable[[list[Array]], float],
    params: Sequence[Array],
    step: float = 1e-5,
) -> list[Array]:
    """Central-difference gradient estimate of a pure scalar function.

    Perturbs one coordinate at a time; O(2 * total_params) evaluations of `f`.
    """
    work = [np.array(p, dtype=np.float64) for p in params]
    grads = [np.zeros_like(p) for p in work]
    for p, g in zip(work, grads):
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            f_plus = f(work)
            flat_p[i] = orig - step
            f_minus = f(work)
            flat_p[i] = orig
            flat_g[i] = (f_plus - f_minus) / (2.0 * step)
    return grads


def max_relative_error(
    analytic: Sequence[Array],
    numeric: Sequence[Array],
    floor: float = 1e-3,
) -> float:
    """Worst-case |a - n| / max(|a|, |n|, floor) across all coordinates.

    The floor turns the comparison absolute for near-zero gradients, where
    finite differences lose all relative accuracy.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom, initial=0.0)))
    return worst


# --- optimizer -----------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared timestep."""

    m: list[Array]
    v: list[Array]
    t: int = 0

    @classmethod
    def initial(cls, params: Sequence[Array]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
        )


def adam_step(
    params: Sequence[Array],
    grads: Sequence[Array],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[Array], AdamState]:
    """One bias-corrected adaptive-moment update. Pure: returns new arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"grad shape {g.shape} != param shape {p.shape}")

    t = state.t + 1
    new_params: list[Array] = []
    new_m: list[Array] = []
    new_v: list[Array] = []
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g**2
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)
