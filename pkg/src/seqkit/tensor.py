"""
Dense tensors and reverse-mode differentiation.

Every value in seqkit is a :class:`Tensor`: an immutable, row-major numpy
array with shape metadata. Primitive ops compute eagerly. While a
:class:`Tape` is active, each op that consumes a tracked tensor appends a
record holding its vector-Jacobian product (VJP); :func:`backward` replays
those records in exact reverse order and accumulates gradients keyed by
tensor identity.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from contextvars import ContextVar, Token
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy.special import expit, ndtr

from seqkit.errors import GradientError, ShapeError

Array = npt.NDArray[Any]
VJP = Callable[[Array], Sequence["Array | None"]]

_uid_counter = itertools.count(1)
_active_tape: ContextVar[Tape | None] = ContextVar("seqkit_active_tape", default=None)

_SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
_INV_SQRT_2PI = 0.3989422804014327


def _float_array(data: Any, dtype: npt.DTypeLike | None) -> Array:
    arr = np.array(data, dtype=dtype, copy=True)
    if arr.dtype not in _SUPPORTED_DTYPES:
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """
    Immutable dense n-dimensional array of reals.

    ``product(shape) == size`` always holds and every extent is at least 1;
    rank 0 is a scalar. Use :meth:`numpy` to get a writable copy.
    """

    __slots__ = ("_data", "_uid", "requires_grad", "name")
    __array_priority__ = 1000

    def __init__(
        self,
        data: Any,
        *,
        dtype: npt.DTypeLike | None = None,
        requires_grad: bool = False,
        name: str | None = None,
    ):
        arr = _float_array(data, dtype)
        if any(extent < 1 for extent in arr.shape):
            raise ShapeError(f"Tensor extents must all be >= 1, got shape {arr.shape}")
        arr.flags.writeable = False
        self._data = arr
        self._uid = next(_uid_counter)
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr: Array) -> Tensor:
        """Adopt a freshly computed array without copying it."""
        out = cls.__new__(cls)
        if arr.dtype not in _SUPPORTED_DTYPES:
            arr = arr.astype(np.float64)
        arr = np.asarray(arr)
        if arr.flags.writeable:
            arr.flags.writeable = False
        out._data = arr
        out._uid = next(_uid_counter)
        out.requires_grad = False
        out.name = None
        return out

    @property
    def data(self) -> Array:
        """Read-only view of the underlying array."""
        return self._data

    @property
    def uid(self) -> int:
        return self._uid

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self._data.shape)

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self._data.dtype

    def numpy(self) -> Array:
        """Writable copy of the values."""
        return self._data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(()))

    def __len__(self) -> int:
        if self.ndim == 0:
            raise TypeError("len() of a scalar tensor")
        return self.shape[0]

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __add__(self, other: Tensor | float) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Tensor | float) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | float) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Tensor | float) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | float) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Tensor | float) -> Tensor:
        return mul(other, self)

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __getitem__(self, key: Any) -> Tensor:
        return index(self, key)

    def sum(self, axis: int | tuple[int, ...] | None = None) -> Tensor:
        return sum_(self, axis)

    def mean(self, axis: int | tuple[int, ...] | None = None) -> Tensor:
        return mean(self, axis)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def permute(self, *axes: int) -> Tensor:
        return permute(self, axes)


class Parameter(Tensor):
    """
    A trainable tensor.

    Its value is replaced only between forward/backward phases (by the
    optimizer or a checkpoint load); identity, and with it the gradient
    slot, survives the replacement.
    """

    __slots__ = ()

    def __init__(self, data: Any, *, dtype: npt.DTypeLike | None = None, name: str | None = None):
        super().__init__(data, dtype=dtype, requires_grad=True, name=name)

    def assign(self, value: Array | Tensor) -> None:
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        if tuple(arr.shape) != self.shape:
            raise ShapeError(f"Cannot assign shape {tuple(arr.shape)} to parameter {self.shape}")
        arr = np.array(arr, dtype=self.dtype, copy=True)
        arr.flags.writeable = False
        self._data = arr


@dataclass(frozen=True)
class TapeRecord:
    """One primitive op as executed in the forward pass."""

    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


@dataclass
class Tape:
    """
    Linear record of primitive ops executed while the tape is active.

    Use as a context manager. Parameters (``requires_grad``) are tracked
    automatically unless ``track_parameters`` is off; call :meth:`watch` for
    any other input whose gradient is wanted (images, for example).
    """

    track_parameters: bool = True
    records: list[TapeRecord] = field(default_factory=list)
    _tracked: set[int] = field(default_factory=set)
    _token: Token[Tape | None] | None = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *args: object) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._tracked.add(t.uid)

    def is_tracked(self, t: Tensor) -> bool:
        return (self.track_parameters and t.requires_grad) or t.uid in self._tracked

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, vjp: VJP) -> None:
        self._tracked.add(output.uid)
        self.records.append(TapeRecord(op, tuple(inputs), output, vjp))

    def backward(self, output: Tensor, keep: Iterable[Tensor] = ()) -> Gradients:
        return backward(self, output, keep)


class Gradients(Mapping[int, Array]):
    """Gradient accumulators keyed by tensor identity (``Tensor.uid``)."""

    def __init__(self, grads: dict[int, Array]):
        self._grads = grads

    def __getitem__(self, key: int) -> Array:
        return self._grads[key]

    def __iter__(self) -> Iterator[int]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def of(self, tensor: Tensor) -> Array:
        """Gradient for ``tensor``; zeros when no recorded op depended on it."""
        grad = self._grads.get(tensor.uid)
        if grad is None:
            return np.zeros(tensor.shape, dtype=tensor.dtype)
        return grad

    def by_name(self, named: Mapping[str, Tensor]) -> dict[str, Array]:
        return {name: self.of(t) for name, t in named.items()}


def active_tape() -> Tape | None:
    return _active_tape.get()


def apply_op(op: str, inputs: Sequence[Tensor], result: Array, vjp: VJP) -> Tensor:
    """
    Wrap ``result`` as the output of primitive ``op`` and record it.

    ``vjp`` maps the output gradient to one gradient (or None) per input,
    each shaped like its input.
    """
    out = Tensor._wrap(result)
    tape = _active_tape.get()
    if tape is not None and any(tape.is_tracked(t) for t in inputs):
        tape.record(op, inputs, out, vjp)
    return out


def backward(tape: Tape, output: Tensor, keep: Iterable[Tensor] = ()) -> Gradients:
    """
    Gradients of scalar ``output`` with respect to every tracked tensor.

    Records are visited in exact reverse order of execution. Gradients of
    intermediate results are dropped once consumed unless listed in ``keep``.
    """
    if output.size != 1:
        raise GradientError(
            f"backward needs a scalar output, got shape {output.shape}; reduce with sum() first"
        )
    if not tape.is_tracked(output):
        raise GradientError("Output was not computed from any tracked tensor under this tape")

    keep_ids = {t.uid for t in keep}
    grads: dict[int, Array] = {output.uid: np.ones(output.shape, dtype=output.dtype)}

    for rec in reversed(tape.records):
        uid = rec.output.uid
        g = grads.get(uid) if uid in keep_ids else grads.pop(uid, None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g), strict=True):
            if gi is None or not tape.is_tracked(inp):
                continue
            prev = grads.get(inp.uid)
            grads[inp.uid] = gi if prev is None else prev + gi

    return Gradients(grads)


def as_tensor(value: Tensor | float | int | Array, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    if lead > 0:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from e


# -- elementwise arithmetic ---------------------------------------------------------


def add(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta = as_tensor(a, b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, ta)
    _broadcast_shape(ta, tb, "add")

    def vjp(g: Array) -> tuple[Array, Array]:
        return _unbroadcast(g, ta.shape), _unbroadcast(g, tb.shape)

    return apply_op("add", (ta, tb), ta.data + tb.data, vjp)


def sub(a: Tensor | float, b: Tensor | float) -> Tensor:
    ta = as_tensor(a, b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, ta)
    _broadcast_shape(ta, tb, "sub")

    def vjp(g: Array) -> tuple[Array, Array]:
        return _unbroadcast(g, ta.shape), _unbroadcast(-g, tb.shape)

    return apply_op("sub", (ta, tb), ta.data - tb.data, vjp)


def mul(a: Tensor | float, b: Tensor | float) -> Tensor:
    """Broadcasting elementwise product."""
    ta = as_tensor(a, b if isinstance(b, Tensor) else None)
    tb = as_tensor(b, ta)
    _broadcast_shape(ta, tb, "mul")
    da, db = ta.data, tb.data

    def vjp(g: Array) -> tuple[Array, Array]:
        return _unbroadcast(g * db, ta.shape), _unbroadcast(g * da, tb.shape)

    return apply_op("mul", (ta, tb), da * db, vjp)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two tensors of identical shape."""
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    da, db = a.data, b.data

    def vjp(g: Array) -> tuple[Array, Array]:
        return g * db, g * da

    return apply_op("hadamard", (a, b), da * db, vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    def vjp(g: Array) -> tuple[Array]:
        return (g * factor,)

    return apply_op("scale", (x,), x.data * x.dtype.type(factor), vjp)


# -- linear algebra ------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a[m×k]`` and ``b[k×n]``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    da, db = a.data, b.data

    def vjp(g: Array) -> tuple[Array, Array]:
        return g @ db.T, da.T @ g

    return apply_op("matmul", (a, b), da @ db, vjp)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """
    Pointwise affine map over the last axis: ``x @ weight.T + bias``.

    ``weight`` is stored ``[out, in]``; leading axes of ``x`` are batch axes.
    """
    if weight.ndim != 2 or x.ndim < 1 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
    dx, dw = x.data, weight.data
    out = dx @ dw.T
    if bias is not None:
        out = out + bias.data
    in_features = weight.shape[1]
    out_features = weight.shape[0]

    def vjp(g: Array) -> tuple[Array | None, ...]:
        g2 = g.reshape(-1, out_features)
        gx = g @ dw
        gw = g2.T @ dx.reshape(-1, in_features)
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return apply_op("linear", inputs, out, vjp)


# -- nonlinearities ------------------------------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)

    def vjp(g: Array) -> tuple[Array]:
        return (g * y * (1 - y),)

    return apply_op("sigmoid", (x,), y, vjp)


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def vjp(g: Array) -> tuple[Array]:
        return (g * (1 - y * y),)

    return apply_op("tanh", (x,), y, vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU ``x·Φ(x)`` with Φ the standard normal CDF."""
    dx = x.data
    cdf = ndtr(dx).astype(x.dtype, copy=False)

    def vjp(g: Array) -> tuple[Array]:
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * dx * dx)
        return (g * (cdf + dx * pdf),)

    return apply_op("gelu", (x,), dx * cdf, vjp)


def relu(x: Tensor) -> Tensor:
    dx = x.data

    def vjp(g: Array) -> tuple[Array]:
        return (g * (dx > 0),)

    return apply_op("relu", (x,), np.maximum(dx, 0), vjp)


def log_softmax(x: Tensor) -> Tensor:
    """Numerically stable log-softmax over the last axis."""
    dx = x.data
    shifted = dx - dx.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(out)

    def vjp(g: Array) -> tuple[Array]:
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return apply_op("log_softmax", (x,), out, vjp)


# -- normalization -------------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply ``gamma``/``beta``."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be > 0")
    channels = x.shape[-1] if x.ndim else 0
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(
            f"layer_norm: input {x.shape} does not fit gamma {gamma.shape} / beta {beta.shape}"
        )
    dx = x.data
    mu = dx.mean(axis=-1, keepdims=True)
    centered = dx - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    dg = gamma.data

    def vjp(g: Array) -> tuple[Array, Array, Array]:
        lead = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=lead)
        g_beta = g.sum(axis=lead)
        gxhat = g * dg
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gamma, g_beta

    return apply_op("layer_norm", (x, gamma, beta), xhat * dg + beta.data, vjp)


# -- layout --------------------------------------------------------------------------


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis; all leading extents must agree."""
    if a.ndim == 0 or a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise ShapeError(f"concat_last: incompatible shapes {a.shape} and {b.shape}")
    split = a.shape[-1]

    def vjp(g: Array) -> tuple[Array, Array]:
        return g[..., :split], g[..., split:]

    return apply_op("concat_last", (a, b), np.concatenate([a.data, b.data], axis=-1), vjp)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of the axes of {x.shape}")
    inverse = tuple(np.argsort(axes))

    def vjp(g: Array) -> tuple[Array]:
        return (np.transpose(g, inverse),)

    return apply_op("permute", (x,), np.transpose(x.data, axes), vjp)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from e
    if any(extent < 1 for extent in out.shape):
        raise ShapeError(f"reshape: {shape} produces an empty extent")
    original = x.shape

    def vjp(g: Array) -> tuple[Array]:
        return (g.reshape(original),)

    return apply_op("reshape", (x,), out, vjp)


def _check_basic_key(key: Any) -> None:
    parts = key if isinstance(key, tuple) else (key,)
    for part in parts:
        if not (
            isinstance(part, (int, np.integer, slice)) or part is Ellipsis or part is None
        ):
            raise TypeError(f"Only basic indexing is supported, got {type(part).__name__}")


def index(x: Tensor, key: Any) -> Tensor:
    """Basic (slice/integer) indexing."""
    _check_basic_key(key)
    out = x.data[key]
    if out.size == 0:
        raise ShapeError(f"index {key!r} selects nothing from shape {x.shape}")

    def vjp(g: Array) -> tuple[Array]:
        full = np.zeros(x.shape, dtype=g.dtype)
        full[key] = g
        return (full,)

    return apply_op("index", (x,), np.array(out, copy=True), vjp)


# -- reductions ----------------------------------------------------------------------


def _norm_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def sum_(x: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape

    def vjp(g: Array) -> tuple[Array]:
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return apply_op("sum", (x,), np.asarray(x.data.sum(axis=axes)), vjp)


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    shape = x.shape

    def vjp(g: Array) -> tuple[Array]:
        return (np.broadcast_to(np.expand_dims(g, axes), shape) / count,)

    return apply_op("mean", (x,), np.asarray(x.data.mean(axis=axes)), vjp)


# -- finite differences --------------------------------------------------------------


def finite_diff_grad(
    f: Callable[[Tensor], Tensor | float],
    x: Tensor | Array,
    eps: float = 1e-5,
) -> Array:
    """
    Central-difference gradient of scalar ``f`` at ``x``.

    Each coordinate gets ``(f(x + eps·e) - f(x - eps·e)) / (2·eps)``.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    base = x.numpy() if isinstance(x, Tensor) else np.array(x, dtype=np.float64)
    dtype = base.dtype
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        orig = base[idx]
        base[idx] = orig + eps
        f_plus = _scalar(f(Tensor(base, dtype=dtype)))
        base[idx] = orig - eps
        f_minus = _scalar(f(Tensor(base, dtype=dtype)))
        base[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2 * eps)
    return grad


def _scalar(value: Tensor | float) -> float:
    return value.item() if isinstance(value, Tensor) else float(value)


def relative_error(analytic: Array, numeric: Array, floor: float = 1e-8) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)``."""
    if analytic.size == 0:
        return 0.0
    scale_ = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), floor)
    return float(np.abs(analytic - numeric).max() / scale_)


@dataclass
class GradCheckResult:
    """Per-tensor relative errors of analytic against finite-difference gradients."""

    errors: dict[str, float]
    checked_coords: int

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error < tolerance


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Parameter],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """
    Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` reads ``params`` through closure; each coordinate is nudged
    via :meth:`Parameter.assign` and restored afterwards. With ``max_coords``
    only that many randomly chosen coordinates per tensor are differenced.
    """
    with Tape() as tape:
        loss = loss_fn()
    analytic = backward(tape, loss).by_name(params)

    rng = rng or np.random.default_rng(0)
    errors: dict[str, float] = {}
    checked = 0
    for name, param in params.items():
        base = param.numpy()
        coords = list(np.ndindex(base.shape))
        if max_coords is not None and len(coords) > max_coords:
            picks = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(picks)]
        numeric = np.zeros(len(coords), dtype=base.dtype)
        try:
            for k, idx in enumerate(coords):
                orig = base[idx]
                base[idx] = orig + eps
                param.assign(base)
                f_plus = loss_fn().item()
                base[idx] = orig - eps
                param.assign(base)
                f_minus = loss_fn().item()
                base[idx] = orig
                numeric[k] = (f_plus - f_minus) / (2 * eps)
        finally:
            param.assign(base)
        picked = np.array([analytic[name][idx] for idx in coords], dtype=base.dtype)
        errors[name] = relative_error(picked, numeric)
        checked += len(coords)
    return GradCheckResult(errors=errors, checked_coords=checked)
