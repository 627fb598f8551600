"""
Recurrent cells, sequence scans and bidirectional wrappers.

Parameters are stored framework style: the gate matrices of one direction
are stacked row-wise into ``weight_ih`` ``[G*D, C]`` and ``weight_hh``
``[G*D, D]`` with two bias vectors ``bias_ih``/``bias_hh`` ``[G*D]``. Gate
order is ``i, f, c, o`` for LSTM, ``r, z, n`` for GRU and a single ``h``
transform for the tanh-RNN.

``lstm_cell``/``gru_cell``/``rnn_cell`` are composed from tensor primitives
and record one tape entry per primitive. ``rnn_scan`` and ``birnn_batch``
run a whole sequence as a single primitive with a hand-written
backpropagation-through-time adjoint, which keeps tapes short for long
token grids.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from typing import Any, ClassVar

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from seqkit.errors import EmptySequenceError, ShapeError
from seqkit.layers import join, uniform_parameter
from seqkit.tensor import (
    Array,
    Parameter,
    Tensor,
    add,
    apply_op,
    concat_last,
    hadamard,
    index,
    linear,
    reshape,
    sigmoid,
    sub,
    tanh_act,
)


class CellKind(str, Enum):
    """Recurrent cell family."""

    LSTM = "lstm"
    GRU = "gru"
    RNN = "rnn"

    @property
    def gates(self) -> int:
        return {CellKind.LSTM: 4, CellKind.GRU: 3, CellKind.RNN: 1}[self]

    @property
    def activations_per_unit(self) -> int:
        """Sigmoid/tanh evaluations per hidden unit and step."""
        return {CellKind.LSTM: 5, CellKind.GRU: 3, CellKind.RNN: 1}[self]


@dataclass
class CellParams:
    """Weights of one recurrent direction."""

    kind: ClassVar[CellKind]
    gate_names: ClassVar[tuple[str, ...]]

    weight_ih: Parameter
    weight_hh: Parameter
    bias_ih: Parameter
    bias_hh: Parameter

    def __post_init__(self) -> None:
        rows = self.weight_ih.shape[0] if self.weight_ih.ndim == 2 else -1
        gates = self.kind.gates
        if rows < 1 or rows % gates:
            raise ShapeError(
                f"{self.kind.value} weight_ih {self.weight_ih.shape} needs {gates}*D rows"
            )
        hidden = rows // gates
        expected = {
            "weight_hh": (rows, hidden),
            "bias_ih": (rows,),
            "bias_hh": (rows,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ShapeError(f"{self.kind.value} {name} has shape {actual}, expected {shape}")

    @classmethod
    def create(
        cls,
        input_size: int,
        hidden_size: int,
        rng: np.random.Generator,
        dtype: npt.DTypeLike = np.float32,
    ) -> CellParams:
        """Uniform init in ``[-1/sqrt(D), +1/sqrt(D)]`` for every tensor."""
        rows = cls.kind.gates * hidden_size
        bound = 1.0 / math.sqrt(hidden_size)
        return cls(
            uniform_parameter(rng, (rows, input_size), bound, dtype),
            uniform_parameter(rng, (rows, hidden_size), bound, dtype),
            uniform_parameter(rng, (rows,), bound, dtype),
            uniform_parameter(rng, (rows,), bound, dtype),
        )

    @classmethod
    def zeros(
        cls, input_size: int, hidden_size: int, dtype: npt.DTypeLike = np.float64
    ) -> CellParams:
        rows = cls.kind.gates * hidden_size
        return cls(
            Parameter(np.zeros((rows, input_size)), dtype=dtype),
            Parameter(np.zeros((rows, hidden_size)), dtype=dtype),
            Parameter(np.zeros(rows), dtype=dtype),
            Parameter(np.zeros(rows), dtype=dtype),
        )

    @property
    def input_size(self) -> int:
        return self.weight_ih.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.weight_hh.shape[1]

    def gate_weights(self, gate: str) -> tuple[Array, Array, Array, Array]:
        """``(W_x, W_h, b_ih, b_hh)`` slices of one named gate."""
        try:
            k = self.gate_names.index(gate)
        except ValueError:
            raise KeyError(f"{self.kind.value} cell has no gate {gate!r}") from None
        d = self.hidden_size
        rows = slice(k * d, (k + 1) * d)
        return (
            self.weight_ih.data[rows],
            self.weight_hh.data[rows],
            self.bias_ih.data[rows],
            self.bias_hh.data[rows],
        )

    def parameters(self) -> tuple[Parameter, Parameter, Parameter, Parameter]:
        return (self.weight_ih, self.weight_hh, self.bias_ih, self.bias_hh)

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        return {
            join(prefix, "weight_ih"): self.weight_ih,
            join(prefix, "weight_hh"): self.weight_hh,
            join(prefix, "bias_ih"): self.bias_ih,
            join(prefix, "bias_hh"): self.bias_hh,
        }


@dataclass
class LSTMCellParams(CellParams):
    kind: ClassVar[CellKind] = CellKind.LSTM
    gate_names: ClassVar[tuple[str, ...]] = ("i", "f", "c", "o")


@dataclass
class GRUCellParams(CellParams):
    kind: ClassVar[CellKind] = CellKind.GRU
    gate_names: ClassVar[tuple[str, ...]] = ("r", "z", "n")


@dataclass
class RNNCellParams(CellParams):
    kind: ClassVar[CellKind] = CellKind.RNN
    gate_names: ClassVar[tuple[str, ...]] = ("h",)


_PARAMS_BY_KIND: dict[CellKind, type[CellParams]] = {
    CellKind.LSTM: LSTMCellParams,
    CellKind.GRU: GRUCellParams,
    CellKind.RNN: RNNCellParams,
}


def cell_params_class(kind: CellKind | str) -> type[CellParams]:
    return _PARAMS_BY_KIND[CellKind(kind)]


# -- composite cells -----------------------------------------------------------------


def _check_step(x_t: Tensor, h_prev: Tensor, p: CellParams) -> None:
    if x_t.shape != (p.input_size,) or h_prev.shape != (p.hidden_size,):
        raise ShapeError(
            f"{p.kind.value} cell expects x {(p.input_size,)} and h {(p.hidden_size,)}, "
            f"got {x_t.shape} and {h_prev.shape}"
        )


def _gate_slice(gates: Tensor, k: int, d: int) -> Tensor:
    return index(gates, slice(k * d, (k + 1) * d))


def lstm_cell(
    x_t: Tensor, h_prev: Tensor, c_prev: Tensor, p: CellParams
) -> tuple[Tensor, Tensor]:
    """One LSTM step; the two bias vectors enter only through their sum."""
    _check_step(x_t, h_prev, p)
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"lstm_cell: c {c_prev.shape} does not match h {h_prev.shape}")
    d = p.hidden_size
    pre = add(
        add(linear(x_t, p.weight_ih), linear(h_prev, p.weight_hh)),
        add(p.bias_ih, p.bias_hh),
    )
    i = sigmoid(_gate_slice(pre, 0, d))
    f = sigmoid(_gate_slice(pre, 1, d))
    g = tanh_act(_gate_slice(pre, 2, d))
    o = sigmoid(_gate_slice(pre, 3, d))
    c_t = add(hadamard(f, c_prev), hadamard(i, g))
    h_t = hadamard(o, tanh_act(c_t))
    return h_t, c_t


def gru_cell(x_t: Tensor, h_prev: Tensor, p: CellParams) -> Tensor:
    """
    One GRU step.

    ``n = tanh(W_in x + b_in + r * (W_hn h + b_hn))`` and
    ``h_t = (1 - z) * n + z * h_prev``.
    """
    _check_step(x_t, h_prev, p)
    d = p.hidden_size
    xw = linear(x_t, p.weight_ih)
    hw = linear(h_prev, p.weight_hh)
    b_ih, b_hh = p.bias_ih, p.bias_hh
    rz_x = index(xw, slice(0, 2 * d))
    rz_h = index(hw, slice(0, 2 * d))
    rz = add(add(rz_x, rz_h), add(index(b_ih, slice(0, 2 * d)), index(b_hh, slice(0, 2 * d))))
    r = sigmoid(_gate_slice(rz, 0, d))
    z = sigmoid(_gate_slice(rz, 1, d))
    hn = add(_gate_slice(hw, 2, d), _gate_slice(b_hh, 2, d))
    n = tanh_act(add(add(_gate_slice(xw, 2, d), _gate_slice(b_ih, 2, d)), hadamard(r, hn)))
    return add(hadamard(sub(1.0, z), n), hadamard(z, h_prev))


def rnn_cell(x_t: Tensor, h_prev: Tensor, p: CellParams) -> Tensor:
    """One tanh-RNN step: ``tanh(W_x x + W_h h + b)``."""
    _check_step(x_t, h_prev, p)
    pre = add(
        add(linear(x_t, p.weight_ih), linear(h_prev, p.weight_hh)),
        add(p.bias_ih, p.bias_hh),
    )
    return tanh_act(pre)


# -- fused scans ---------------------------------------------------------------------
#
# Each kind supplies a forward pass over xs[N, T, C] returning hs[N, T, D] plus a
# cache, and a backward pass mapping g_hs to gradients of
# (xs, weight_ih, weight_hh, bias_ih, bias_hh).

_Cache = dict[str, Any]
_Grads = tuple[Array, Array, Array, Array, Array]


def _lstm_forward(xs: Array, p: CellParams) -> tuple[Array, _Cache]:
    n, t_len, _ = xs.shape
    d = p.hidden_size
    w_hh_t = p.weight_hh.data.T
    xw = xs @ p.weight_ih.data.T
    bias = p.bias_ih.data + p.bias_hh.data
    h = np.zeros((n, d), dtype=xs.dtype)
    c = np.zeros((n, d), dtype=xs.dtype)
    hs = np.empty((n, t_len, d), dtype=xs.dtype)
    gates = np.empty((n, t_len, 4 * d), dtype=xs.dtype)
    cs = np.empty((n, t_len, d), dtype=xs.dtype)
    for t in range(t_len):
        pre = (xw[:, t] + h @ w_hh_t) + bias
        i = expit(pre[:, :d])
        f = expit(pre[:, d : 2 * d])
        g = np.tanh(pre[:, 2 * d : 3 * d])
        o = expit(pre[:, 3 * d :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        cs[:, t] = c
        hs[:, t] = h
    return hs, {"gates": gates, "cs": cs}


def _lstm_backward(g_hs: Array, xs: Array, hs: Array, cache: _Cache, p: CellParams) -> _Grads:
    n, t_len, _ = xs.shape
    d = p.hidden_size
    w_hh = p.weight_hh.data
    gates, cs = cache["gates"], cache["cs"]
    g_pre = np.empty((n, t_len, 4 * d), dtype=xs.dtype)
    g_w_hh = np.zeros_like(w_hh)
    dh_next = np.zeros((n, d), dtype=xs.dtype)
    dc_next = np.zeros((n, d), dtype=xs.dtype)
    zeros = np.zeros((n, d), dtype=xs.dtype)
    for t in reversed(range(t_len)):
        i = gates[:, t, :d]
        f = gates[:, t, d : 2 * d]
        g = gates[:, t, 2 * d : 3 * d]
        o = gates[:, t, 3 * d :]
        tc = np.tanh(cs[:, t])
        c_prev = cs[:, t - 1] if t > 0 else zeros
        h_prev = hs[:, t - 1] if t > 0 else zeros
        dh = g_hs[:, t] + dh_next
        dc = dh * o * (1 - tc * tc) + dc_next
        da = np.concatenate(
            [
                dc * g * i * (1 - i),
                dc * c_prev * f * (1 - f),
                dc * i * (1 - g * g),
                dh * tc * o * (1 - o),
            ],
            axis=1,
        )
        g_pre[:, t] = da
        g_w_hh += da.T @ h_prev
        dh_next = da @ w_hh
        dc_next = dc * f
    return _input_side_grads(g_pre, g_pre, xs, g_w_hh, p)


def _gru_forward(xs: Array, p: CellParams) -> tuple[Array, _Cache]:
    n, t_len, _ = xs.shape
    d = p.hidden_size
    w_hh_t = p.weight_hh.data.T
    b_ih, b_hh = p.bias_ih.data, p.bias_hh.data
    xw = xs @ p.weight_ih.data.T
    bias_rz = b_ih[: 2 * d] + b_hh[: 2 * d]
    h = np.zeros((n, d), dtype=xs.dtype)
    hs = np.empty((n, t_len, d), dtype=xs.dtype)
    acts = np.empty((n, t_len, 3 * d), dtype=xs.dtype)
    hns = np.empty((n, t_len, d), dtype=xs.dtype)
    for t in range(t_len):
        hw = h @ w_hh_t
        rz = (xw[:, t, : 2 * d] + hw[:, : 2 * d]) + bias_rz
        r = expit(rz[:, :d])
        z = expit(rz[:, d:])
        hn = hw[:, 2 * d :] + b_hh[2 * d :]
        nn = np.tanh((xw[:, t, 2 * d :] + b_ih[2 * d :]) + r * hn)
        h = (1 - z) * nn + z * h
        acts[:, t] = np.concatenate([r, z, nn], axis=1)
        hns[:, t] = hn
        hs[:, t] = h
    return hs, {"acts": acts, "hns": hns}


def _gru_backward(g_hs: Array, xs: Array, hs: Array, cache: _Cache, p: CellParams) -> _Grads:
    n, t_len, _ = xs.shape
    d = p.hidden_size
    w_hh = p.weight_hh.data
    acts, hns = cache["acts"], cache["hns"]
    g_x_side = np.empty((n, t_len, 3 * d), dtype=xs.dtype)
    g_h_side = np.empty((n, t_len, 3 * d), dtype=xs.dtype)
    g_w_hh = np.zeros_like(w_hh)
    dh_next = np.zeros((n, d), dtype=xs.dtype)
    zeros = np.zeros((n, d), dtype=xs.dtype)
    for t in reversed(range(t_len)):
        r = acts[:, t, :d]
        z = acts[:, t, d : 2 * d]
        nn = acts[:, t, 2 * d :]
        hn = hns[:, t]
        h_prev = hs[:, t - 1] if t > 0 else zeros
        dh = g_hs[:, t] + dh_next
        da_n = dh * (1 - z) * (1 - nn * nn)
        da_r = da_n * hn * r * (1 - r)
        da_z = dh * (h_prev - nn) * z * (1 - z)
        g_x_side[:, t] = np.concatenate([da_r, da_z, da_n], axis=1)
        dhw = np.concatenate([da_r, da_z, da_n * r], axis=1)
        g_h_side[:, t] = dhw
        g_w_hh += dhw.T @ h_prev
        dh_next = dh * z + dhw @ w_hh
    return _input_side_grads(g_x_side, g_h_side, xs, g_w_hh, p)


def _rnn_forward(xs: Array, p: CellParams) -> tuple[Array, _Cache]:
    n, t_len, _ = xs.shape
    d = p.hidden_size
    w_hh_t = p.weight_hh.data.T
    xw = xs @ p.weight_ih.data.T
    bias = p.bias_ih.data + p.bias_hh.data
    h = np.zeros((n, d), dtype=xs.dtype)
    hs = np.empty((n, t_len, d), dtype=xs.dtype)
    for t in range(t_len):
        h = np.tanh((xw[:, t] + h @ w_hh_t) + bias)
        hs[:, t] = h
    return hs, {}


def _rnn_backward(g_hs: Array, xs: Array, hs: Array, cache: _Cache, p: CellParams) -> _Grads:
    n, t_len, _ = xs.shape
    d = p.hidden_size
    w_hh = p.weight_hh.data
    g_pre = np.empty((n, t_len, d), dtype=xs.dtype)
    g_w_hh = np.zeros_like(w_hh)
    dh_next = np.zeros((n, d), dtype=xs.dtype)
    zeros = np.zeros((n, d), dtype=xs.dtype)
    for t in reversed(range(t_len)):
        h = hs[:, t]
        h_prev = hs[:, t - 1] if t > 0 else zeros
        da = (g_hs[:, t] + dh_next) * (1 - h * h)
        g_pre[:, t] = da
        g_w_hh += da.T @ h_prev
        dh_next = da @ w_hh
    return _input_side_grads(g_pre, g_pre, xs, g_w_hh, p)


def _input_side_grads(
    g_x_side: Array, g_h_side: Array, xs: Array, g_w_hh: Array, p: CellParams
) -> _Grads:
    rows = g_x_side.shape[-1]
    flat_x = g_x_side.reshape(-1, rows)
    g_xs = g_x_side @ p.weight_ih.data
    g_w_ih = flat_x.T @ xs.reshape(-1, xs.shape[-1])
    g_b_ih = flat_x.sum(axis=0)
    g_b_hh = g_h_side.reshape(-1, rows).sum(axis=0)
    return g_xs, g_w_ih, g_w_hh, g_b_ih, g_b_hh


_Forward = Callable[[Array, CellParams], tuple[Array, _Cache]]
_Backward = Callable[[Array, Array, Array, _Cache, CellParams], _Grads]

_KERNELS: dict[CellKind, tuple[_Forward, _Backward]] = {
    CellKind.LSTM: (_lstm_forward, _lstm_backward),
    CellKind.GRU: (_gru_forward, _gru_backward),
    CellKind.RNN: (_rnn_forward, _rnn_backward),
}


def scan_batch(xs: Tensor, p: CellParams, reverse: bool = False) -> Tensor:
    """
    Scan ``N`` independent sequences ``xs[N, T, C]`` with zero initial state.

    With ``reverse`` the sequences are scanned last-to-first and the outputs
    are returned in the original order.
    """
    if xs.ndim != 3 or xs.shape[2] != p.input_size:
        raise ShapeError(
            f"{p.kind.value} scan expects [N, T, {p.input_size}] input, got {xs.shape}"
        )
    forward, backward = _KERNELS[p.kind]
    seq = xs.data[:, ::-1] if reverse else xs.data
    seq = np.ascontiguousarray(seq)
    hs, cache = forward(seq, p)

    def vjp(g: Array) -> _Grads:
        g_seq = np.ascontiguousarray(g[:, ::-1] if reverse else g)
        g_xs, *rest = backward(g_seq, seq, hs, cache, p)
        if reverse:
            g_xs = g_xs[:, ::-1]
        return (g_xs, *rest)  # type: ignore[return-value]

    out = hs[:, ::-1] if reverse else hs
    op = f"{p.kind.value}_scan" + ("_rev" if reverse else "")
    return apply_op(op, (xs, *p.parameters()), np.ascontiguousarray(out), vjp)


def rnn_scan(xs: Tensor | npt.ArrayLike, p: CellParams, reverse: bool = False) -> Tensor:
    """Scan one sequence ``xs[T, C]`` and return every hidden state ``[T, D]``."""
    if not isinstance(xs, Tensor):
        arr = np.asarray(xs, dtype=p.weight_ih.dtype)
        if arr.ndim >= 1 and arr.shape[0] == 0:
            raise EmptySequenceError("Cannot scan an empty sequence (T = 0)")
        xs = Tensor(arr)
    if xs.ndim != 2:
        raise ShapeError(f"rnn_scan expects [T, C] input, got {xs.shape}")
    t_len, channels = xs.shape
    out = scan_batch(reshape(xs, (1, t_len, channels)), p, reverse)
    return reshape(out, (t_len, p.hidden_size))


@dataclass
class BiRNNParams:
    """
    Forward and backward directions of one bidirectional recurrence.

    Directions never share weights. ``backward`` is None for the
    unidirectional (forward-only) variant.
    """

    forward: CellParams
    backward: CellParams | None = None

    def __post_init__(self) -> None:
        b = self.backward
        if b is not None:
            if b.kind != self.forward.kind:
                raise ShapeError("Both directions must use the same cell kind")
            if (b.input_size, b.hidden_size) != (self.forward.input_size, self.forward.hidden_size):
                raise ShapeError(
                    f"Direction sizes differ: forward C={self.forward.input_size} "
                    f"D={self.forward.hidden_size}, backward C={b.input_size} D={b.hidden_size}"
                )

    @classmethod
    def create(
        cls,
        kind: CellKind | str,
        input_size: int,
        hidden_size: int,
        rng: np.random.Generator,
        dtype: npt.DTypeLike = np.float32,
        bidirectional: bool = True,
    ) -> BiRNNParams:
        param_cls = cell_params_class(kind)
        forward = param_cls.create(input_size, hidden_size, rng, dtype)
        backward = param_cls.create(input_size, hidden_size, rng, dtype) if bidirectional else None
        return cls(forward, backward)

    @property
    def cell_kind(self) -> CellKind:
        return self.forward.kind

    @property
    def bidirectional(self) -> bool:
        return self.backward is not None

    @property
    def input_size(self) -> int:
        return self.forward.input_size

    @property
    def hidden_size(self) -> int:
        return self.forward.hidden_size

    @property
    def output_size(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)

    def directions(self) -> list[CellParams]:
        return [self.forward] if self.backward is None else [self.forward, self.backward]

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        params = self.forward.named_parameters(join(prefix, "forward"))
        if self.backward is not None:
            params.update(self.backward.named_parameters(join(prefix, "backward")))
        return params


def birnn_batch(xs: Tensor, p: BiRNNParams) -> Tensor:
    """Bidirectional scan of ``xs[N, T, C]`` into ``[N, T, 2D]`` (``[N, T, D]`` if forward-only)."""
    out = scan_batch(xs, p.forward)
    if p.backward is None:
        return out
    return concat_last(out, scan_batch(xs, p.backward, reverse=True))


def bilstm(xs: Tensor | npt.ArrayLike, p: BiRNNParams) -> Tensor:
    """
    Forward scan concatenated with the order-restored backward scan.

    Output is ``[T, 2D]``; a forward-only ``p`` yields ``[T, D]``.
    """
    forward = rnn_scan(xs, p.forward)
    if p.backward is None:
        return forward
    return concat_last(forward, rnn_scan(xs, p.backward, reverse=True))
