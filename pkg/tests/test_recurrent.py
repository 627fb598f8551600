"""Tests for recurrent cells, scans and the bidirectional wrapper."""

import math

import numpy as np
import pytest

from seqkit.errors import EmptySequenceError, ShapeError
from seqkit.recurrent import (
    BiRNNParams,
    CellKind,
    CellParams,
    GRUCellParams,
    LSTMCellParams,
    RNNCellParams,
    bilstm,
    birnn_batch,
    cell_params_class,
    gru_cell,
    lstm_cell,
    rnn_cell,
    rnn_scan,
    scan_batch,
)
from seqkit.tensor import Parameter, Tape, Tensor, backward, finite_diff_grad, gradient_check
from seqkit.tensor import mul as t_mul
from seqkit.tensor import sum_ as t_sum

from . import oracles


def make_params(kind: CellKind, c: int, d: int, seed: int = 0) -> CellParams:
    return cell_params_class(kind).create(c, d, np.random.default_rng(seed), np.float64)


class TestCellParams:
    """Test parameter containers."""

    def test_shapes(self) -> None:
        """Test stacked gate shapes per cell kind."""
        for kind, gates in ((CellKind.LSTM, 4), (CellKind.GRU, 3), (CellKind.RNN, 1)):
            p = make_params(kind, 5, 3)
            assert p.weight_ih.shape == (gates * 3, 5)
            assert p.weight_hh.shape == (gates * 3, 3)
            assert p.bias_ih.shape == p.bias_hh.shape == (gates * 3,)

    def test_init_bound(self) -> None:
        """Test uniform init within +-1/sqrt(D)."""
        p = make_params(CellKind.LSTM, 8, 16)
        for t in p.parameters():
            assert np.abs(t.data).max() <= 1 / math.sqrt(16)

    def test_mismatched_recurrent_matrix(self) -> None:
        """Test that weight_hh must be [G*D, D]."""
        with pytest.raises(ShapeError):
            LSTMCellParams(
                Parameter(np.zeros((8, 3))),
                Parameter(np.zeros((8, 3))),
                Parameter(np.zeros(8)),
                Parameter(np.zeros(8)),
            )

    def test_gate_weights(self) -> None:
        """Test named gate slices."""
        p = make_params(CellKind.LSTM, 3, 2)
        w_x, w_h, b1, b2 = p.gate_weights("f")
        assert np.array_equal(w_x, p.weight_ih.data[2:4])
        assert w_h.shape == (2, 2) and b1.shape == b2.shape == (2,)
        with pytest.raises(KeyError):
            p.gate_weights("z")

    def test_named_parameters(self) -> None:
        """Test framework-style names under a prefix."""
        names = set(make_params(CellKind.GRU, 2, 2).named_parameters("rnn.forward"))
        assert names == {
            "rnn.forward.weight_ih",
            "rnn.forward.weight_hh",
            "rnn.forward.bias_ih",
            "rnn.forward.bias_hh",
        }


class TestLstmCell:
    """Test the single-step LSTM."""

    def test_zero_everything_gives_zero(self) -> None:
        """Test zero input, state and weights."""
        p = LSTMCellParams.zeros(3, 2)
        h, c = lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
        assert np.array_equal(h.data, np.zeros(2))
        assert np.array_equal(c.data, np.zeros(2))

    def test_saturated_gates(self) -> None:
        """Test that open input/forget/output gates carry the cell through tanh."""
        p = LSTMCellParams.zeros(1, 1)
        p.bias_ih.assign(np.array([10.0, 10.0, 0.0, 10.0]))
        h, c = lstm_cell(Tensor([0.0]), Tensor([0.0]), Tensor([1.0]), p)
        assert c.item() == pytest.approx(1.0, abs=1e-4)
        assert h.item() == pytest.approx(math.tanh(1.0), abs=1e-4)
        assert h.item() == pytest.approx(0.76159, abs=1e-4)

    def test_matches_scalar_oracle(self) -> None:
        """Test random steps against the scalar reference."""
        rng = np.random.default_rng(1)
        for seed in range(5):
            p = make_params(CellKind.LSTM, 3, 2, seed)
            x, h0, c0 = rng.standard_normal(3), rng.standard_normal(2), rng.standard_normal(2)
            h, c = lstm_cell(Tensor(x), Tensor(h0), Tensor(c0), p)
            h_ref, c_ref = oracles.lstm_step(x, h0, c0, p)
            np.testing.assert_allclose(h.data, h_ref, rtol=0, atol=1e-12)
            np.testing.assert_allclose(c.data, c_ref, rtol=0, atol=1e-12)

    def test_output_bounded(self) -> None:
        """Test |h| <= 1 for large inputs."""
        p = make_params(CellKind.LSTM, 4, 3)
        x = np.random.default_rng(2).standard_normal(4) * 100
        h, _ = lstm_cell(Tensor(x), Tensor(np.zeros(3)), Tensor(np.zeros(3)), p)
        assert np.all(np.abs(h.data) <= 1.0)

    def test_wrong_input_width(self) -> None:
        """Test shape validation of the step inputs."""
        p = make_params(CellKind.LSTM, 3, 2)
        with pytest.raises(ShapeError):
            lstm_cell(Tensor(np.zeros(4)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)

    def test_gradient(self) -> None:
        """Test parameter gradients of one step against finite differences."""
        p = make_params(CellKind.LSTM, 3, 2, seed=4)
        x = Tensor(np.random.default_rng(4).standard_normal(3))
        h0 = Tensor(np.random.default_rng(5).standard_normal(2))
        c0 = Tensor(np.random.default_rng(6).standard_normal(2))

        def loss() -> Tensor:
            h, c = lstm_cell(x, h0, c0, p)
            return t_sum(t_mul(h, c))

        assert gradient_check(loss, p.named_parameters()).passed(1e-6)


class TestGruAndRnnCells:
    """Test the single-step GRU and tanh-RNN."""

    def test_rnn_zero(self) -> None:
        """Test the tanh-RNN at zero."""
        p = RNNCellParams.zeros(2, 3)
        out = rnn_cell(Tensor(np.zeros(2)), Tensor(np.zeros(3)), p)
        assert np.array_equal(out.data, np.zeros(3))

    def test_gru_zero_params_halves_state(self) -> None:
        """Test that zero weights give z = 0.5 and n = 0, hence h = 0.5 * h_prev."""
        p = GRUCellParams.zeros(2, 3)
        v = np.array([0.4, -1.0, 2.0])
        out = gru_cell(Tensor(np.zeros(2)), Tensor(v), p)
        np.testing.assert_allclose(out.data, 0.5 * v, rtol=0, atol=1e-15)

    def test_gru_matches_oracle(self) -> None:
        """Test random GRU steps against the scalar reference."""
        rng = np.random.default_rng(7)
        for seed in range(5):
            p = make_params(CellKind.GRU, 3, 2, seed)
            x, h0 = rng.standard_normal(3), rng.standard_normal(2)
            out = gru_cell(Tensor(x), Tensor(h0), p)
            np.testing.assert_allclose(out.data, oracles.gru_step(x, h0, p), rtol=0, atol=1e-12)

    def test_rnn_matches_oracle(self) -> None:
        """Test random RNN steps against the scalar reference."""
        rng = np.random.default_rng(8)
        p = make_params(CellKind.RNN, 3, 4)
        x, h0 = rng.standard_normal(3), rng.standard_normal(4)
        out = rnn_cell(Tensor(x), Tensor(h0), p)
        np.testing.assert_allclose(out.data, oracles.rnn_step(x, h0, p), rtol=0, atol=1e-12)

    def test_gru_gradient(self) -> None:
        """Test GRU step gradients against finite differences."""
        p = make_params(CellKind.GRU, 3, 2, seed=9)
        x = Tensor(np.random.default_rng(9).standard_normal(3))
        h0 = Tensor(np.random.default_rng(10).standard_normal(2))
        assert gradient_check(lambda: t_sum(gru_cell(x, h0, p)), p.named_parameters()).passed(1e-6)


class TestScan:
    """Test whole-sequence scans."""

    @pytest.mark.parametrize("kind", list(CellKind))
    def test_matches_unrolled_oracle(self, kind: CellKind) -> None:
        """Test a T=4 scan against the unrolled reference in both directions."""
        p = make_params(kind, 3, 2, seed=11)
        xs = np.random.default_rng(11).standard_normal((4, 3))
        for reverse in (False, True):
            out = rnn_scan(xs, p, reverse=reverse)
            ref = oracles.scan(xs, p, reverse=reverse)
            np.testing.assert_allclose(out.data, ref, rtol=0, atol=1e-12)

    def test_single_step_equals_cell(self) -> None:
        """Test that T=1 reproduces one cell step from zero state."""
        p = make_params(CellKind.LSTM, 3, 2, seed=12)
        x = np.random.default_rng(12).standard_normal(3)
        h, _ = lstm_cell(Tensor(x), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
        out = rnn_scan(x[None, :], p)
        np.testing.assert_allclose(out.data[0], h.data, rtol=0, atol=1e-14)

    def test_scan_matches_composite_cells(self) -> None:
        """Test the fused kernel against a loop of composite cells."""
        p = make_params(CellKind.LSTM, 2, 3, seed=13)
        xs = np.random.default_rng(13).standard_normal((5, 2))
        h, c = Tensor(np.zeros(3)), Tensor(np.zeros(3))
        for t in range(5):
            h, c = lstm_cell(Tensor(xs[t]), h, c, p)
        np.testing.assert_allclose(rnn_scan(xs, p).data[-1], h.data, rtol=0, atol=1e-12)

    def test_reverse_scan_of_palindrome_mirrors_forward(self) -> None:
        """Test that a reverse scan over a palindrome is the mirrored forward scan."""
        p = make_params(CellKind.LSTM, 2, 2, seed=14)
        half = np.random.default_rng(14).standard_normal((3, 2))
        xs = np.concatenate([half, half[::-1]])
        fwd = rnn_scan(xs, p).data
        rev = rnn_scan(xs, p, reverse=True).data
        assert np.array_equal(rev[::-1], fwd)

    def test_empty_sequence(self) -> None:
        """Test that T=0 is rejected."""
        p = make_params(CellKind.LSTM, 3, 2)
        with pytest.raises(EmptySequenceError):
            rnn_scan(np.zeros((0, 3)), p)

    def test_wrong_rank(self) -> None:
        """Test that scans need [T, C] input."""
        p = make_params(CellKind.LSTM, 3, 2)
        with pytest.raises(ShapeError):
            rnn_scan(np.zeros((2, 2, 3)), p)

    def test_batch_rows_are_independent(self) -> None:
        """Test that scan_batch equals per-sequence scans."""
        p = make_params(CellKind.GRU, 3, 2, seed=15)
        xs = np.random.default_rng(15).standard_normal((4, 6, 3))
        out = scan_batch(Tensor(xs), p, reverse=True).data
        for n in range(4):
            ref = oracles.scan(xs[n], p, reverse=True)
            np.testing.assert_allclose(out[n], ref, rtol=0, atol=1e-12)

    def test_bias_sum_equivalence(self) -> None:
        """Test that (b_ih + b_hh, 0) gives bit-identical LSTM and RNN outputs."""
        xs = np.random.default_rng(16).standard_normal((5, 3))
        for kind in (CellKind.LSTM, CellKind.RNN):
            p = make_params(kind, 3, 2, seed=16)
            folded = cell_params_class(kind)(
                Parameter(p.weight_ih.data),
                Parameter(p.weight_hh.data),
                Parameter(p.bias_ih.data + p.bias_hh.data),
                Parameter(np.zeros_like(p.bias_hh.data)),
            )
            assert np.array_equal(rnn_scan(xs, p).data, rnn_scan(xs, folded).data)

    @pytest.mark.parametrize("kind", list(CellKind))
    @pytest.mark.parametrize("reverse", [False, True])
    def test_gradients(self, kind: CellKind, reverse: bool) -> None:
        """Test BPTT over T=6 against finite differences for weights and inputs."""
        p = make_params(kind, 3, 2, seed=17)
        rng = np.random.default_rng(17)
        xs = Tensor(rng.standard_normal((2, 6, 3)))
        proj = Tensor(rng.standard_normal((2, 6, 2)))

        def loss_of(x: Tensor) -> Tensor:
            return t_sum(t_mul(scan_batch(x, p, reverse=reverse), proj))

        assert gradient_check(lambda: loss_of(xs), p.named_parameters()).passed(1e-6)

        with Tape(track_parameters=False) as tape:
            tape.watch(xs)
            out = loss_of(xs)
        analytic = backward(tape, out).of(xs)
        numeric = finite_diff_grad(loss_of, xs)
        np.testing.assert_allclose(analytic, numeric, rtol=0, atol=1e-8)


class TestBidirectional:
    """Test the bidirectional wrapper."""

    def _pair(self, seed: int = 0) -> tuple[CellParams, CellParams]:
        return make_params(CellKind.LSTM, 2, 2, seed), make_params(CellKind.LSTM, 2, 2, seed + 1)

    def test_output_shape(self) -> None:
        """Test [T, 2D] output."""
        f, b = self._pair()
        assert bilstm(np.zeros((5, 2)), BiRNNParams(f, b)).shape == (5, 4)

    def test_forward_only(self) -> None:
        """Test [T, D] output without a backward direction."""
        f, _ = self._pair()
        assert bilstm(np.ones((5, 2)), BiRNNParams(f)).shape == (5, 2)

    def test_zero_weights_give_zero(self) -> None:
        """Test all-zero parameters produce all-zero outputs."""
        p = BiRNNParams(LSTMCellParams.zeros(2, 2), LSTMCellParams.zeros(2, 2))
        xs = np.random.default_rng(0).standard_normal((4, 2))
        assert np.array_equal(bilstm(xs, p).data, np.zeros((4, 4)))

    def test_is_concat_of_two_scans(self) -> None:
        """Test the exact composition of forward and restored backward scans."""
        f, b = self._pair(3)
        xs = np.random.default_rng(3).standard_normal((3, 2))
        expected = np.concatenate(
            [rnn_scan(xs, f).data, rnn_scan(xs, b, reverse=True).data], axis=-1
        )
        assert np.array_equal(bilstm(xs, BiRNNParams(f, b)).data, expected)

    def test_direction_swap_symmetry(self) -> None:
        """Test that swapping directions and reversing time swaps channel halves."""
        f, b = self._pair(4)
        xs = np.random.default_rng(4).standard_normal((6, 2))
        out = bilstm(xs, BiRNNParams(f, b)).data
        swapped = bilstm(xs[::-1].copy(), BiRNNParams(b, f)).data[::-1]
        np.testing.assert_allclose(
            swapped, np.concatenate([out[:, 2:], out[:, :2]], axis=-1), rtol=0, atol=1e-12
        )

    def test_outputs_bounded(self) -> None:
        """Test |h| <= 1 everywhere."""
        f, b = self._pair(5)
        xs = np.random.default_rng(5).standard_normal((10, 2)) * 50
        assert np.all(np.abs(bilstm(xs, BiRNNParams(f, b)).data) <= 1.0)

    def test_batch_matches_oracle(self) -> None:
        """Test birnn_batch against the per-sequence reference."""
        p = BiRNNParams.create(CellKind.GRU, 3, 2, np.random.default_rng(6), np.float64)
        xs = np.random.default_rng(6).standard_normal((3, 4, 3))
        out = birnn_batch(Tensor(xs), p).data
        for n in range(3):
            np.testing.assert_allclose(out[n], oracles.birnn(xs[n], p), rtol=0, atol=1e-12)

    def test_size_mismatch(self) -> None:
        """Test that both directions must agree on sizes."""
        with pytest.raises(ShapeError):
            BiRNNParams(make_params(CellKind.LSTM, 2, 2), make_params(CellKind.LSTM, 2, 3))

    def test_kind_mismatch(self) -> None:
        """Test that both directions must use the same cell."""
        with pytest.raises(ShapeError):
            BiRNNParams(make_params(CellKind.LSTM, 2, 2), make_params(CellKind.GRU, 2, 2))

    def test_no_shared_weights(self) -> None:
        """Test that created directions are distinct parameters."""
        p = BiRNNParams.create(CellKind.LSTM, 4, 2, np.random.default_rng(0))
        assert p.backward is not None
        assert p.forward.weight_ih is not p.backward.weight_ih
        assert not np.array_equal(p.forward.weight_ih.data, p.backward.weight_ih.data)
        assert p.output_size == 4
