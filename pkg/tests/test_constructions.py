import numpy as np
import pytest

from permrnn import constructions as C
from permrnn import models as M
from permrnn import tensor as T
from permrnn.errors import ContractError, UnsupportedError
from permrnn.rng import stream
from permrnn.tensor import Tensor
from permrnn.training import adam_step


# ---------------------------------------------------------------------------
# parity RNN


def test_parity_weights_and_parameter_count():
    p = C.build_parity_rnn()
    assert p.W_out.data.tolist() == [[1, -1, -1]]
    assert p.W_x.data.tolist() == [[2], [2], [2]]
    assert p.W_s.data.tolist() == [[2], [2], [2]]
    assert p.B.data.tolist() == [0, -1, -3]
    assert p.s0.data.tolist() == [0]
    assert p.activation == "relu"
    assert p.hidden == 3
    assert p.parameter_count() == 12


@pytest.mark.parametrize("s,x,want", [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)])
def test_parity_step_is_xor(s, x, want):
    assert M.rnn_step(C.build_parity_rnn(), Tensor([s]), Tensor([x])).data.tolist() == [want]


def test_parity_oracle_examples():
    assert C.parity_oracle([]) == 0
    assert C.parity_oracle([1, 1, 1]) == 1
    assert C.parity_oracle([1, 0, 1, 1]) == 1
    with pytest.raises(ContractError):
        C.parity_oracle([0, 2])


def test_all_length_ten_sequences_via_run_sequence():
    cell = M.RnnCell(C.build_parity_rnn())
    for row in C.all_binary_sequences(10):
        assert M.run_sequence(cell, cell.initial_state(), row).data[0] == C.parity_oracle(row)


def test_all_binary_sequences_counting_order():
    assert C.all_binary_sequences(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert C.all_binary_sequences(0).shape == (1, 0)


def test_exhaustive_check_passes_and_catches_a_broken_model():
    good = C.exhaustive_parity_check(C.parity_model(), max_len=12)
    assert good.passed and good.max_deviation <= 1e-9
    assert good.sequences == 2 ** 13 - 1
    broken = C.parity_model()
    broken.cell.params.B.data = np.array([0.0, -1.0, -2.5])
    assert not C.exhaustive_parity_check(broken, max_len=6).passed


# ---------------------------------------------------------------------------
# binary DeepSets reduction


def dyadic_mlp(widths, rng, final_activation="identity"):
    """Weights on a 1/8 grid keep every sum exact in float64."""
    net = M.MlpParams.init(widths, rng, final_activation=final_activation)
    for p in net.parameters():
        p.data = np.round(rng.uniform(-2, 2, p.shape) * 8) / 8
    return net


def test_identity_phi_reduction_is_rho():
    rho = M.MlpParams.init([1, 4, 1], np.random.default_rng(0))
    red = C.reduce_binary_deepsets(M.MlpParams.identity(1), rho, 5)
    assert red.v0.tolist() == [0.0] and red.v1.tolist() == [1.0]
    for z in range(6):
        np.testing.assert_array_equal(red(np.array([float(z)])), rho(Tensor([float(z)])).data)


def test_reduction_exact_on_length_six():
    rng = np.random.default_rng(1)
    params = M.DeepSetsParams(dyadic_mlp([1, 3, 3], rng, "relu"), dyadic_mlp([3, 3, 1], rng))
    assert C.reduction_mismatch(params, 6) == 0.0


def test_constant_phi_gives_constant_reduction():
    phi = M.MlpParams.from_arrays([[[0.0]]], [[2.0]], ["identity"])
    rho = M.MlpParams.init([1, 3, 1], np.random.default_rng(2))
    red = C.reduce_binary_deepsets(phi, rho, 4)
    vals = [red(z).tolist() for z in range(5)]
    assert all(v == vals[0] for v in vals)


def test_reduction_contract():
    with pytest.raises(ContractError):
        C.reduce_binary_deepsets(M.MlpParams.identity(1), M.MlpParams.identity(1), 0)


# ---------------------------------------------------------------------------
# segment tracing


def grid_slope_changes(net, lo, hi, step=1e-3):
    xs = np.arange(lo, hi + step / 2, step)
    with T.no_grad():
        ys = net.forward(Tensor(xs[:, None])).data[:, 0]
    slopes = np.diff(ys) / step
    return 1 + int(np.sum(np.abs(np.diff(slopes)) > 1e-6))


def test_single_relu():
    pl = C.trace_piecewise_linear(M.MlpParams.from_arrays([[[1.0]]], [[0.0]], ["relu"]), -1, 1)
    assert pl.num_segments == 2 and pl.breakpoints == [0.0]


def test_two_kink_example():
    net = M.MlpParams.from_arrays([[[1.0], [1.0]], [[1.0, -2.0]]], [[0.0, -1.0], [0.0]], ["relu", "identity"])
    pl = C.trace_piecewise_linear(net, -1, 3)
    assert pl.num_segments == 3
    assert pl.num_segments <= grid_slope_changes(net, -1, 3)


def test_affine_net_is_one_segment():
    net = M.MlpParams.from_arrays([[[3.0]]], [[1.0]], ["identity"])
    assert C.trace_piecewise_linear(net, -5, 5).num_segments == 1


def test_trace_rejects_smooth_units():
    net = M.MlpParams.from_arrays([[[1.0]]], [[0.0]], ["tanh"])
    with pytest.raises(UnsupportedError):
        C.trace_piecewise_linear(net, 0, 1)


def test_trace_rejects_empty_domain():
    with pytest.raises(ContractError):
        C.trace_piecewise_linear(M.MlpParams.from_arrays([[[1.0]]], [[0.0]], ["relu"]), 1, 1)


def test_equal_slope_neighbours_merge():
    # relu(x) - relu(x): two coincident kinks that cancel
    net = M.MlpParams.from_arrays([[[1.0], [1.0]], [[1.0, -1.0]]], [[0.0, 0.0], [0.0]], ["relu", "identity"])
    assert C.trace_piecewise_linear(net, -2, 2).num_segments == 1


def random_relu_net(rng, depth, width):
    widths = [1] + [width] * depth + [1]
    return M.MlpParams.init(widths, rng, activation="relu")


@pytest.mark.parametrize("depth,width", [(1, 2), (2, 3), (3, 4)])
def test_trace_matches_dense_grid(depth, width):
    for draw in range(20):
        net = random_relu_net(stream(draw, f"test:trace:{depth}:{width}"), depth, width)
        pl = C.trace_piecewise_linear(net, -3, 3)
        xs = np.linspace(-3, 3, 10_000)
        with T.no_grad():
            want = net.forward(Tensor(xs[:, None])).data[:, 0]
        np.testing.assert_allclose(pl(xs), want, rtol=0, atol=1e-9)
        assert list(pl.breakpoints) == sorted(set(pl.breakpoints))
        assert all(abs(a - b) > C.SLOPE_TOL for a, b in zip(pl.slopes, pl.slopes[1:]))


def fit_parity_rho(n, seed, steps=3000):
    rng = np.random.default_rng(seed)
    rho = M.MlpParams.init([1, 32, 1], rng)
    counts = np.arange(n + 1, dtype=float)
    state = {}
    for _ in range(steps):
        for p in rho.parameters():
            p.zero_grad()
        loss = T.bce_with_logits(T.reshape(rho.forward(Tensor(counts[:, None])), (-1,)), counts % 2)
        T.backward(loss)
        adam_step(rho.parameters(), [p.grad for p in rho.parameters()], state, 0.01)
    with T.no_grad():
        fitted = rho.forward(Tensor(counts[:, None])).data[:, 0] > 0
    return rho, fitted.tolist() == [bool(c % 2) for c in range(n + 1)]


def test_trained_parity_rho_has_a_segment_per_count():
    n = 5
    for seed in range(5):
        rho, ok = fit_parity_rho(n, seed)
        if ok:
            break
    assert ok, "no seed fitted parity on the counts"
    assert C.trace_piecewise_linear(rho, 0, n).num_segments >= n


# ---------------------------------------------------------------------------
# unit bound


@pytest.mark.parametrize("n,want", [(32, 20), (64, 24), (2 ** 10, 40)])
def test_min_deepsets_units_examples(n, want):
    assert C.min_deepsets_units(n) == want


@pytest.mark.parametrize("n", [48, 16, 0])
def test_min_deepsets_units_contract(n):
    with pytest.raises(ContractError):
        C.min_deepsets_units(n)
