import numpy as np
import pytest

from permrnn import tasks
from permrnn import tensor as T
from permrnn import training as TR
from permrnn.constructions import parity_model
from permrnn.errors import ConfigError, TrainingDiverged
from permrnn.models import Encoding, MlpParams, SequenceModel, additive_cell, make_gru_model, make_rnn_model
from permrnn.regularizers import SamplerConfig
from permrnn.tensor import Tensor


def sum_model():
    """Exact sum: additive state, identity head, raw inputs."""
    return SequenceModel(additive_cell(), MlpParams.identity(1), Encoding("raw", 9))


def small_rnn(seed=0, enc=Encoding("scalar", 9)):
    return make_rnn_model(enc, 4, 2, np.random.default_rng(seed), output_scale=9.0)


# ---------------------------------------------------------------------------
# config


@pytest.mark.parametrize("kw", [dict(optimizer="rmsprop"), dict(regularizer="l2"), dict(loss="hinge"),
                                dict(learning_rate=0.0), dict(epochs=0), dict(batch_size=0), dict(lam=-1.0)])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ConfigError):
        TR.TrainingConfig(**kw)


def test_config_defaults():
    cfg = TR.TrainingConfig()
    assert (cfg.optimizer, cfg.learning_rate, cfg.epochs, cfg.batch_size) == ("adam", 1e-3, 1000, 32)
    assert cfg.clip_norm == 5.0


# ---------------------------------------------------------------------------
# losses


def test_lambda_zero_total_is_task_loss():
    model = small_rnn()
    batch = tasks.gen_arithmetic("sum", 16, 5, 9, seed=0)
    plain = TR.TrainingConfig(loss="l1")
    reg = plain.replace(regularizer="sire", lam=0.0)
    a, task_a, r_a = TR.total_loss(model, batch, plain)
    b, task_b, r_b = TR.total_loss(model, batch, reg)
    assert a.item() == b.item() == task_a == task_b
    assert r_a == r_b == 0.0


def test_perfect_sum_model_has_zero_loss():
    batch = tasks.gen_arithmetic("sum", 16, 5, 9, seed=1)
    for loss in ("l1", "mse"):
        assert TR.total_loss(sum_model(), batch, TR.TrainingConfig(loss=loss))[0].item() == 0.0


def test_parity_with_sire_adds_nothing():
    model = parity_model()
    batch = tasks.gen_parity(32, 2, 8, seed=0)
    cfg = TR.TrainingConfig(loss="mse", regularizer="sire", lam=0.5)
    total, task, reg = TR.total_loss(model, batch, cfg)
    assert reg <= 1e-12
    assert total.item() == pytest.approx(task, abs=1e-12)


def test_cross_entropy_requires_logit_head():
    batch = tasks.gen_parity(8, 2, 4, seed=0)
    with pytest.raises(ConfigError):
        TR.total_loss(parity_model(), batch, TR.TrainingConfig(loss="cross-entropy"))


def test_regression_loss_on_logit_head_rejected():
    model = make_rnn_model(Encoding("raw", 1), 3, 1, np.random.default_rng(0), output="logit")
    with pytest.raises(ConfigError):
        TR.total_loss(model, tasks.gen_parity(8, 2, 4, seed=0), TR.TrainingConfig(loss="l1"))


def test_cross_entropy_rejects_non_binary_labels():
    model = make_rnn_model(Encoding("scalar", 9), 3, 1, np.random.default_rng(0), output="logit")
    with pytest.raises(ConfigError):
        TR.total_loss(model, tasks.gen_arithmetic("sum", 4, 3, 9, seed=0), TR.TrainingConfig(loss="cross-entropy"))


# ---------------------------------------------------------------------------
# optimizers


@pytest.mark.parametrize("step", [TR.sgd_step, TR.adam_step])
def test_zero_gradient_leaves_parameters(step):
    p = Tensor([1.0, -2.0], requires_grad=True)
    step([p], [np.zeros(2)], {}, 0.1)
    assert p.data.tolist() == [1.0, -2.0]


def test_sgd_descends_on_a_parabola():
    p = Tensor([3.0], requires_grad=True)
    values = []
    for _ in range(20):
        p.zero_grad()
        T.backward(T.sum(T.square(p)))
        TR.sgd_step([p], [p.grad], {}, 0.05)
        values.append(abs(p.data[0]))
    assert all(b < a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("scale", [1e-4, 1.0, 1e4])
def test_adam_first_step_is_learning_rate(scale):
    p = Tensor([0.0, 0.0], requires_grad=True)
    TR.adam_step([p], [np.array([scale, -scale])], {}, 1e-3)
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3], rtol=1e-4)


def test_clip_grad_norm():
    grads = [np.array([3.0]), np.array([4.0])]
    assert TR.clip_grad_norm(grads, 1.0) == 5.0
    np.testing.assert_allclose([g[0] for g in grads], [0.6, 0.8])


def test_one_step_decreases_a_convex_loss():
    rng = np.random.default_rng(0)
    X = Tensor(rng.normal(size=(20, 3)))
    y = rng.normal(size=20)
    w = Tensor(np.zeros(3), requires_grad=True)
    loss = lambda: T.mean(T.square(T.sub(T.matvec(X, w), Tensor(y))))
    before = loss()
    T.backward(before)
    TR.sgd_step([w], [w.grad], {}, 0.01)
    assert loss().item() < before.item()


# ---------------------------------------------------------------------------
# metrics


def test_round_half_away_from_zero():
    assert TR.round_half_away([0.5, 1.5, -0.5, 2.4, -2.6]).tolist() == [1, 2, -1, 2, -3]


class Fixed:
    """Model whose readout is a fixed vector."""

    output = "regression"

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def forward(self, X, lengths=None):
        return Tensor(self.values[:len(X)])


def test_accuracy_rounding_rule():
    ds = tasks.SequenceDataset([[5], [5]], [5, 5], "sum", 9, 0)
    assert TR.evaluate_accuracy(Fixed([5.4, 5.6]), ds) == 0.5


def test_accuracy_of_perfect_and_constant_models():
    ds = tasks.gen_arithmetic("sum", 50, 5, 9, seed=0)
    assert TR.evaluate_accuracy(sum_model(), ds) == 1.0
    parity = tasks.gen_parity(3000, 2, 10, seed=0)
    assert TR.evaluate_accuracy(parity_model(), parity) == 1.0
    chance = TR.evaluate_accuracy(Fixed(np.zeros(3000)), parity)
    assert abs(chance - 0.5) < 0.05


def test_rmse_examples():
    one = tasks.SequenceDataset([[1]], [1], "sum", 9, 0)
    assert TR.evaluate_rmse(Fixed([3.0]), one) == 2.0
    ds = tasks.gen_arithmetic("variance", 100, 4, 9, seed=0)
    assert TR.evaluate_rmse(Fixed(np.full(100, ds.labels.mean())), ds) == pytest.approx(ds.labels.std())
    assert TR.evaluate_rmse(sum_model(), tasks.gen_arithmetic("sum", 10, 3, 9, seed=0)) == 0.0


def test_metric_for():
    assert TR.metric_for("variance") == (TR.evaluate_rmse, False)
    assert TR.metric_for("sum") == (TR.evaluate_accuracy, True)


# ---------------------------------------------------------------------------
# fit and selection


def test_fit_report_shape_and_csv():
    data = tasks.gen_arithmetic("sum", 40, 4, 9, seed=0)
    train, hold = data.split(0.25, np.random.default_rng(0))
    report = TR.fit(small_rnn(), train, hold, TR.TrainingConfig(epochs=3, learning_rate=0.01))
    assert len(report.rows) == 3
    assert all(np.isfinite(v) for row in report.rows for v in row)
    lines = report.to_csv().splitlines()
    assert lines[0] == TR.CSV_HEADER and len(lines) == 4
    assert report.config["epochs"] == 3


def test_fit_learns_sum():
    data = tasks.gen_arithmetic("sum", 200, 3, 4, seed=0)
    train, hold = data.split(0.2, np.random.default_rng(0))
    model = make_rnn_model(Encoding("scalar", 4), 4, 2, np.random.default_rng(1), activation="relu",
                           output_scale=4.0)
    report = TR.fit(model, train, hold, TR.TrainingConfig(epochs=60, learning_rate=0.01))
    assert report.rows[-1][1] < report.rows[0][1]
    assert report.final_holdout > 0.5


def test_none_and_zero_lambda_sire_trajectories_identical():
    data = tasks.gen_arithmetic("sum", 30, 4, 9, seed=0)
    train, hold = data.split(0.2, np.random.default_rng(0))
    cfg = TR.TrainingConfig(epochs=2, learning_rate=0.01)
    a, b = small_rnn(3), small_rnn(3)
    TR.fit(a, train, hold, cfg)
    TR.fit(b, train, hold, cfg.replace(regularizer="sire", lam=0.0))
    for p, q in zip(a.parameters(), b.parameters()):
        assert p.data.tobytes() == q.data.tobytes()


@pytest.mark.parametrize("reg", ["sire", "sub"])
def test_regularized_fit_is_deterministic(reg):
    data = tasks.gen_arithmetic("sum", 30, 4, 9, seed=0)
    train, hold = data.split(0.2, np.random.default_rng(0))
    cfg = TR.TrainingConfig(epochs=2, learning_rate=0.01, regularizer=reg, lam=0.1,
                            sampler=SamplerConfig(states_per_batch=8))
    ra = TR.fit(small_rnn(5), train, hold, cfg)
    rb = TR.fit(small_rnn(5), train, hold, cfg)
    assert ra.to_csv() == rb.to_csv()
    assert all(row[2] >= 0 for row in ra.rows)


def test_detached_states_train():
    data = tasks.gen_arithmetic("sum", 30, 4, 9, seed=0)
    train, hold = data.split(0.2, np.random.default_rng(0))
    model = make_gru_model(Encoding("scalar", 9), 3, np.random.default_rng(0), output_scale=9.0)
    cfg = TR.TrainingConfig(epochs=1, regularizer="sire", lam=0.1, detach_states=True)
    assert TR.fit(model, train, hold, cfg).rows[0][2] > 0


def test_divergence_is_reported():
    data = tasks.gen_arithmetic("sum", 8, 3, 9, seed=0)
    model = small_rnn()
    model.cell.params.W_x.data[:] = np.nan
    with pytest.raises(TrainingDiverged):
        TR.fit(model, data, data, TR.TrainingConfig(epochs=1))


def test_holdout_select_single_config_and_ties():
    data = tasks.gen_parity(20, 2, 6, seed=0)
    cfg = TR.TrainingConfig(epochs=1, learning_rate=1e-9, loss="mse")
    sel = TR.holdout_select([cfg], data, lambda c: parity_model())
    assert sel.best_index == 0 and sel.best_config is cfg
    grid = [cfg.replace(regularizer="sire", lam=lam) for lam in (0.1, 0.001, 0.01)]
    sel = TR.holdout_select(grid, data, lambda c: parity_model())
    # the exact model scores 1.0 everywhere, so the smallest lambda wins the tie
    assert sel.best_config.lam == 0.001


def test_holdout_select_is_deterministic():
    data = tasks.gen_arithmetic("sum", 30, 3, 9, seed=0)
    grid = [TR.TrainingConfig(epochs=2, learning_rate=0.01, regularizer="sire", lam=lam) for lam in (0.001, 0.1)]
    a = TR.holdout_select(grid, data, lambda c: small_rnn(1), split_seed=2)
    b = TR.holdout_select(grid, data, lambda c: small_rnn(1), split_seed=2)
    assert a.best_index == b.best_index
    assert [r.to_csv() for r in a.reports] == [r.to_csv() for r in b.reports]


def test_holdout_select_needs_configs():
    with pytest.raises(ConfigError):
        TR.holdout_select([], tasks.gen_arithmetic("sum", 5, 3, 9), lambda c: sum_model())
