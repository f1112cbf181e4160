"""End-to-end experiment protocols shared by the CLI and the acceptance suite.

Each protocol returns plain dicts/rows so callers can print or write CSV.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tasks
from .models import Encoding, make_deepsets_model, make_gru_model, make_rnn_model
from .regularizers import SamplerConfig
from .rng import stream
from .training import TrainingConfig, evaluate_accuracy, fit, holdout_select, metric_for

PARITY_TEST_LENGTHS = (10, 20, 50, 100)
LAMBDA_GRID = (0.001, 0.01, 0.1)


# ---------------------------------------------------------------------------
# parity: RNN against DeepSets


@dataclass
class ParityProtocol:
    train_count: int = 1000
    len_lo: int = 2
    len_hi: int = 10
    test_count: int = 3000
    rnn_hidden: int = 20
    rnn_state: int = 1
    rnn_epochs: int = 300
    rnn_lr: float = 0.01
    deepsets_width: int = 100
    deepsets_epochs: int = 300
    deepsets_lr: float = 1e-3


def parity_run(arch: str, seed: int, proto: ParityProtocol = ParityProtocol(),
               test_lengths=PARITY_TEST_LENGTHS) -> dict:
    """Train one parity model; returns test accuracy per test length."""
    train = tasks.gen_parity(proto.train_count, proto.len_lo, proto.len_hi, seed)
    hold = tasks.gen_parity(proto.test_count // 10, proto.len_lo, proto.len_hi, seed, split="holdout")
    enc = Encoding("raw", 1)
    init = stream(seed, "init")
    if arch == "rnn":
        model = make_rnn_model(enc, proto.rnn_hidden, proto.rnn_state, init, output="logit")
        cfg = TrainingConfig(epochs=proto.rnn_epochs, learning_rate=proto.rnn_lr, loss="cross-entropy", seed=seed)
    elif arch == "deepsets":
        model = make_deepsets_model(enc, proto.deepsets_width, init, output="logit")
        cfg = TrainingConfig(epochs=proto.deepsets_epochs, learning_rate=proto.deepsets_lr,
                             loss="cross-entropy", seed=seed)
    else:
        raise ValueError(f"unknown parity architecture {arch!r}")
    report = fit(model, train, hold, cfg)
    out = {"arch": arch, "seed": seed, "train_acc": report.rows[-1][3]}
    for n in test_lengths:
        out[n] = evaluate_accuracy(model, tasks.gen_parity(proto.test_count, n, n, seed, split="test"))
    return out


# ---------------------------------------------------------------------------
# regularized training on integer tasks


@dataclass
class ArithmeticProtocol:
    task: str = "sum"
    train_count: int = 200
    seq_len: int = 10
    alphabet_max: int = 19
    test_count: int = 1000
    arch: str = "rnn"
    hidden: int = 8
    state: int = 2
    activation: str = "relu"
    encoding: str = "scalar"
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch_size: int = 32
    holdout_fraction: float = 0.2


def arithmetic_model(proto: ArithmeticProtocol, seed: int):
    enc = Encoding(proto.encoding, proto.alphabet_max)
    rng = stream(seed, "init")
    scale = float(proto.alphabet_max)
    if proto.arch == "gru":
        return make_gru_model(enc, proto.hidden, rng, output_scale=scale)
    return make_rnn_model(enc, proto.hidden, proto.state, rng, activation=proto.activation, output_scale=scale)


def regularized_run(proto: ArithmeticProtocol, seed: int, regularizer: str, lams=LAMBDA_GRID) -> dict:
    """Holdout-select ``lam`` over ``lams`` for one scheme; report test metric of the winner."""
    data = tasks.gen_arithmetic(proto.task, proto.train_count, proto.seq_len, proto.alphabet_max, seed)
    test = tasks.gen_arithmetic(proto.task, proto.test_count, proto.seq_len, proto.alphabet_max, seed,
                                split="test")
    base = TrainingConfig(epochs=proto.epochs, learning_rate=proto.learning_rate, batch_size=proto.batch_size,
                          loss="l1", seed=seed, sampler=SamplerConfig(states_per_batch=proto.batch_size, seed=seed))
    if regularizer == "none":
        configs = [base]
    else:
        configs = [base.replace(regularizer=regularizer, lam=lam) for lam in lams]
    sel = holdout_select(configs, data, lambda cfg: arithmetic_model(proto, seed), proto.holdout_fraction,
                         split_seed=seed)
    metric, _ = metric_for(proto.task)
    model = sel.models[sel.best_index]
    return {"seed": seed, "regularizer": regularizer, "lam": sel.best_config.lam,
            "holdout": sel.reports[sel.best_index].final_holdout, "test": metric(model, test)}


def mean_of(rows, key="test") -> float:
    return float(np.mean([r[key] for r in rows]))


HALF_RANGE = ArithmeticProtocol(task="half-range", train_count=1000, alphabet_max=19, arch="gru", hidden=16,
                                epochs=500)


def fixed_lambda_run(proto: ArithmeticProtocol, seed: int, lam: float, regularizer: str = "sire") -> dict:
    """Train once at a fixed ``lam`` (0 means unregularized) on the 80/20 split and score on fresh test data."""
    data = tasks.gen_arithmetic(proto.task, proto.train_count, proto.seq_len, proto.alphabet_max, seed)
    test = tasks.gen_arithmetic(proto.task, proto.test_count, proto.seq_len, proto.alphabet_max, seed,
                                split="test")
    train, hold = data.split(proto.holdout_fraction, stream(seed, "holdout-split"))
    cfg = TrainingConfig(epochs=proto.epochs, learning_rate=proto.learning_rate, batch_size=proto.batch_size,
                         loss="l1", seed=seed, regularizer=regularizer if lam else "none", lam=lam,
                         sampler=SamplerConfig(states_per_batch=proto.batch_size, seed=seed))
    model = arithmetic_model(proto, seed)
    report = fit(model, train, hold, cfg)
    metric, _ = metric_for(proto.task)
    return {"seed": seed, "lam": lam, "holdout": report.final_holdout, "test": metric(model, test)}
