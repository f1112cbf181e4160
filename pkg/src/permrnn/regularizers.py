"""Invariance penalties for recurrent models.

``sire_penalty`` compares two-step continuations ``f(s, x1, x2)`` and
``f(s, x2, x1)`` from states reachable on training data; ``sub_penalty``
compares two random orderings of a random sub-sequence. Both return
differentiable scalar tensors.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .models import pad_batch
from .rng import stream
from .tensor import Tensor


@dataclass(frozen=True)
class SamplerConfig:
    states_per_batch: int = 32
    subset_lengths: str = "uniform"  # "uniform" over 0..len, or "prefix"
    pairs_per_state: int = 1
    seed: int = 0
    fixed_length: int | None = None  # force every subset to this length

    def __post_init__(self):
        if self.states_per_batch < 1 or self.pairs_per_state < 1:
            raise ContractError("sampler counts must be at least 1")
        if self.subset_lengths not in ("uniform", "prefix"):
            raise ContractError(f"unknown subset length distribution {self.subset_lengths!r}")


@dataclass(frozen=True)
class StateBank:
    """Reachable states, each tagged with the sub-sequence that produced it.

    ``provenance[i]`` is ``(sequence id, element indices in fold order)``.
    ``states`` is a snapshot taken when the bank was collected.
    """

    states: np.ndarray
    provenance: tuple
    sequences: tuple
    seed: int

    def __len__(self):
        return len(self.provenance)

    def subsequences(self):
        return [self.sequences[sid][list(idx)] for sid, idx in self.provenance]


def _rng(seed_or_rng, purpose):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return stream(int(seed_or_rng or 0), purpose)


def _subset_indices(rng, n, cfg: SamplerConfig):
    m = cfg.fixed_length if cfg.fixed_length is not None else int(rng.integers(0, n + 1))
    if m > n:
        raise ContractError(f"subset length {m} exceeds sequence length {n}")
    if cfg.subset_lengths == "prefix":
        return tuple(range(m))
    return tuple(int(i) for i in rng.choice(n, size=m, replace=False))


def sample_bank(dataset, cfg: SamplerConfig, rng) -> StateBank:
    """Draw bank provenance only; ``states`` is left empty.

    Ordered subsets come from sorting one uniform key per position (padding
    keys pushed to the end), which is a uniform draw without replacement.
    """
    if len(dataset) == 0:
        raise ContractError("cannot collect states from an empty dataset")
    k = cfg.states_per_batch
    sids = rng.integers(len(dataset), size=k)
    ns = np.array([len(dataset.sequences[i]) for i in sids])
    if cfg.fixed_length is not None:
        if np.any(cfg.fixed_length > ns):
            raise ContractError(f"subset length {cfg.fixed_length} exceeds sequence length {ns.min()}")
        ms = np.full(k, cfg.fixed_length)
    else:
        ms = rng.integers(0, ns + 1)
    width = int(ns.max()) if k else 0
    if cfg.subset_lengths == "prefix":
        order = np.broadcast_to(np.arange(width), (k, width))
    else:
        keys = rng.random((k, width))
        keys[np.arange(width)[None, :] >= ns[:, None]] = 2.0
        order = np.argsort(keys, axis=1, kind="stable")
    prov = tuple((int(sid), tuple(int(j) for j in order[i, :m])) for i, (sid, m) in enumerate(zip(sids, ms)))
    return StateBank(np.zeros((0,)), prov, tuple(dataset.sequences), cfg.seed)


def exhaustive_bank(dataset, max_len: int | None = None) -> StateBank:
    """Every distinct reachable ordered sub-sequence, states left empty.

    Value tuples are de-duplicated across the dataset; each keeps the first
    provenance that produced it. ``max_len`` caps the sub-sequence length.
    """
    seqs = [np.asarray(s, dtype=np.int64) for s in getattr(dataset, "sequences", dataset)]
    if not seqs:
        raise ContractError("cannot enumerate states of an empty dataset")
    seen = {}
    for sid, seq in enumerate(seqs):
        n = len(seq)
        top = n if max_len is None else min(n, max_len)
        for k in range(top + 1):
            for idx in itertools.permutations(range(n), k):
                key = tuple(int(seq[i]) for i in idx)
                if key not in seen:
                    seen[key] = (sid, idx)
    prov = tuple(seen[key] for key in sorted(seen, key=lambda t: (len(t), t)))
    return StateBank(np.zeros((0,)), prov, tuple(seqs), 0)


def collect_states(model, dataset, cfg: SamplerConfig, rng=None) -> StateBank:
    """Sample ``cfg.states_per_batch`` reachable states.

    Each draw picks a training sequence uniformly, a subset length, and an
    ordered subset of that many distinct positions; the state is the model
    folded over those elements from ``s0`` (length 0 gives ``s0``).
    """
    bank = sample_bank(dataset, cfg, _rng(rng if rng is not None else cfg.seed, "state-bank"))
    with T.no_grad():
        states = materialize(model, bank).data
    return dataclasses.replace(bank, states=states)


def materialize(model, bank: StateBank) -> Tensor:
    """Re-run every provenance fold under the model's current parameters."""
    X, lengths = pad_batch(bank.subsequences())
    return model.final_states(X, lengths)


def swap_residuals(model, S: Tensor, x1, x2) -> Tensor:
    """Rows of ``f(s, x1, x2) - f(s, x2, x1)`` for batched ``S`` (n, k)."""
    x1 = np.asarray(x1, dtype=np.int64)
    x2 = np.asarray(x2, dtype=np.int64)
    n = len(x1)
    X = np.concatenate([np.stack([x1, x2], axis=1), np.stack([x2, x1], axis=1)])
    both = model.final_states(X, S=T.concat_rows([S, S]))
    return T.sub(T.take_rows(both, np.arange(n)), T.take_rows(both, np.arange(n, 2 * n)))


def swap_residual(model, s: Tensor, x1, x2) -> Tensor:
    """``f(s, x1, x2) - f(s, x2, x1)`` for a single state vector."""
    S = T.reshape(s, (1, -1))
    return T.reshape(swap_residuals(model, S, [x1], [x2]), (-1,))


class ElementPairSampler:
    """Draws ``x1, x2`` independently from the multiset of training elements."""

    def __init__(self, dataset):
        self.elements = dataset.elements()
        if self.elements.size == 0:
            raise ContractError("dataset has no elements to sample")

    def __call__(self, rng, n):
        return rng.choice(self.elements, size=n), rng.choice(self.elements, size=n)


def _mean_sq_norm(R: Tensor) -> Tensor:
    return T.mean(T.sum(T.square(R), axis=1))


def sire_penalty(model, bank: StateBank, pair_sampler, pairs: int | None = None, rng=None,
                 detach: bool = False) -> Tensor:
    """Mean squared norm of ``swap_residual`` over sampled (state, x1, x2).

    States cycle through the bank, so ``pairs = k * len(bank)`` uses each
    banked state ``k`` times. Unless ``detach`` is set the banked states are
    re-materialized, so gradients also flow through the folds that reached
    them.
    """
    if len(bank) == 0:
        raise ContractError("state bank is empty")
    pairs = len(bank) if pairs is None else pairs
    if pairs < 1:
        raise ContractError("need at least one pair")
    rng = _rng(rng, "sire")
    S = Tensor._wrap(bank.states) if detach else materialize(model, bank)
    S = T.take_rows(S, np.arange(pairs) % len(bank))
    x1, x2 = pair_sampler(rng, pairs)
    return _mean_sq_norm(swap_residuals(model, S, x1, x2))


def sub_penalty(model, dataset, num_samples: int, rng=None, cfg: SamplerConfig | None = None) -> Tensor:
    """Mean squared state gap between two uniform orderings of a random subset."""
    if num_samples < 1:
        raise ContractError("num_samples must be at least 1")
    cfg = cfg or SamplerConfig()
    rng = _rng(rng, "sub")
    first, second = [], []
    for _ in range(num_samples):
        seq = dataset.sequences[int(rng.integers(len(dataset)))]
        sub = seq[list(_subset_indices(rng, len(seq), cfg))]
        first.append(sub[rng.permutation(len(sub))])
        second.append(sub[rng.permutation(len(sub))])
    Xa, La = pad_batch(first)
    Xb, Lb = pad_batch(second)
    return _mean_sq_norm(T.sub(model.final_states(Xa, La), model.final_states(Xb, Lb)))
