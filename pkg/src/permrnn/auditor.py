"""Empirical invariance audits on final states.

Three probes: whole-sequence permutations, permutations of element subsets,
and two-element swaps from reachable states. Violations are squared L2
distances between final states; with ``outputs=True`` the same distances
are also taken after the readout head.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .models import Encoding, MlpParams, SequenceModel, TableCell, pad_batch
from .regularizers import StateBank, exhaustive_bank, materialize
from .rng import stream
from .tensor import Tensor

PROBES = ("full-perm", "subset-perm", "pair-swap")
EXHAUSTIVE_MAX_LEN = 6
EXHAUSTIVE_MAX_ALPHABET = 2
CSV_HEADER = "probe,seed,num_probes,mean_sq_violation,max_violation,output_mean_sq,output_max"


@dataclass(frozen=True)
class AuditReport:
    mean_violation: float
    max_violation: float
    num_probes: int
    probe: str
    seed: int
    output_mean: float | None = None
    output_max: float | None = None

    def __post_init__(self):
        if self.probe not in PROBES:
            raise ContractError(f"unknown probe {self.probe!r}")
        if self.num_probes < 1:
            raise ContractError("an audit needs at least one probe")
        if self.mean_violation < 0 or self.max_violation < 0:
            raise ContractError("violations are squared distances")

    @property
    def invariant(self) -> bool:
        return self.max_violation == 0.0

    def csv_row(self) -> str:
        def f(v):
            return "" if v is None else repr(float(v))
        return ",".join([self.probe, str(self.seed), str(self.num_probes), f(self.mean_violation),
                         f(self.max_violation), f(self.output_mean), f(self.output_max)])

    def summary(self) -> str:
        text = (f"{self.probe}: {self.num_probes} probes, mean sq violation {self.mean_violation:.6g}, "
                f"max {self.max_violation:.6g}")
        if self.output_mean is not None:
            text += f"; output mean {self.output_mean:.6g}, max {self.output_max:.6g}"
        return text


def _sequences(data):
    seqs = data.sequences if hasattr(data, "sequences") else data
    return [np.asarray(s, dtype=np.int64) for s in seqs]


def _final(model, seqs, S=None):
    X, lengths = pad_batch(seqs)
    with T.no_grad():
        return model.final_states(X, lengths, S)


def _compare(model, first, second, probe, seed, outputs, S=None) -> AuditReport:
    """Squared distances between the final states of paired sequence lists."""
    if not first:
        raise ContractError(f"{probe} audit produced no probes")
    A = _final(model, first, S)
    B = _final(model, second, S)
    d = np.sum((A.data - B.data) ** 2, axis=1)
    out_mean = out_max = None
    if outputs:
        with T.no_grad():
            od = (model.readout(A).data - model.readout(B).data) ** 2
        out_mean, out_max = float(od.mean()), float(od.max())
    return AuditReport(float(d.mean()), float(d.max()), len(d), probe, seed, out_mean, out_max)


def distinct_orderings(values):
    """All distinct orderings of a multiset, in lexicographic order."""
    return sorted(set(itertools.permutations(int(v) for v in values)))


def _check_exhaustive(seqs):
    if any(len(s) > EXHAUSTIVE_MAX_LEN for s in seqs):
        raise ContractError(f"exhaustive audits are capped at length {EXHAUSTIVE_MAX_LEN}")
    values = set(int(v) for s in seqs for v in s)
    if len(values) > EXHAUSTIVE_MAX_ALPHABET:
        raise ContractError(f"exhaustive audits are capped at {EXHAUSTIVE_MAX_ALPHABET} symbols")


# ---------------------------------------------------------------------------
# the three probes


def audit_perm_invariance(model, dataset, perms_per_seq: int = 8, seed: int = 0, outputs: bool = False,
                          exhaustive: bool = False) -> AuditReport:
    """Each sequence in data order against permuted copies of itself.

    ``exhaustive`` replaces sampling with every distinct reordering.
    """
    if perms_per_seq < 1:
        raise ContractError("perms_per_seq must be at least 1")
    seqs = _sequences(dataset)
    first, second = [], []
    if exhaustive:
        _check_exhaustive(seqs)
        for s in seqs:
            for order in distinct_orderings(s):
                first.append(s)
                second.append(np.array(order, dtype=np.int64))
    else:
        rng = stream(seed, "audit:full-perm")
        for s in seqs:
            for _ in range(perms_per_seq):
                first.append(s)
                second.append(s[rng.permutation(len(s))])
    return _compare(model, first, second, "full-perm", seed, outputs)


def audit_subset_invariance(model, dataset, subsets_per_seq: int = 4, perms_per_subset: int = 4,
                            seed: int = 0, outputs: bool = False, subset_size: int | None = None,
                            exhaustive: bool = False) -> AuditReport:
    """Random element subsets of each sequence, two random orderings each.

    Subset sizes are uniform on ``0..len`` unless ``subset_size`` fixes them.
    ``exhaustive`` compares every distinct ordering of every sub-multiset
    against its sorted ordering, so zero violation means all orderings of
    every subset agree.
    """
    if subsets_per_seq < 1 or perms_per_subset < 1:
        raise ContractError("subset and permutation counts must be at least 1")
    seqs = _sequences(dataset)
    first, second = [], []
    if exhaustive:
        _check_exhaustive(seqs)
        multisets = set()
        for s in seqs:
            for k in range(len(s) + 1):
                for idx in itertools.combinations(range(len(s)), k):
                    multisets.add(tuple(sorted(int(s[i]) for i in idx)))
        for ms in sorted(multisets, key=lambda t: (len(t), t)):
            for order in distinct_orderings(ms):
                first.append(np.array(ms, dtype=np.int64))
                second.append(np.array(order, dtype=np.int64))
    else:
        rng = stream(seed, "audit:subset-perm")
        for s in seqs:
            n = len(s)
            for _ in range(subsets_per_seq):
                m = int(rng.integers(0, n + 1)) if subset_size is None else subset_size
                if m > n:
                    raise ContractError(f"subset size {m} exceeds sequence length {n}")
                sub = s[rng.choice(n, size=m, replace=False)]
                for _ in range(perms_per_subset):
                    first.append(sub[rng.permutation(m)])
                    second.append(sub[rng.permutation(m)])
    return _compare(model, first, second, "subset-perm", seed, outputs)


def audit_pair_swap(model, bank: StateBank, inputs, pairs: int | None = 64, seed: int = 0,
                    outputs: bool = False) -> AuditReport:
    """Squared ``f(s, x1, x2) - f(s, x2, x1)`` over (state, x1, x2) triples.

    States come from ``bank`` (re-materialized if the bank holds none);
    ``x1, x2`` are drawn from ``inputs``. ``pairs=None`` enumerates every
    banked state against every ordered pair of distinct input values.
    """
    if len(bank) == 0:
        raise ContractError("state bank is empty")
    inputs = np.asarray(inputs, dtype=np.int64).ravel()
    if inputs.size == 0:
        raise ContractError("no inputs to draw pairs from")
    with T.no_grad():
        states = bank.states if len(bank.states) == len(bank) else materialize(model, bank).data
    if pairs is None:
        values = np.unique(inputs)
        combos = np.array(list(itertools.product(values, values)), dtype=np.int64)
        si = np.repeat(np.arange(len(bank)), len(combos))
        x1 = np.tile(combos[:, 0], len(bank))
        x2 = np.tile(combos[:, 1], len(bank))
    else:
        if pairs < 1:
            raise ContractError("pairs must be at least 1")
        rng = stream(seed, "audit:pair-swap")
        si = rng.integers(len(bank), size=pairs)
        x1 = rng.choice(inputs, size=pairs)
        x2 = rng.choice(inputs, size=pairs)
    S = Tensor._wrap(states[si])
    return _compare(model, list(np.stack([x1, x2], 1)), list(np.stack([x2, x1], 1)), "pair-swap", seed,
                    outputs, S=S)


def exhaustive_pair_swap(model, dataset, outputs: bool = False) -> AuditReport:
    """Pair-swap audit over every reachable state and every input pair."""
    seqs = _sequences(dataset)
    _check_exhaustive(seqs)
    bank = exhaustive_bank(dataset)
    return audit_pair_swap(model, bank, np.concatenate(seqs), None, 0, outputs)


# ---------------------------------------------------------------------------
# swap chains


def _check_perm(perm):
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(len(perm))):
        raise ContractError(f"not a permutation of 0..{len(perm) - 1}: {perm}")
    return perm


def swap_chain(perm) -> list:
    """Swaps ``(i, j)`` that turn the identity into ``perm``.

    Walk left to right; at the first position ``i`` whose entry differs from
    ``perm[i]``, swap it with the position currently holding ``perm[i]``.
    """
    perm = _check_perm(perm)
    cur = list(range(len(perm)))
    where = list(range(len(perm)))
    chain = []
    for i, want in enumerate(perm):
        if cur[i] == want:
            continue
        j = where[want]
        chain.append((i, j))
        cur[i], cur[j] = cur[j], cur[i]
        where[cur[i]], where[cur[j]] = i, j
    return chain


def adjacent_transpositions(i: int, j: int) -> list:
    """Adjacent swaps equal to swapping positions ``i`` and ``j``.

    Bubble the left element right to ``j``, then the displaced right element
    back to ``i``: ``2 |j - i| - 1`` steps.
    """
    i, j = sorted((int(i), int(j)))
    if i == j:
        return []
    right = [(k, k + 1) for k in range(i, j)]
    left = [(k, k + 1) for k in range(j - 2, i - 1, -1)]
    return right + left


def adjacent_chain(perm) -> list:
    """``swap_chain`` with every swap expanded into adjacent transpositions."""
    return [t for i, j in swap_chain(perm) for t in adjacent_transpositions(i, j)]


def apply_swaps(seq, swaps) -> list:
    out = list(seq)
    for i, j in swaps:
        out[i], out[j] = out[j], out[i]
    return out


def adjacent_swap_violation(model, dataset) -> float:
    """Largest squared state gap between a sequence and any adjacent transposition of it."""
    first, second = [], []
    for s in _sequences(dataset):
        for i in range(len(s) - 1):
            if s[i] != s[i + 1]:
                first.append(s)
                second.append(np.array(apply_swaps(s, [(i, i + 1)]), dtype=np.int64))
    if not first:
        return 0.0
    A, B = _final(model, first), _final(model, second)
    return float(np.max(np.sum((A.data - B.data) ** 2, axis=1)))


# ---------------------------------------------------------------------------
# small finite-state cells for the exhaustive equivalence checks


def table_model(table, s0: int = 0) -> SequenceModel:
    return SequenceModel(TableCell(table, s0), MlpParams.identity(1), Encoding("raw", 1))


def length_counter_table(n: int, alphabet: int = 2):
    """Remembers the last symbol while counting, then collapses at count ``n``.

    State 0 is the start, ``1 + (c - 1) * alphabet + x`` means "c symbols
    seen, the last was x" for ``c < n``, and the final state means "n or more
    seen". Every ordering of a length-``n`` sequence lands in the final state,
    but shorter sub-sequences keep their last symbol, so orderings of a mixed
    subset disagree.
    """
    if n < 2:
        raise ContractError("the witness needs n >= 2")
    final = 1 + (n - 1) * alphabet
    table = np.full((final + 1, alphabet), final, dtype=np.int64)
    for x in range(alphabet):
        table[0, x] = 1 + x
    for c in range(1, n - 1):
        for last in range(alphabet):
            for x in range(alphabet):
                table[1 + (c - 1) * alphabet + last, x] = 1 + c * alphabet + x
    return table


def random_cell_family(count: int = 50, seed: int = 0, alphabet: int = 2, max_states: int = 5):
    """Mixed family of finite-state cells for the pair-swap / subset checks.

    Cycles through four kinds: uniform random tables (mostly order
    sensitive), cyclic-group actions ``s + a_x mod m`` (commutative),
    monotone ``max(s, c_x)`` tables (commutative), and random tables made to
    commute on a random subset of states (sometimes order sensitive only on
    unreachable states).
    """
    rng = stream(seed, "audit:cell-family")
    cells = []
    for k in range(count):
        m = int(rng.integers(2, max_states + 1))
        kind = k % 4
        if kind == 0:
            table = rng.integers(0, m, size=(m, alphabet))
        elif kind == 1:
            a = rng.integers(0, m, size=alphabet)
            table = (np.arange(m)[:, None] + a[None, :]) % m
        elif kind == 2:
            c = rng.integers(0, m, size=alphabet)
            table = np.maximum(np.arange(m)[:, None], c[None, :])
        else:
            a = rng.integers(0, m, size=alphabet)
            table = (np.arange(m)[:, None] + a[None, :]) % m
            noisy = rng.random(m) < 0.3
            table[noisy] = rng.integers(0, m, size=(int(noisy.sum()), alphabet))
        cells.append(table_model(table, int(rng.integers(0, m))))
    return cells


@dataclass
class EquivalenceResult:
    cells: int
    pair_swap_zero: int
    subset_zero: int
    counterexamples: int
    adjacent_failures: int


def pair_swap_implies_subset(models, dataset) -> EquivalenceResult:
    """Exhaustive check that zero pair-swap violation gives zero subset violation.

    Also checks the adjacent-transposition consequence on every sequence.
    """
    pz = sz = bad = adjacent_bad = 0
    for model in models:
        pair_zero = exhaustive_pair_swap(model, dataset).invariant
        subset_zero = audit_subset_invariance(model, dataset, exhaustive=True).invariant
        pz += pair_zero
        sz += subset_zero
        if pair_zero and not subset_zero:
            bad += 1
        if pair_zero and adjacent_swap_violation(model, dataset) != 0.0:
            adjacent_bad += 1
    return EquivalenceResult(len(models), pz, sz, bad, adjacent_bad)
