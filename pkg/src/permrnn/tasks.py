"""Seeded generators for parity, sum, range, variance, half-range, and the
local-window pixel shuffle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .rng import stream

TASKS = ("parity", "sum", "range", "variance", "half-range")


def sum_label(xs) -> int:
    xs = _nonempty(xs)
    return int(np.sum(xs))


def range_label(xs) -> int:
    xs = _nonempty(xs)
    return int(xs.max() - xs.min())


def variance_label(xs) -> float:
    xs = _nonempty(xs).astype(np.float64)
    return float(np.mean((xs - xs.mean()) ** 2))


def half_range_label(xs) -> int:
    """max of the first floor(k/2) elements minus min of the rest."""
    xs = np.asarray(xs, dtype=np.int64)
    if len(xs) < 2:
        raise ContractError("half-range needs at least two elements")
    half = len(xs) // 2
    return int(xs[:half].max() - xs[half:].min())


def parity_label(xs) -> int:
    xs = np.asarray(xs, dtype=np.int64)
    if np.any((xs != 0) & (xs != 1)):
        raise ContractError("parity is defined on bits")
    return int(xs.sum() % 2)


def _nonempty(xs):
    xs = np.asarray(xs, dtype=np.int64)
    if xs.size == 0:
        raise ContractError("label of an empty sequence is undefined")
    return xs


ORACLES = {
    "parity": parity_label,
    "sum": sum_label,
    "range": range_label,
    "variance": variance_label,
    "half-range": half_range_label,
}


@dataclass
class SequenceDataset:
    sequences: list
    labels: np.ndarray
    task: str
    alphabet_max: int
    seed: int

    def __post_init__(self):
        self.sequences = [np.asarray(s, dtype=np.int64) for s in self.sequences]
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if len(self.sequences) != len(self.labels):
            raise ContractError("one label per sequence")
        for s in self.sequences:
            if s.size and (s.min() < 0 or s.max() > self.alphabet_max):
                raise ContractError(f"element outside [0, {self.alphabet_max}] in {s.tolist()}")

    def __len__(self):
        return len(self.sequences)

    @property
    def is_classification(self) -> bool:
        return self.task == "parity"

    def subset(self, idx) -> "SequenceDataset":
        idx = list(idx)
        return SequenceDataset([self.sequences[i] for i in idx], self.labels[idx], self.task,
                               self.alphabet_max, self.seed)

    def split(self, holdout_fraction: float, rng) -> tuple["SequenceDataset", "SequenceDataset"]:
        """Random train/holdout split; holdout gets ``round(n * fraction)`` rows (at least 1)."""
        perm = rng.permutation(len(self))
        k = max(1, int(round(len(self) * holdout_fraction)))
        return self.subset(np.sort(perm[k:])), self.subset(np.sort(perm[:k]))

    def elements(self) -> np.ndarray:
        """Multiset of all elements, in dataset order."""
        return np.concatenate(self.sequences) if self.sequences else np.zeros(0, dtype=np.int64)

    def recomputed_labels(self) -> np.ndarray:
        oracle = ORACLES[self.task]
        return np.array([oracle(s) for s in self.sequences], dtype=np.float64)


def _labelled(task, seqs, alphabet_max, seed):
    oracle = ORACLES[task]
    return SequenceDataset(seqs, [oracle(s) for s in seqs], task, alphabet_max, seed)


def gen_parity(count: int = 1000, len_lo: int = 2, len_hi: int = 10, seed: int = 0,
               split: str = "train") -> SequenceDataset:
    """Fair random bit strings with lengths uniform on ``[len_lo, len_hi]``.

    ``split`` picks an independent random stream, so a test set is a fresh
    sample rather than a re-draw of the training sequences.
    """
    if not 1 <= len_lo <= len_hi:
        raise ContractError(f"need 1 <= len_lo <= len_hi, got {len_lo}, {len_hi}")
    rng = stream(seed, f"gen:parity:{split}")
    lengths = rng.integers(len_lo, len_hi + 1, size=count)
    seqs = [rng.integers(0, 2, size=n) for n in lengths]
    return _labelled("parity", seqs, 1, seed)


def gen_arithmetic(task: str, count: int, seq_len: int, alphabet_max: int = 99, seed: int = 0,
                   split: str = "train") -> SequenceDataset:
    """i.i.d. uniform integers in ``[0, alphabet_max]``, fixed length, oracle labels."""
    if task not in ("sum", "range", "variance", "half-range"):
        raise ContractError(f"unknown arithmetic task {task!r}")
    if seq_len < 1 or (task == "half-range" and seq_len < 2):
        raise ContractError(f"sequence length {seq_len} too short for {task}")
    rng = stream(seed, f"gen:{task}:{split}")
    X = rng.integers(0, alphabet_max + 1, size=(count, seq_len))
    return _labelled(task, list(X), alphabet_max, seed)


def generate(task: str, count: int, len_lo: int, len_hi: int, alphabet_max: int, seed: int,
             split: str = "train") -> SequenceDataset:
    if task == "parity":
        return gen_parity(count, len_lo, len_hi, seed, split)
    if len_lo != len_hi:
        raise ContractError(f"{task} uses a fixed sequence length")
    return gen_arithmetic(task, count, len_lo, alphabet_max, seed, split)


def local_perturb(vec, window_sizes=(4, 7), seed: int = 0):
    """Shuffle entries within consecutive full-stride windows, once per window size.

    Returns ``(out, perm)`` with ``out == vec[perm]``. A trailing partial
    window is shuffled within itself.
    """
    vec = np.asarray(vec)
    rng = stream(seed, "local-perturb")
    perm = np.arange(len(vec))
    for w in window_sizes:
        if w < 1:
            raise ContractError(f"window size must be positive, got {w}")
        for start in range(0, len(vec), w):
            block = perm[start:start + w]
            perm[start:start + w] = block[rng.permutation(len(block))]
    return vec[perm], perm


# ---------------------------------------------------------------------------
# file format: "# task=<t> alphabet_max=<m> seed=<s>" then "<ints>\t<label>" rows


def _fmt_label(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def dumps_dataset(ds: SequenceDataset) -> str:
    rows = [f"# task={ds.task} alphabet_max={ds.alphabet_max} seed={ds.seed}"]
    for s, y in zip(ds.sequences, ds.labels):
        rows.append(" ".join(str(int(v)) for v in s) + "\t" + _fmt_label(y))
    return "\n".join(rows) + "\n"


def loads_dataset(text: str) -> SequenceDataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ContractError("dataset file must start with a '# task=...' header")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    try:
        task, alphabet_max, seed = meta["task"], int(meta["alphabet_max"]), int(meta["seed"])
    except KeyError as exc:
        raise ContractError(f"dataset header lacks {exc}") from None
    if task not in TASKS:
        raise ContractError(f"unknown task {task!r} in dataset header")
    seqs, labels = [], []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            body, label = line.split("\t")
            seqs.append([int(v) for v in body.split()])
            labels.append(float(label))
        except ValueError:
            raise ContractError(f"malformed dataset row at line {n}: {line!r}") from None
    return SequenceDataset(seqs, labels, task, alphabet_max, seed)


def save_dataset(ds: SequenceDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_dataset(ds))


def load_dataset(path) -> SequenceDataset:
    with open(path, encoding="utf-8") as fh:
        return loads_dataset(fh.read())
