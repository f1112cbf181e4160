import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from permrnn import tasks
from permrnn.errors import ContractError


def test_oracle_examples():
    assert tasks.sum_label([1, 2, 3]) == 6
    assert tasks.range_label([5, 5, 5]) == 0
    assert tasks.variance_label([0, 2]) == 1.0
    assert tasks.parity_label([1, 0, 1]) == 0


@pytest.mark.parametrize("oracle", [tasks.sum_label, tasks.range_label, tasks.variance_label])
def test_oracles_reject_empty(oracle):
    with pytest.raises(ContractError):
        oracle([])


def test_half_range_examples():
    assert tasks.half_range_label([3, 9, 2, 5, 1, 7]) == 8
    assert tasks.half_range_label([0, 99]) == -99
    a, b, c, d, e = 4, 6, 3, 8, 5
    assert tasks.half_range_label([a, b, c, d, e]) == max(a, b) - min(c, d, e)
    with pytest.raises(ContractError):
        tasks.half_range_label([1])


def test_half_range_invariance_within_halves_only():
    xs = [3, 9, 2, 5, 1, 7]
    assert tasks.half_range_label([9, 2, 3, 7, 5, 1]) == tasks.half_range_label(xs)
    # moving the 9 into the second half changes the label
    assert tasks.half_range_label([3, 5, 2, 9, 1, 7]) != tasks.half_range_label(xs)


def test_parity_generator_defaults_and_determinism():
    a = tasks.gen_parity(seed=3)
    b = tasks.gen_parity(seed=3)
    assert len(a) == 1000
    assert all(np.array_equal(x, y) for x, y in zip(a.sequences, b.sequences))
    assert np.array_equal(a.labels, b.labels)
    assert set(a.labels.tolist()) <= {0.0, 1.0}
    assert {len(s) for s in a.sequences} == set(range(2, 11))


def test_parity_generator_contract():
    with pytest.raises(ContractError):
        tasks.gen_parity(10, 0, 3)
    with pytest.raises(ContractError):
        tasks.gen_parity(10, 5, 3)


def test_test_split_is_a_fresh_sample():
    train = tasks.gen_arithmetic("sum", 50, 10, 19, seed=0)
    test = tasks.gen_arithmetic("sum", 50, 10, 19, seed=0, split="test")
    assert not np.array_equal(np.stack(train.sequences), np.stack(test.sequences))


@pytest.mark.parametrize("task", ["sum", "range", "variance", "half-range"])
def test_arithmetic_labels_match_oracle(task):
    ds = tasks.gen_arithmetic(task, 200, 10, 19, seed=1)
    assert len(ds) == 200
    assert all(len(s) == 10 for s in ds.sequences)
    assert ds.elements().min() >= 0 and ds.elements().max() <= 19
    np.testing.assert_array_equal(ds.labels, ds.recomputed_labels())


def test_arithmetic_small_range_setting():
    ds = tasks.gen_arithmetic("range", 100, 5, 99, seed=2)
    assert ds.elements().max() <= 99 and all(len(s) == 5 for s in ds.sequences)


def test_arithmetic_rejects_unknown_task():
    with pytest.raises(ContractError):
        tasks.gen_arithmetic("median", 10, 5)


def test_dataset_rejects_out_of_alphabet():
    with pytest.raises(ContractError):
        tasks.SequenceDataset([[0, 3]], [3], "sum", 2, 0)


def test_split_partitions_rows():
    ds = tasks.gen_arithmetic("sum", 100, 4, 9, seed=0)
    train, hold = ds.split(0.2, np.random.default_rng(0))
    assert len(train) == 80 and len(hold) == 20
    rows = {tuple(s) for s in train.sequences} | {tuple(s) for s in hold.sequences}
    assert rows <= {tuple(s) for s in ds.sequences}


@pytest.mark.parametrize("task", ["parity", "sum", "variance", "half-range"])
def test_file_round_trip(task, tmp_path):
    ds = tasks.generate(task, 30, 6, 6, 1 if task == "parity" else 19, seed=4)
    path = tmp_path / "data.txt"
    tasks.save_dataset(ds, path)
    back = tasks.load_dataset(path)
    assert (back.task, back.alphabet_max, back.seed) == (ds.task, ds.alphabet_max, ds.seed)
    assert np.array_equal(back.labels, ds.labels)
    assert all(np.array_equal(x, y) for x, y in zip(back.sequences, ds.sequences))


@pytest.mark.parametrize("text", ["", "1 2\t3\n", "# task=sum alphabet_max=9\n", "# task=sum alphabet_max=9 seed=0\n1 x\t2\n",
                                  "# task=mode alphabet_max=9 seed=0\n"])
def test_malformed_dataset_files(text):
    with pytest.raises(ContractError):
        tasks.loads_dataset(text)


def test_local_perturb_identity_window():
    vec = np.arange(784)
    out, perm = tasks.local_perturb(vec, [1], seed=0)
    assert np.array_equal(perm, np.arange(784)) and np.array_equal(out, vec)


@settings(deadline=None, max_examples=50)
@given(seed=st.integers(0, 2**31 - 1))
def test_local_perturb_is_a_bounded_permutation(seed):
    vec = np.random.default_rng(seed).normal(size=784)
    out, perm = tasks.local_perturb(vec, [4, 7], seed=seed)
    assert sorted(perm.tolist()) == list(range(784))
    assert np.array_equal(vec[perm], out)
    assert np.abs(perm - np.arange(784)).max() <= 11


def test_local_perturb_trailing_partial_window():
    _, perm = tasks.local_perturb(np.arange(10), [4], seed=5)
    assert sorted(perm[8:].tolist()) == [8, 9]
