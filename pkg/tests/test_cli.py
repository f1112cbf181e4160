import json
import os

import pytest

from permrnn import cli, models, tasks


@pytest.fixture
def run(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(cli.OUT_ENV, raising=False)

    def invoke(*argv):
        code = cli.main([str(a) for a in argv])
        out = capsys.readouterr()
        return code, out.out, out.err

    return invoke


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# gen


def test_gen_parity_defaults(run):
    code, out, _ = run("gen", "parity", "--count", 1000, "--len", "2..10", "--out", "p.txt")
    assert code == 0 and "1000 rows" in out
    ds = tasks.load_dataset("p.txt")
    assert len(ds) == 1000 and ds.alphabet_max == 1
    assert {len(s) for s in ds.sequences} == set(range(2, 11))


def test_gen_sum_setting_and_manifest(run):
    assert run("gen", "sum", "--count", 200, "--len", 10, "--max", 19, "--seed", 3, "--out", "s.txt")[0] == 0
    ds = tasks.load_dataset("s.txt")
    assert len(ds) == 200 and ds.elements().max() <= 19 and ds.seed == 3
    manifest = read("s.txt.manifest").decode()
    assert manifest == "permrnn gen sum --count 200 --len 10 --max 19 --seed 3 --out s.txt # seed=3\n"


def test_gen_is_byte_identical(run):
    run("gen", "range", "--count", 50, "--len", 5, "--out", "a.txt")
    run("gen", "range", "--count", 50, "--len", 5, "--out", "b.txt")
    assert read("a.txt") == read("b.txt")


def test_gen_uses_output_env(run, tmp_path, monkeypatch):
    (tmp_path / "outs").mkdir()
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "outs"))
    assert run("gen", "sum", "--count", 5, "--len", 3)[0] == 0
    assert (tmp_path / "outs" / "sum-train-s0.txt").exists()


def test_gen_unwritable_path_is_runtime_error(run):
    code, _, err = run("gen", "sum", "--count", 5, "--len", 3, "--out", "missing/dir/x.txt")
    assert code == cli.EXIT_RUNTIME and "missing" in err


@pytest.mark.parametrize("argv", [[], ["gen"], ["gen", "sum", "--len", "5..2"], ["frobnicate"],
                                  ["gen", "mode"]])
def test_usage_errors(run, argv):
    assert run(*argv)[0] == cli.EXIT_USAGE


# ---------------------------------------------------------------------------
# train


def test_train_writes_model_and_csv(run):
    run("gen", "parity", "--count", 60, "--len", "2..5", "--out", "p.txt")
    code, out, _ = run("train", "--data", "p.txt", "--hidden", 4, "--epochs", 3, "--lr", 0.01)
    assert code == 0
    lines = read("rnn-parity-s0.csv").decode().splitlines()
    assert lines[0] == "epoch,task_loss,reg_value,train_metric,holdout_metric" and len(lines) == 4
    model = models.load_model("rnn-parity-s0.model")
    assert model.output == "logit"
    assert os.path.exists("rnn-parity-s0.csv.manifest") and os.path.exists("rnn-parity-s0.model.manifest")


def test_train_is_bit_identical(run, tmp_path):
    run("gen", "sum", "--count", 40, "--len", 4, "--max", 9, "--out", "s.txt")
    argv = ["train", "--data", "s.txt", "--hidden", 3, "--state", 2, "--epochs", 2, "--reg", "sire",
            "--lambda", 0.1, "--states-per-batch", 8]
    os.mkdir("a")
    os.mkdir("b")
    assert run(*argv, "--out-dir", "a")[0] == 0
    assert run(*argv, "--out-dir", "b")[0] == 0
    for name in ("rnn-sum-s0.csv", "rnn-sum-s0.model"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)


def test_train_config_file_and_flag_precedence(run):
    run("gen", "sum", "--count", 30, "--len", 3, "--max", 9, "--out", "s.txt")
    spec = cli.ExperimentSpec(data="s.txt", arch="gru", hidden=3, training={"epochs": 4, "learning_rate": 0.01})
    assert cli.ExperimentSpec.from_text(spec.to_text()) == spec
    with open("spec.json", "w") as fh:
        fh.write(spec.to_text())
    assert run("train", "--config", "spec.json", "--epochs", 2, "--name", "run")[0] == 0
    assert len(read("run.csv").decode().splitlines()) == 3
    assert isinstance(models.load_model("run.model").cell, models.GruCell)


def test_train_config_errors(run):
    run("gen", "sum", "--count", 10, "--len", 3, "--out", "s.txt")
    with open("bad.json", "w") as fh:
        json.dump({"data": "s.txt", "colour": "blue"}, fh)
    assert run("train", "--config", "bad.json")[0] == cli.EXIT_USAGE
    assert run("train")[0] == cli.EXIT_USAGE
    assert run("train", "--data", "s.txt", "--epochs", 0)[0] == cli.EXIT_USAGE
    assert run("train", "--data", "s.txt", "--arch", "lstm")[0] == cli.EXIT_USAGE


def test_train_missing_data_file(run):
    assert run("train", "--data", "nope.txt")[0] == cli.EXIT_RUNTIME


def test_train_divergence_exit_code(run, monkeypatch):
    run("gen", "sum", "--count", 10, "--len", 3, "--out", "s.txt")

    def boom(*a, **k):
        raise cli.TrainingDiverged("non-finite loss at epoch 1")

    monkeypatch.setattr(cli.training, "fit", boom)
    code, _, err = run("train", "--data", "s.txt", "--epochs", 1)
    assert code == cli.EXIT_RUNTIME and "non-finite" in err


# ---------------------------------------------------------------------------
# construct-parity and audit


def test_construct_parity(run):
    code, out, _ = run("construct-parity", "--max-len", 10, "--out", "parity.model")
    assert code == 0
    assert "parameters: 12" in out
    assert "PASS" in out and "reloaded model self-test: PASS" in out
    run("construct-parity", "--max-len", 10, "--out", "again.model")
    assert read("parity.model") == read("again.model")


def audit_rows(path):
    lines = read(path).decode().splitlines()
    assert lines[0] == "source,probe,seed,num_probes,mean_sq_violation,max_violation,output_mean_sq,output_max"
    return [line.split(",") for line in lines[1:]]


def test_audit_exact_parity_is_clean(run):
    run("construct-parity", "--max-len", 4, "--out", "parity.model")
    run("gen", "parity", "--count", 30, "--len", "2..6", "--out", "p.txt")
    assert run("audit", "--model", "parity.model", "--data", "p.txt", "--exhaustive", "--out", "a.csv")[0] == 0
    rows = audit_rows("a.csv")
    assert [r[1] for r in rows] == ["full-perm", "subset-perm", "pair-swap"]
    assert all(float(r[5]) == 0.0 for r in rows)


def test_audit_random_rnn_violates_and_deepsets_does_not(run):
    run("gen", "sum", "--count", 30, "--len", 5, "--max", 9, "--out", "s.txt")
    run("train", "--data", "s.txt", "--epochs", 1, "--name", "rnn")
    run("train", "--data", "s.txt", "--epochs", 1, "--arch", "deepsets", "--hidden", 4, "--name", "ds")
    run("audit", "--model", "rnn.model", "--data", "s.txt", "--out", "rnn.csv", "--fresh", 10, "--outputs")
    run("audit", "--model", "ds.model", "--data", "s.txt", "--out", "ds.csv")
    rnn = audit_rows("rnn.csv")
    assert len(rnn) == 6 and {r[0] for r in rnn} == {"data", "fresh"}
    assert all(float(r[5]) > 0 for r in rnn)
    assert all(float(r[5]) == 0.0 for r in audit_rows("ds.csv"))


def test_audit_is_bit_identical(run):
    run("gen", "sum", "--count", 20, "--len", 4, "--max", 9, "--out", "s.txt")
    run("train", "--data", "s.txt", "--epochs", 1, "--name", "m")
    run("audit", "--model", "m.model", "--data", "s.txt", "--out", "a.csv")
    run("audit", "--model", "m.model", "--data", "s.txt", "--out", "b.csv")
    assert read("a.csv") == read("b.csv")


def test_audit_exhaustive_cap_is_runtime_error(run):
    run("construct-parity", "--max-len", 2, "--out", "parity.model")
    run("gen", "parity", "--count", 5, "--len", 9, "--out", "p.txt")
    assert run("audit", "--model", "parity.model", "--data", "p.txt", "--exhaustive")[0] == cli.EXIT_RUNTIME


# ---------------------------------------------------------------------------
# sweep


def test_sweep_lambda_grid(run):
    argv = ["sweep", "lambda", "--seeds", "0,1", "--lambdas", "0.1", "--regs", "sire", "--count", 20,
            "--len", 4, "--max", 9, "--epochs", 1]
    assert run(*argv, "--out", "a.csv")[0] == 0
    lines = read("a.csv").decode().splitlines()
    assert lines[0] == "regularizer,lambda,seed,holdout,test" and len(lines) == 5
    run(*argv, "--out", "b.csv")
    assert read("a.csv") == read("b.csv")


def test_sweep_parity_lengths(run):
    argv = ["sweep", "parity-length", "--lengths", "10,20", "--archs", "rnn", "--epochs", 1, "--out", "p.csv"]
    assert run(*argv)[0] == 0
    lines = read("p.csv").decode().splitlines()
    assert lines[0] == "arch,seed,length,accuracy"
    assert [line.split(",")[2] for line in lines[1:]] == ["10", "20"]
    assert all(0.0 <= float(line.split(",")[3]) <= 1.0 for line in lines[1:])


@pytest.mark.parametrize("flags", [["lambda", "--lambdas", ""], ["parity-length", "--lengths", ""],
                                   ["lambda", "--seeds", ""]])
def test_sweep_empty_grid_is_an_error(run, flags):
    code, _, err = run("sweep", *flags)
    assert code == cli.EXIT_USAGE
    assert "empty" in err or "seed" in err


def test_int_ranges():
    assert cli._parse_ints("10:100:10") == list(range(10, 101, 10))
    assert cli._parse_ints("1,3") == [1, 3]
