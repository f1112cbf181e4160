"""``permrnn`` command line: gen, train, audit, construct-parity, sweep.

Every file written gets a ``<file>.manifest`` sidecar holding the exact
invocation and seed. Nothing time-dependent goes into any output file, so
identical flags give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

from . import auditor, constructions, experiments, models, tasks, training
from .errors import ConfigError, ContractError, TrainingDiverged
from .regularizers import SamplerConfig, collect_states
from .rng import stream

OUT_ENV = "PERMRNN_OUT"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# experiment specs


@dataclass
class ExperimentSpec:
    """Everything one ``train`` run depends on; round-trips through JSON."""

    command: str = "train"
    data: str = ""
    arch: str = "rnn"
    hidden: int = 20
    state: int = 1
    activation: str = "tanh"
    encoding: str = "scalar"
    output: str = ""
    output_scale: float = 1.0
    holdout_fraction: float = 0.2
    out_dir: str = ""
    seed: int = 0
    training: dict = field(default_factory=dict)

    def to_text(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def training_config(self) -> training.TrainingConfig:
        opts = dict(self.training)
        sampler = opts.pop("sampler", {})
        opts.setdefault("seed", self.seed)
        try:
            return training.TrainingConfig(sampler=SamplerConfig(**sampler), **opts)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# output plumbing


def _out_path(path, default_name):
    if path:
        return path
    return os.path.join(os.environ.get(OUT_ENV, "."), default_name)


def _check_writable(*paths):
    for p in paths:
        parent = os.path.dirname(os.path.abspath(p)) or "."
        if not os.path.isdir(parent):
            raise OSError(f"output directory does not exist: {parent}")
        if not os.access(parent, os.W_OK):
            raise OSError(f"output directory is not writable: {parent}")


def _write(path, text, argv, seed):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(path + ".manifest", "w", encoding="utf-8") as fh:
            fh.write(f"permrnn {shlex.join(argv)} # seed={seed}\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from None


def _parse_len(text):
    lo, sep, hi = text.partition("..")
    try:
        lo = int(lo)
        hi = int(hi) if sep else lo
    except ValueError:
        raise argparse.ArgumentTypeError(f"length must be N or LO..HI, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad length range {text!r}")
    return lo, hi


def _parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_ints(text):
    """``1,2,3`` or ``lo:hi:step`` (inclusive)."""
    try:
        if ":" in text:
            lo, hi, step = (int(v) for v in text.split(":"))
            return list(range(lo, hi + 1, step))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers or lo:hi:step, got {text!r}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, argv):
    lo, hi = args.len
    ds = tasks.generate(args.task, args.count, lo, hi, args.max, args.seed, args.split)
    path = _out_path(args.out, f"{args.task}-{args.split}-s{args.seed}.txt")
    _check_writable(path)
    _write(path, tasks.dumps_dataset(ds), argv, args.seed)
    print(f"wrote {len(ds)} rows to {path}")


_TRAIN_FLAGS = {
    "arch": "arch", "hidden": "hidden", "state": "state", "activation": "activation", "encoding": "encoding",
    "output": "output", "output_scale": "output_scale", "holdout_fraction": "holdout_fraction", "seed": "seed",
    "data": "data",
}
_TRAINING_FLAGS = ("optimizer", "learning_rate", "epochs", "batch_size", "lam", "regularizer", "loss",
                   "clip_norm", "detach_states")


def build_spec(args) -> ExperimentSpec:
    """Defaults, then the config file, then explicit flags."""
    spec = ExperimentSpec()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            spec = ExperimentSpec.from_text(fh.read())
    for flag, key in _TRAIN_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            setattr(spec, key, v)
    opts = dict(spec.training)
    for key in _TRAINING_FLAGS:
        v = getattr(args, key)
        if v is not None:
            opts[key] = v
    if args.states_per_batch is not None:
        opts["sampler"] = {**opts.get("sampler", {}), "states_per_batch": args.states_per_batch}
    spec.training = opts
    if not spec.data:
        raise ConfigError("train needs --data (or 'data' in the config file)")
    return spec


def _make_model(spec: ExperimentSpec, ds):
    enc = models.Encoding(spec.encoding, ds.alphabet_max)
    output = spec.output or ("logit" if ds.is_classification else "regression")
    rng = stream(spec.seed, "init")
    if spec.arch == "rnn":
        return models.make_rnn_model(enc, spec.hidden, spec.state, rng, spec.activation, output=output,
                                     output_scale=spec.output_scale)
    if spec.arch == "gru":
        return models.make_gru_model(enc, spec.hidden, rng, output=output, output_scale=spec.output_scale)
    if spec.arch == "deepsets":
        return models.make_deepsets_model(enc, spec.hidden, rng, output=output, output_scale=spec.output_scale)
    raise ConfigError(f"unknown architecture {spec.arch!r}")


def cmd_train(args, argv):
    spec = build_spec(args)
    cfg = spec.training_config()
    ds = tasks.load_dataset(spec.data)
    if ds.is_classification and "loss" not in spec.training:
        cfg = cfg.replace(loss="cross-entropy")
    out_dir = args.out_dir or spec.out_dir or os.environ.get(OUT_ENV, ".")
    stem = args.name or f"{spec.arch}-{ds.task}-s{spec.seed}"
    model_path = os.path.join(out_dir, stem + ".model")
    csv_path = os.path.join(out_dir, stem + ".csv")
    _check_writable(model_path, csv_path)
    train, hold = ds.split(spec.holdout_fraction, stream(spec.seed, "holdout-split"))
    model = _make_model(spec, ds)
    progress = None
    if args.verbose:
        progress = lambda row: print("epoch {} task {:.6g} reg {:.6g} train {:.4f} holdout {:.4f}".format(*row))
    report = training.fit(model, train, hold, cfg, progress=progress)
    _write(model_path, models.dumps_model(model), argv, spec.seed)
    _write(csv_path, report.to_csv(), argv, spec.seed)
    print(f"trained {spec.arch} on {ds.task}: {report.metric} train {report.rows[-1][3]:.4f} "
          f"holdout {report.final_holdout:.4f}")
    print(f"wrote {model_path} and {csv_path}")


def cmd_audit(args, argv):
    model = models.load_model(args.model)
    ds = tasks.load_dataset(args.data)
    sources = [("data", ds)]
    if args.fresh:
        lens = [len(s) for s in ds.sequences]
        fresh = tasks.generate(ds.task, args.fresh, min(lens), max(lens), ds.alphabet_max, args.seed, "audit")
        sources.append(("fresh", fresh))
    rows = []
    for source, data in sources:
        for probe in args.probe:
            if probe == "full-perm":
                rep = auditor.audit_perm_invariance(model, data, args.perms, args.seed, args.outputs,
                                                    exhaustive=args.exhaustive)
            elif probe == "subset-perm":
                rep = auditor.audit_subset_invariance(model, data, args.subsets, args.perms, args.seed,
                                                      args.outputs, exhaustive=args.exhaustive)
            elif args.exhaustive:
                rep = auditor.exhaustive_pair_swap(model, data, args.outputs)
            else:
                bank = collect_states(model, data, SamplerConfig(states_per_batch=args.states, seed=args.seed))
                rep = auditor.audit_pair_swap(model, bank, data.elements(), args.pairs, args.seed, args.outputs)
            rows.append((source, rep))
            print(f"[{source}] {rep.summary()}")
    text = "source," + auditor.CSV_HEADER + "\n" + "".join(f"{s},{r.csv_row()}\n" for s, r in rows)
    path = _out_path(args.out, "audit.csv")
    _check_writable(path)
    _write(path, text, argv, args.seed)
    print(f"wrote {path}")


def cmd_construct_parity(args, argv):
    model = constructions.parity_model()
    path = _out_path(args.out, "parity.model")
    _check_writable(path)
    check = constructions.exhaustive_parity_check(model, args.max_len)
    _write(path, models.dumps_model(model), argv, 0)
    again = constructions.exhaustive_parity_check(models.load_model(path), args.max_len)
    print(f"parameters: {model.cell.params.parameter_count()}")
    print(f"self-test over {check.sequences} sequences up to length {args.max_len}: "
          f"{'PASS' if check.passed else 'FAIL'} (max deviation {check.max_deviation:.3g})")
    print(f"reloaded model self-test: {'PASS' if again.passed else 'FAIL'}")
    print(f"wrote {path}")
    if not (check.passed and again.passed):
        raise ContractError("parity self-test failed")


def _parity_job(job):
    arch, seed, lengths, proto = job
    return experiments.parity_run(arch, seed, proto, lengths)


def _lambda_job(job):
    proto, seed, reg, lam = job
    return experiments.regularized_run(proto, seed, reg, [lam])


def _run_jobs(fn, jobs, n_jobs):
    if n_jobs <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, jobs))


def cmd_sweep(args, argv):
    seeds = args.seeds
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    if args.grid == "parity-length":
        if not args.lengths:
            raise ConfigError("empty length grid")
        proto = experiments.ParityProtocol(rnn_epochs=args.epochs or 300, deepsets_epochs=args.epochs or 300)
        jobs = [(arch, s, tuple(args.lengths), proto) for arch in args.archs for s in seeds]
        results = _run_jobs(_parity_job, jobs, args.jobs)
        lines = ["arch,seed,length,accuracy"]
        for r in results:
            lines += [f"{r['arch']},{r['seed']},{n},{r[n]!r}" for n in args.lengths]
    else:
        if not args.lambdas:
            raise ConfigError("empty lambda grid")
        proto = experiments.ArithmeticProtocol(task=args.task, seq_len=args.len, alphabet_max=args.max,
                                               train_count=args.count, arch=args.arch,
                                               epochs=args.epochs or 1000)
        jobs = [(proto, s, "none", 0.0) for s in seeds]
        jobs += [(proto, s, reg, lam) for reg in args.regs for lam in args.lambdas for s in seeds]
        results = _run_jobs(_lambda_job, jobs, args.jobs)
        lines = ["regularizer,lambda,seed,holdout,test"]
        lines += [f"{r['regularizer']},{r['lam']!r},{r['seed']},{r['holdout']!r},{r['test']!r}" for r in results]
    path = _out_path(args.out, f"sweep-{args.grid}.csv")
    _check_writable(path)
    _write(path, "\n".join(lines) + "\n", argv, seeds[0])
    print(f"wrote {len(lines) - 1} rows to {path}")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="permrnn", description="Permutation-invariance experiments with small RNNs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a dataset file")
    g.add_argument("task", choices=tasks.TASKS)
    g.add_argument("--count", type=int, default=1000)
    g.add_argument("--len", type=_parse_len, default=(2, 10), help="N or LO..HI")
    g.add_argument("--max", type=int, default=None, help="largest element (default 1 for parity, 99 otherwise)")
    g.add_argument("--split", default="train")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")

    t = sub.add_parser("train", help="train a model on a dataset file")
    t.add_argument("--config", help="JSON experiment spec; flags override it")
    t.add_argument("--data")
    t.add_argument("--arch", choices=("rnn", "gru", "deepsets"))
    t.add_argument("--hidden", type=int)
    t.add_argument("--state", type=int)
    t.add_argument("--activation", choices=("tanh", "relu"))
    t.add_argument("--encoding", choices=("scalar", "onehot", "raw"))
    t.add_argument("--output", choices=("regression", "logit", "prob"))
    t.add_argument("--output-scale", type=float)
    t.add_argument("--holdout-fraction", type=float)
    t.add_argument("--optimizer", choices=training.OPTIMIZERS)
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--reg", dest="regularizer", choices=training.REGULARIZERS)
    t.add_argument("--loss", choices=training.LOSSES)
    t.add_argument("--clip-norm", type=float)
    t.add_argument("--detach-states", action="store_const", const=True)
    t.add_argument("--states-per-batch", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out-dir")
    t.add_argument("--name", help="file stem for the model and CSV")
    t.add_argument("-v", "--verbose", action="store_true")

    a = sub.add_parser("audit", help="measure invariance violations of a saved model")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--probe", nargs="+", choices=auditor.PROBES, default=list(auditor.PROBES))
    a.add_argument("--perms", type=int, default=8)
    a.add_argument("--subsets", type=int, default=4)
    a.add_argument("--pairs", type=int, default=256)
    a.add_argument("--states", type=int, default=64, help="banked states for pair-swap")
    a.add_argument("--exhaustive", action="store_true")
    a.add_argument("--outputs", action="store_true", help="also report violations after the head")
    a.add_argument("--fresh", type=int, default=0, help="also audit this many freshly sampled sequences")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")

    c = sub.add_parser("construct-parity", help="write the exact parity RNN and self-test it")
    c.add_argument("--max-len", type=int, default=16)
    c.add_argument("--out")

    s = sub.add_parser("sweep", help="grid of training runs, one CSV row per point and seed")
    s.add_argument("grid", choices=("parity-length", "lambda"))
    s.add_argument("--seeds", type=_parse_ints, default=[0])
    s.add_argument("--lengths", type=_parse_ints, default=list(range(10, 101, 10)))
    s.add_argument("--archs", nargs="+", choices=("rnn", "deepsets"), default=["rnn", "deepsets"])
    s.add_argument("--lambdas", type=_parse_floats, default=list(experiments.LAMBDA_GRID))
    s.add_argument("--regs", nargs="+", choices=("sire", "sub"), default=["sire", "sub"])
    s.add_argument("--task", choices=("sum", "range", "variance", "half-range"), default="sum")
    s.add_argument("--arch", choices=("rnn", "gru"), default="rnn")
    s.add_argument("--count", type=int, default=200)
    s.add_argument("--len", type=int, default=10)
    s.add_argument("--max", type=int, default=19)
    s.add_argument("--epochs", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "audit": cmd_audit, "construct-parity": cmd_construct_parity,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command == "gen" and args.max is None:
            args.max = 1 if args.task == "parity" else 99
        COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"permrnn: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"permrnn: training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ContractError, ValueError, OSError) as exc:
        print(f"permrnn: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
