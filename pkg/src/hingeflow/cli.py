"""Command-line interface.

Subcommands: gen, oracle, train-linear, train-mlp, diagnose, figures.
Every training option resolves through the same precedence chain:
command-line flag, then HINGEFLOW_<NAME> environment variable, then the
key=value settings file named by --spec, then the built-in default.
Exit codes: 0 success, 2 configuration errors, 3 numerical failures,
4 separability failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import tempfile
from pathlib import Path

from .exceptions import HingeflowError, InvalidHyperparameter
from .geometry import solve_max_margin
from .harness import (
    BUILTIN_NAMES,
    ENV_PREFIX,
    ExperimentSpec,
    GeneratorParams,
    builtin_dataset,
    default_mnist_dir,
    generate_separable,
    parse_spec_file,
    read_dataset_csv,
    run_figures_experiment,
    run_linear_experiment,
    run_mlp_experiment,
    write_dataset_csv,
)
from .neural import MLP_LOSS_NAMES
from .optimizer import LOSS_NAMES


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InvalidHyperparameter(f"expected a boolean, got {text!r}")


def _cast(value: str, kind, key: str):
    try:
        if kind is bool:
            return _parse_bool(value)
        return kind(value)
    except (TypeError, ValueError):
        raise InvalidHyperparameter(f"bad value for {key}: {value!r}") from None


class _Settings:
    """Flag > environment > settings file > default, per option."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        spec_path = getattr(args, "spec", None)
        self.file_settings = parse_spec_file(spec_path) if spec_path else {}

    def get(self, key: str, kind, default):
        from_cli = getattr(self.args, key, None)
        if from_cli is not None:
            return from_cli
        from_env = os.environ.get(ENV_PREFIX + key.upper())
        if from_env:
            return _cast(from_env, kind, key)
        if key in self.file_settings:
            return _cast(self.file_settings[key], kind, key)
        return default


def _dataset_source(value: str) -> dict:
    if value in BUILTIN_NAMES:
        return {"dataset_name": value}
    return {"dataset_csv": value}


def _load_dataset(value: str):
    if value in BUILTIN_NAMES:
        return builtin_dataset(value)
    return read_dataset_csv(value)


def _add_common_training_flags(sub, default_loss: str | None = None):
    sub.add_argument("--dataset", help="builtin name or dataset CSV path")
    sub.add_argument("--loss", default=None,
                     help=f"training loss (default {default_loss})")
    sub.add_argument("--eta", type=float, default=None, help="step size")
    sub.add_argument("--alpha", type=float, default=None, help="threshold increment")
    sub.add_argument("--zeta", type=float, default=None, help="fire tolerance")
    sub.add_argument("--iters", type=int, default=None, help="iteration count")
    sub.add_argument("--seed", type=int, default=None, help="run seed")
    sub.add_argument("--record-every", dest="record_every", type=int, default=None,
                     help="trace recording stride (default: automatic)")
    sub.add_argument("--out", default=None, help="artifact output directory")
    sub.add_argument("--spec", default=None, help="key=value settings file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hingeflow",
        description="margin-driven hinge training, exact max-margin oracle, diagnostics",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="generate a planted separable dataset CSV")
    gen.add_argument("--d", type=int, required=True, help="ambient dimension")
    gen.add_argument("--n", type=int, required=True, help="number of points (>= d)")
    gen.add_argument("--gamma", type=float, required=True, help="planted margin")
    gen.add_argument("--spread", type=float, default=1.0,
                     help="margin slack of non-support points")
    gen.add_argument("--seed", type=int, default=None, help="generator seed")
    gen.add_argument("--out", default=None, help="output CSV path")

    oracle = commands.add_parser("oracle", help="print the exact max-margin separator")
    oracle.add_argument("--dataset", default=None, help="builtin name or dataset CSV path")

    linear = commands.add_parser("train-linear", help="train a linear classifier")
    _add_common_training_flags(linear, "complete_hinge")
    linear.add_argument("--no-diagnostics", action="store_true",
                        help="skip lemma reports and rate fits")

    mlp = commands.add_parser("train-mlp", help="train the 2-layer ReLU network")
    _add_common_training_flags(mlp, "multiclass_complete_hinge")
    mlp.add_argument("--mnist-dir", dest="mnist_dir", default=None,
                     help="directory with IDX image/label files")
    mlp.add_argument("--test-csv", dest="test_csv", default=None,
                     help="held-out dataset CSV for test error")
    mlp.add_argument("--hidden", type=int, default=None, help="hidden width")
    mlp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    mlp.add_argument("--n-train", dest="n_train", type=int, default=None,
                     help="IDX training subset size")
    mlp.add_argument("--n-test", dest="n_test", type=int, default=None,
                     help="IDX test subset size")
    mlp.add_argument("--compare", action="store_true", default=None,
                     help="also train the cross-entropy baseline")

    diag = commands.add_parser("diagnose",
                               help="train and print lemma reports and rate fits")
    _add_common_training_flags(diag, "complete_hinge")

    figures = commands.add_parser("figures",
                                  help="emit plot data comparing losses on one dataset")
    _add_common_training_flags(figures, None)

    return parser


def _cmd_gen(args) -> int:
    settings = _Settings(args)
    seed = settings.get("seed", int, 0)
    out = settings.get("out", str, None)
    if out is None:
        raise InvalidHyperparameter("gen requires --out (or HINGEFLOW_OUT)")
    params = GeneratorParams(d=args.d, n=args.n, gamma=args.gamma,
                             spread=args.spread, seed=seed)
    data = generate_separable(params)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(data, out)
    print(f"wrote {data.n} points (d={data.d}, margin {args.gamma:g}) to {out}")
    return 0


def _cmd_oracle(args) -> int:
    settings = _Settings(args)
    dataset = settings.get("dataset", str, None)
    if dataset is None:
        raise InvalidHyperparameter("oracle requires --dataset")
    data = _load_dataset(dataset)
    cert = solve_max_margin(data)
    coords = ", ".join(repr(float(v)) for v in cert.u_bar)
    print(f"dataset: {data.name or dataset} (n={data.n}, d={data.d})")
    print(f"u_bar: ({coords})")
    print(f"gamma: {cert.gamma!r}")
    print(f"support indices: {list(cert.support_indices)}")
    if cert.epsilon is None:
        print("epsilon: undefined (every point is a support vector)")
    else:
        print(f"epsilon: {cert.epsilon!r}")
    return 0


def _experiment_spec(args, default_loss: str, loss_names, out_required=True) -> ExperimentSpec:
    settings = _Settings(args)
    dataset = settings.get("dataset", str, None)
    mnist_dir = settings.get("mnist_dir", str, None) if hasattr(args, "mnist_dir") else None
    if dataset is None and mnist_dir is None and hasattr(args, "mnist_dir"):
        found = default_mnist_dir()
        mnist_dir = str(found) if found is not None else None
    if dataset is None and mnist_dir is None:
        raise InvalidHyperparameter("no dataset given (--dataset or --mnist-dir)")
    loss = settings.get("loss", str, default_loss)
    if loss not in loss_names:
        raise InvalidHyperparameter(f"loss must be one of {loss_names}, got {loss!r}")
    out = settings.get("out", str, None)
    if out is None and out_required:
        raise InvalidHyperparameter("an output directory is required (--out)")
    source = _dataset_source(dataset) if dataset is not None else {"mnist_dir": mnist_dir}
    is_mlp = loss in MLP_LOSS_NAMES
    return ExperimentSpec(
        out_dir=out or "",
        loss=loss,
        eta=settings.get("eta", float, 0.1 if is_mlp else 0.01),
        alpha=settings.get("alpha", float, 10.0 if is_mlp else 1.0),
        zeta=settings.get("zeta", float, 0.0),
        iters=settings.get("iters", int, 20_000 if is_mlp else 10_000),
        seed=settings.get("seed", int, 0),
        record_every=settings.get("record_every", int, None),
        diagnostics=not getattr(args, "no_diagnostics", False),
        hidden=settings.get("hidden", int, 128),
        batch_size=settings.get("batch_size", int, 100),
        n_train=settings.get("n_train", int, 8000),
        n_test=settings.get("n_test", int, 2000),
        test_csv=settings.get("test_csv", str, None),
        compare=bool(settings.get("compare", bool, False)),
        **source,
    )


def _cmd_train_linear(args) -> int:
    spec = _experiment_spec(args, "complete_hinge", LOSS_NAMES)
    out = run_linear_experiment(spec)
    print(f"artifacts in {out}")
    return 0


def _cmd_train_mlp(args) -> int:
    spec = _experiment_spec(args, "multiclass_complete_hinge", MLP_LOSS_NAMES)
    out = run_mlp_experiment(spec)
    print(f"artifacts in {out}")
    return 0


def _cmd_diagnose(args) -> int:
    spec = _experiment_spec(args, "complete_hinge", ("complete_hinge",),
                            out_required=False)
    keep = bool(spec.out_dir)
    with tempfile.TemporaryDirectory(prefix="hingeflow-diagnose-") as tmp:
        if not keep:
            spec = dataclasses.replace(spec, out_dir=str(Path(tmp) / "run"))
        out = run_linear_experiment(spec)
        for name in ("lemma_summary.txt", "rates.txt"):
            report = Path(out) / name
            if report.is_file():
                print(report.read_text(), end="")
    if keep:
        print(f"artifacts in {out}")
    return 0


def _cmd_figures(args) -> int:
    spec = _experiment_spec(args, "complete_hinge", ("complete_hinge",))
    out = run_figures_experiment(spec)
    print(f"artifacts in {out} (render with: gnuplot plots.gp)")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "oracle": _cmd_oracle,
    "train-linear": _cmd_train_linear,
    "train-mlp": _cmd_train_mlp,
    "diagnose": _cmd_diagnose,
    "figures": _cmd_figures,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except HingeflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
