"""Experiment harness: datasets, generation, CSV artifacts, plot emission.

Everything the command-line interface does lives here as plain functions
so it is scriptable without a shell. An experiment resolves one dataset
source, trains, and writes a self-contained artifact directory: the
dataset, the trace, threshold-update times, lemma reports, rate fits,
and gnuplot-ready data files plus a plotting script. All outputs are
deterministic functions of the experiment settings (no timestamps), so
repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .diagnostics import (
    fit_rate,
    reports_summary,
    reports_to_csv_lines,
    run_lemma_suite,
    norm_growth_report,
)
from .exceptions import (
    GenerationFailed,
    HingeflowError,
    InvalidHyperparameter,
    NotSeparable,
    UnknownName,
)
from .geometry import Dataset, MarginCertificate, solve_max_margin
from .neural import MlpConfig, load_mnist_subset, train_mlp
from .optimizer import Trace, TrainConfig, train
from .validation import check_count, check_positive

# Planted datasets used throughout the diagnostics and docs. All labels
# are +1, so the points are their own signed versions.
_BUILTIN_POINTS = {
    "fig1": [(-1.0, 1.0), (1.0, 1.0), (2.0, 2.0)],
    "fig2a": [(1.0, 0.0), (0.0, 1.0), (10.0, 5.0)],
    "fig2b": [(1.0, 0.0), (0.0, 1.0), (-2.0, 6.0)],
    "fig3": [(0.5, 0.5), (-0.125, 0.5), (-2.0, 3.0)],
}

BUILTIN_NAMES = tuple(sorted(_BUILTIN_POINTS))

ENV_PREFIX = "HINGEFLOW_"


def builtin_dataset(name: str) -> Dataset:
    """One of the small named 2-D datasets (fig1, fig2a, fig2b, fig3)."""
    try:
        pts = _BUILTIN_POINTS[name]
    except KeyError:
        raise UnknownName(
            f"unknown dataset {name!r}; builtins are {', '.join(BUILTIN_NAMES)}"
        ) from None
    return Dataset(np.array(pts), np.ones(len(pts)), name=name)


@dataclass(frozen=True)
class GeneratorParams:
    """Settings for planting a separable dataset with a known margin.

    d support points sit at margin exactly gamma and span the space; the
    remaining n - d points sit at margin at least gamma + spread.
    """

    d: int
    n: int
    gamma: float
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "d", check_count(self.d, "d"))
        object.__setattr__(self, "n", check_count(self.n, "n"))
        object.__setattr__(self, "gamma", check_positive(self.gamma, "gamma"))
        object.__setattr__(self, "spread", check_positive(self.spread, "spread"))
        if self.n < self.d:
            raise InvalidHyperparameter(
                f"need n >= d support points to span the space, got n={self.n}, d={self.d}"
            )


def _orthonormal_complement(first_column: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """d x (d-1) orthonormal basis of the complement of one unit vector."""
    d = first_column.shape[0]
    if d == 1:
        return np.zeros((1, 0))
    block = np.column_stack([first_column, rng.standard_normal((d, d - 1))])
    q, r = np.linalg.qr(block)
    if np.abs(np.diag(r)).min() < 1e-10:
        raise np.linalg.LinAlgError("degenerate random basis")
    return q[:, 1:]


def _attempt_generate(params: GeneratorParams, rng: np.random.Generator) -> Dataset:
    d, n, gamma, spread = params.d, params.n, params.gamma, params.spread
    direction = rng.standard_normal(d)
    norm = np.linalg.norm(direction)
    if norm < 1e-6:
        raise np.linalg.LinAlgError("degenerate direction draw")
    direction /= norm

    basis = _orthonormal_complement(direction, rng)
    # d perpendicular offsets that sum to zero and span the complement:
    # the rows of I - 1/d live in the hyperplane orthogonal to the all-ones
    # vector; push them through a basis of that hyperplane, then into the
    # complement of the planted direction.
    simplex = np.eye(d) - 1.0 / d
    ones_complement = _orthonormal_complement(np.full(d, 1.0 / np.sqrt(d)), rng)
    coords = simplex @ ones_complement
    support = gamma * direction[None, :] + gamma * (coords @ basis.T)

    extras = []
    for _ in range(n - d):
        along = gamma + spread * (1.0 + rng.uniform())
        perp = basis @ (0.5 * gamma * rng.standard_normal(max(d - 1, 0)))
        extras.append(along * direction + perp)
    signed = np.vstack([support, np.asarray(extras)]) if extras else support

    # Keep every point on the positive side of the summed gradient at the
    # first threshold level; the series-form equivalence needs this.
    if (signed @ signed.sum(axis=0)).min() <= 0.0:
        raise np.linalg.LinAlgError("gradient sum not uniformly positive")

    labels = rng.choice((-1.0, 1.0), size=n)
    order = rng.permutation(n)
    points = (signed * labels[:, None])[order]
    data = Dataset(points, labels[order], name=f"generated-d{d}-n{n}-seed{params.seed}")

    cert = solve_max_margin(data)
    if abs(cert.gamma - gamma) > 1e-9:
        raise np.linalg.LinAlgError(
            f"planted margin {gamma} not recovered (oracle found {cert.gamma})"
        )
    return data


def generate_separable(params: GeneratorParams, max_retries: int = 5) -> Dataset:
    """Separable dataset with oracle-verified margin exactly params.gamma."""
    failures = []
    for attempt in range(max_retries):
        rng = np.random.default_rng([params.seed, attempt])
        try:
            return _attempt_generate(params, rng)
        except (np.linalg.LinAlgError, HingeflowError) as exc:
            failures.append(str(exc))
    raise GenerationFailed(
        f"no valid dataset after {max_retries} attempts "
        f"(d={params.d}, n={params.n}, seed={params.seed}): "
        + ("; ".join(failures[-3:]) if failures else "no attempts made")
    )


def write_dataset_csv(data: Dataset, path) -> None:
    """One row per point: x1,...,xd,label; no header; full double precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row, label in zip(data.points, data.labels):
            writer.writerow([format(v, ".17g") for v in row] + [str(int(label))])


def read_dataset_csv(path, name: str = "") -> Dataset:
    rows = []
    labels = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise UnknownName(
            f"cannot read dataset file {str(path)!r}: {exc.strerror}"
        ) from None
    with fh:
        for record in csv.reader(fh):
            if not record:
                continue
            try:
                values = [float(cell) for cell in record]
            except ValueError as exc:
                raise InvalidHyperparameter(f"{path}: non-numeric cell ({exc})") from None
            rows.append(values[:-1])
            labels.append(values[-1])
    if not rows:
        raise InvalidHyperparameter(f"{path}: empty dataset file")
    return Dataset(np.asarray(rows), np.asarray(labels),
                   name=name or Path(path).stem)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment needs; exactly one dataset source.

    Sources: dataset_name (builtin), dataset_csv (file), generator
    (planted), mnist_dir (IDX files, network runs only). seed drives
    network init/shuffling; the generator carries its own seed.
    """

    out_dir: str
    dataset_name: str | None = None
    dataset_csv: str | None = None
    generator: GeneratorParams | None = None
    mnist_dir: str | None = None
    loss: str = "complete_hinge"
    eta: float = 0.01
    alpha: float = 1.0
    zeta: float = 0.0
    iters: int = 10_000
    seed: int = 0
    record_every: int | None = None
    diagnostics: bool = True
    hidden: int = 128
    batch_size: int = 100
    n_train: int = 8000
    n_test: int = 2000
    test_csv: str | None = None
    compare: bool = False

    def __post_init__(self):
        sources = [
            s for s in (self.dataset_name, self.dataset_csv, self.generator, self.mnist_dir)
            if s is not None
        ]
        if len(sources) != 1:
            raise InvalidHyperparameter(
                f"exactly one dataset source required, got {len(sources)}"
            )


def resolve_dataset(spec: ExperimentSpec) -> Dataset:
    if spec.dataset_name is not None:
        return builtin_dataset(spec.dataset_name)
    if spec.dataset_csv is not None:
        return read_dataset_csv(spec.dataset_csv)
    if spec.generator is not None:
        return generate_separable(spec.generator)
    raise InvalidHyperparameter("this dataset source is not a plain training set")


class _ArtifactDir:
    """Tracks written files so a failed run leaves no partial artifacts."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.created_root = not self.root.exists()
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        self.written.append(p)
        return p

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        return p

    def cleanup(self) -> None:
        for p in self.written:
            if p.exists():
                p.unlink()
        if self.created_root and self.root.exists() and not any(self.root.iterdir()):
            self.root.rmdir()


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_xy(path: Path, columns: list[np.ndarray], header: str) -> None:
    lines = [f"# {header}"]
    n = len(columns[0])
    for i in range(n):
        lines.append(" ".join(_fmt(col[i]) for col in columns))
    path.write_text("\n".join(lines) + "\n")


def _rate_summary_text(trace: Trace, has_cert: bool) -> str:
    lines = ["rate fits (log-log least squares over the last two decades)"]
    if not has_cert:
        lines.append("  skipped: no margin certificate, gap columns empty")
        return "\n".join(lines) + "\n"
    for column, target in (
        ("margin_gap", -1.0), ("cosine_gap", -1.0), ("direction_distance", -0.5),
    ):
        try:
            fit = fit_rate(trace, column, target=target)
        except HingeflowError as exc:
            lines.append(f"  {column}: not fit ({exc})")
            continue
        lines.append(
            f"  {column}: slope {fit.slope:.4f} (target {target:+.1f}), "
            f"sup of value*t^{-target:g} = {fit.sup_scaled:.6g}, "
            f"window t in [{fit.window[0]:g}, {fit.window[1]:g}], "
            f"{fit.n_points} points"
        )
    return "\n".join(lines) + "\n"


def _emit_linear_plots(art: _ArtifactDir, data: Dataset, trace: Trace,
                       cert: MarginCertificate | None, spec: ExperimentSpec) -> None:
    gp = ["set datafile separator whitespace"]

    if data.d == 2:
        pts = art.path("points.dat")
        _write_xy(pts, [data.points[:, 0], data.points[:, 1], data.labels.astype(float)],
                  "x1 x2 label")
        if cert is not None:
            lo = float(data.points.min()) - 1.0
            hi = float(data.points.max()) + 1.0
            normal, level = cert.u_bar, cert.gamma
            # Two endpoints of {x : <u_bar, x> = gamma} across the bounding box.
            tangent = np.array([-normal[1], normal[0]])
            base = level * normal
            span = (hi - lo) * 2.0
            ends = np.array([base - span * tangent, base + span * tangent])
            _write_xy(art.path("separator.dat"), [ends[:, 0], ends[:, 1]], "x1 x2")
        if trace.iterates:
            ts = np.array([t for t, _ in trace.iterates], dtype=float)
            us = np.array([u for _, u in trace.iterates])
            _write_xy(art.path("trajectory.dat"), [ts, us[:, 0], us[:, 1]], "t u1 u2")
            gp += [
                'set output "trajectory.png"',
                'set term pngcairo size 800,600',
                'set title "iterate trajectory"',
                'plot "trajectory.dat" using 2:3 with linespoints title "u_t", \\',
                '     "points.dat" using 1:2 with points pt 7 title "data"'
                + (', \\\n     "separator.dat" using 1:2 with lines title "separator"'
                   if cert is not None else ""),
            ]

    if trace.has_column("margin_gap"):
        ts, gaps = trace.column("margin_gap")
        keep = gaps > 0.0
        _write_xy(art.path("margin_gap.dat"), [ts[keep], gaps[keep]], "t margin_gap")
        gp += [
            'set output "margin_gap.png"',
            'set term pngcairo size 800,600',
            "set logscale xy",
            'set title "margin gap vs t"',
            'plot "margin_gap.dat" using 1:2 with lines title "gap(t)"',
            "unset logscale",
        ]

    ts, norms = trace.column("norm_u")
    _write_xy(art.path("norm_t.dat"), [ts, norms], "t norm_u")
    if trace.update_vectors and cert is not None:
        ks = np.arange(1, len(trace.update_vectors) + 1, dtype=float)
        update_norms = np.array([np.linalg.norm(u) for u in trace.update_vectors])
        predicted = ks * spec.alpha / cert.gamma
        _write_xy(art.path("norm_updates.dat"),
                  [ks, np.array(trace.beta_update_times, dtype=float),
                   update_norms, predicted],
                  "k t_k norm_u_k k*alpha/gamma")
        gp += [
            'set output "norm_growth.png"',
            'set term pngcairo size 800,600',
            'set title "norm at threshold updates"',
            'plot "norm_updates.dat" using 1:3 with linespoints title "|u_k|", \\',
            '     "norm_updates.dat" using 1:4 with lines title "k*alpha/gamma"',
        ]

    art.write_text("plots.gp", "\n".join(gp) + "\n")


def run_linear_experiment(spec: ExperimentSpec) -> Path:
    """Train on the resolved dataset and write the full artifact directory."""
    art = _ArtifactDir(spec.out_dir)
    try:
        data = resolve_dataset(spec)
        write_dataset_csv(data, art.path("dataset.csv"))
        cert = None
        try:
            cert = solve_max_margin(data)
        except NotSeparable:
            # Leave gap columns empty; the trainer raises its own
            # separability signal if the threshold stalls.
            pass
        config = TrainConfig(
            eta=spec.eta, alpha=spec.alpha, zeta=spec.zeta, max_iters=spec.iters,
            loss=spec.loss, record_every=spec.record_every,
            store_iterates=data.d == 2,
        )
        trace = train(data, config, cert)
        trace.write_csv(art.path("trace.csv"))
        trace.write_beta_updates_csv(art.path("beta_updates.csv"))
        if spec.diagnostics:
            art.write_text("rates.txt", _rate_summary_text(trace, cert is not None))
            if cert is not None and spec.loss == "complete_hinge":
                reports = run_lemma_suite(trace, data, cert, config)
                reports.append(norm_growth_report(trace, cert, config))
                art.write_text("lemma_reports.csv",
                               "\n".join(reports_to_csv_lines(reports)) + "\n")
                art.write_text("lemma_summary.txt", reports_summary(reports))
        _emit_linear_plots(art, data, trace, cert, spec)
        return art.root
    except BaseException:
        art.cleanup()
        raise


def compare_losses(data: Dataset, config: TrainConfig,
                   cert: MarginCertificate | None,
                   loss_names: tuple[str, ...] = ("complete_hinge", "logistic",
                                                  "logistic_normalized")) -> dict[str, Trace]:
    """Train each loss from the same start; traces keyed by loss name."""
    return {name: train(data, replace(config, loss=name), cert) for name in loss_names}


def run_figures_experiment(spec: ExperimentSpec) -> Path:
    """Loss-comparison figure set: moving-threshold hinge vs logistic baselines."""
    art = _ArtifactDir(spec.out_dir)
    try:
        data = resolve_dataset(spec)
        write_dataset_csv(data, art.path("dataset.csv"))
        cert = solve_max_margin(data)
        config = TrainConfig(
            eta=spec.eta, alpha=spec.alpha, zeta=spec.zeta, max_iters=spec.iters,
            record_every=spec.record_every, store_iterates=data.d == 2,
        )
        traces = compare_losses(data, config, cert)
        for name, trace in traces.items():
            trace.write_csv(art.path(f"trace_{name}.csv"))
        base = traces["complete_hinge"]
        base.write_beta_updates_csv(art.path("beta_updates.csv"))

        columns = {}
        for name, trace in traces.items():
            ts, vals = trace.column("margin_gap")
            columns[name] = dict(zip(ts.tolist(), vals.tolist()))
        shared = sorted(set.intersection(*(set(c) for c in columns.values())))
        ts = np.array(shared)
        series = [np.array([columns[name][t] for t in shared]) for name in traces]
        _write_xy(art.path("comparison.dat"), [ts, *series],
                  "t " + " ".join(traces))
        gp = [
            'set output "comparison.png"',
            'set term pngcairo size 800,600',
            "set logscale xy",
            'set title "margin gap by loss"',
            'plot ' + ', \\\n     '.join(
                f'"comparison.dat" using 1:{i + 2} with lines title "{name}"'
                for i, name in enumerate(traces)
            ),
        ]
        art.write_text("plots.gp", "\n".join(gp) + "\n")
        _emit_linear_plots_min(art, data, base, cert)
        return art.root
    except BaseException:
        art.cleanup()
        raise


def _emit_linear_plots_min(art: _ArtifactDir, data: Dataset, trace: Trace,
                           cert: MarginCertificate) -> None:
    if data.d != 2:
        return
    _write_xy(art.path("points.dat"),
              [data.points[:, 0], data.points[:, 1], data.labels.astype(float)],
              "x1 x2 label")
    if trace.iterates:
        ts = np.array([t for t, _ in trace.iterates], dtype=float)
        us = np.array([u for _, u in trace.iterates])
        _write_xy(art.path("trajectory.dat"), [ts, us[:, 0], us[:, 1]], "t u1 u2")


def run_mlp_experiment(spec: ExperimentSpec) -> Path:
    """Train the network, write its trace and running-best test error."""
    art = _ArtifactDir(spec.out_dir)
    try:
        if spec.mnist_dir is not None:
            train_data, test_data = load_mnist_subset(
                spec.mnist_dir, spec.n_train, spec.n_test
            )
        else:
            train_data = resolve_dataset(spec)
            test_data = read_dataset_csv(spec.test_csv) if spec.test_csv else None
        config = MlpConfig(
            eta=spec.eta, alpha=spec.alpha, zeta=spec.zeta, max_iters=spec.iters,
            batch_size=spec.batch_size, hidden=spec.hidden, seed=spec.seed,
            record_every=spec.record_every, test_data=test_data,
        )
        losses_to_run = [spec.loss]
        if spec.compare and spec.loss != "cross_entropy":
            losses_to_run.append("cross_entropy")
        results = {}
        for loss_name in losses_to_run:
            trace, params = train_mlp(train_data, loss_name, config)
            results[loss_name] = (trace, params)
            suffix = "" if loss_name == spec.loss else f"_{loss_name}"
            trace.write_csv(art.path(f"trace{suffix}.csv"))
            trace.write_beta_updates_csv(art.path(f"beta_updates{suffix}.csv"))
            if trace.has_column("test_error"):
                ts, errs = trace.column("test_error")
                _write_xy(art.path(f"test_error{suffix}.dat"),
                          [ts, np.minimum.accumulate(errs)], "t best_test_error")
        if spec.compare and len(results) > 1:
            lines = ["loss,final_test_error,best_test_error,final_beta"]
            for loss_name, (trace, _) in results.items():
                if trace.has_column("test_error"):
                    _, errs = trace.column("test_error")
                    final, best = errs[-1], errs.min()
                    lines.append(f"{loss_name},{_fmt(final)},{_fmt(best)},{_fmt(trace.final_beta)}")
                else:
                    lines.append(f"{loss_name},,,{_fmt(trace.final_beta)}")
            art.write_text("comparison.csv", "\n".join(lines) + "\n")
        gp = []
        if any(art.root.glob("test_error*.dat")):
            gp += [
                'set output "test_error.png"',
                'set term pngcairo size 800,600',
                "set logscale x",
                'set title "lowest test error seen so far"',
                'plot ' + ', \\\n     '.join(
                    f'"{p.name}" using 1:2 with steps title "{p.stem}"'
                    for p in sorted(art.root.glob("test_error*.dat"))
                ),
            ]
            art.write_text("plots.gp", "\n".join(gp) + "\n")
        return art.root
    except BaseException:
        art.cleanup()
        raise


def default_mnist_dir() -> Path | None:
    """IDX directory from the environment or the conventional data path."""
    env = os.environ.get(ENV_PREFIX + "MNIST_DIR")
    if env:
        return Path(env)
    conventional = Path(__file__).resolve().parents[2] / "data" / "mnist"
    if conventional.is_dir():
        return conventional
    return None


_SPEC_KEYS = {
    "dataset", "loss", "eta", "alpha", "zeta", "iters", "seed", "out",
    "record_every", "hidden", "batch_size", "compare", "diagnostics",
    "mnist_dir", "test_csv", "n_train", "n_test",
}


def parse_spec_file(path) -> dict[str, str]:
    """Flat key=value settings; '#' starts a comment; unknown keys rejected."""
    settings = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidHyperparameter(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower().replace("-", "_")
        if key not in _SPEC_KEYS:
            raise UnknownName(f"{path}:{line_no}: unknown setting {key!r}")
        settings[key] = value.strip()
    return settings
