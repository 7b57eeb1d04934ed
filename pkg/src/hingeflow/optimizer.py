"""Full-batch constant-step gradient descent with a moving hinge threshold.

The trainable parameters are the weight vector u and the scalar threshold
beta. Both update simultaneously from the same state snapshot: the step
t -> t+1 evaluates the loss at (u_t, beta_t), moves u along the negative
gradient, and raises beta by exactly alpha when the plain hinge risk at
the snapshot is at most zeta. beta therefore always equals alpha times
the number of increments so far.

Iterates at threshold-update times (u_k at time t_k, with beta(t_k) =
k alpha) are stored on the trace; the convergence theory attaches its
guarantees to that subsequence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .diagnostics import cosine_gap, direction_distance, margin_gap
from .exceptions import (
    InsufficientUpdates,
    InvalidHyperparameter,
    NonFinite,
    NoPositiveCrossing,
    NotSeparableSuspected,
    UnknownName,
    ZeroGradient,
)
from .geometry import Dataset, MarginCertificate
from .validation import as_vector, check_count, check_nonnegative, check_positive

LOSS_NAMES = ("complete_hinge", "vanilla_hinge", "logistic", "logistic_normalized")

# Any coordinate beyond this magnitude is treated as a blow-up.
FINITE_LIMIT = 1e12


class AssumptionWarning(UserWarning):
    """A hyperparameter choice leaves the regime the theory covers."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one linear training run.

    record_every None means automatic log-spaced recording: every step up
    to t = 1000, then every 10^(floor(log10 t) - 2) steps. Threshold
    updates are always recorded exactly regardless of cadence.
    """

    eta: float
    alpha: float
    zeta: float = 0.0
    max_iters: int = 1000
    u0: np.ndarray | None = None
    loss: str = "complete_hinge"
    record_every: int | None = None
    store_iterates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eta", check_positive(self.eta, "eta"))
        object.__setattr__(self, "alpha", check_positive(self.alpha, "alpha"))
        object.__setattr__(self, "zeta", check_nonnegative(self.zeta, "zeta"))
        object.__setattr__(self, "max_iters", check_count(self.max_iters, "max_iters"))
        if self.loss not in LOSS_NAMES:
            raise InvalidHyperparameter(
                f"loss must be one of {LOSS_NAMES}, got {self.loss!r}"
            )
        if self.record_every is not None:
            object.__setattr__(
                self, "record_every", check_count(self.record_every, "record_every")
            )
        if self.u0 is not None:
            u0 = as_vector(self.u0, name="u0").copy()
            u0.setflags(write=False)
            object.__setattr__(self, "u0", u0)


@dataclass(frozen=True)
class TrainState:
    """One optimizer state: iteration count, weights, threshold, active set."""

    t: int
    u: np.ndarray
    beta: float
    active_set: np.ndarray
    n_updates: int = 0


@dataclass(frozen=True)
class TraceRow:
    t: int
    beta: float
    norm_u: float
    margin_gap: float | None
    cosine_gap: float | None
    direction_distance: float | None
    active_size: int
    risk: float
    test_error: float | None = None
    min_margin: float | None = None


TRACE_HEADER = "t,beta,norm_u,margin_gap,cosine_gap,active_size,risk"


@dataclass
class Trace:
    """Recorded history of a training run.

    rows holds the sampled per-iteration records. beta_update_times are
    the exact times t_k at which the threshold rose, and update_vectors
    the iterates u_k at those times (so beta(t_k) = k alpha, 1-based).
    iterates optionally stores (t, u_t) snapshots at recorded rows for
    trajectory plots.
    """

    rows: list[TraceRow] = field(default_factory=list)
    beta_update_times: list[int] = field(default_factory=list)
    update_vectors: list[np.ndarray] = field(default_factory=list)
    iterates: list[tuple[int, np.ndarray]] | None = None
    final_u: np.ndarray | None = None
    final_beta: float = 0.0

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """(t, value) arrays for one row field, skipping missing entries."""
        if name not in TraceRow.__dataclass_fields__:
            raise UnknownName(f"trace rows have no column {name!r}")
        ts, values = [], []
        for row in self.rows:
            value = getattr(row, name)
            if value is not None:
                ts.append(row.t)
                values.append(value)
        return np.asarray(ts, dtype=np.float64), np.asarray(values, dtype=np.float64)

    def has_column(self, name: str) -> bool:
        return any(getattr(row, name) is not None for row in self.rows)

    def csv_lines(self) -> list[str]:
        """Serialize rows under the trace schema.

        Margin columns are empty when no certificate was supplied. When
        network-training columns (test_error, min pairwise margin) are
        present they are appended after the base schema.
        """
        extra = self.has_column("test_error") or self.has_column("min_margin")
        header = TRACE_HEADER + (",test_error,min_margin" if extra else "")
        lines = [header]

        def fmt(v):
            return "" if v is None else repr(v)

        for r in self.rows:
            cells = [
                str(r.t), repr(r.beta), repr(r.norm_u), fmt(r.margin_gap),
                fmt(r.cosine_gap), str(r.active_size), repr(r.risk),
            ]
            if extra:
                cells.extend([fmt(r.test_error), fmt(r.min_margin)])
            lines.append(",".join(cells))
        return lines

    def beta_updates_csv_lines(self) -> list[str]:
        """Serialize update times as `k,t_k,gap` (gap since previous update)."""
        lines = ["k,t_k,gap"]
        previous = None
        for k, t_k in enumerate(self.beta_update_times, start=1):
            gap = "" if previous is None else str(t_k - previous)
            lines.append(f"{k},{t_k},{gap}")
            previous = t_k
        return lines

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")

    def write_beta_updates_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(self.beta_updates_csv_lines()) + "\n")


def _check_finite(u: np.ndarray, t: int) -> None:
    if not np.all(np.isfinite(u)) or np.abs(u).max() > FINITE_LIMIT:
        raise NonFinite(
            f"iterate exceeded |coordinate| = {FINITE_LIMIT:g} at t={t}; "
            "eta/alpha are misconfigured for this dataset"
        )


def _evaluate(loss: str, u, data: Dataset, beta: float, config: TrainConfig):
    if loss == "complete_hinge":
        return losses.complete_hinge(u, data, beta, config.alpha, config.eta, config.zeta)
    if loss == "vanilla_hinge":
        return losses.vanilla_hinge(u, data, beta)
    if loss == "logistic":
        return losses.logistic(u, data)
    if loss == "logistic_normalized":
        return losses.normalize_gradient(losses.logistic(u, data))
    raise InvalidHyperparameter(f"unknown loss {loss!r}")


def gd_step(state: TrainState, data: Dataset, config: TrainConfig) -> TrainState:
    """One simultaneous descent step on (u, beta) from the state snapshot."""
    evaluation = _evaluate(config.loss, state.u, data, state.beta, config)
    u_next = state.u - config.eta * evaluation.grad_u
    _check_finite(u_next, state.t + 1)
    n_updates = state.n_updates + int(evaluation.beta_fires)
    beta_next = config.alpha * n_updates
    if config.loss in ("logistic", "logistic_normalized"):
        active = np.arange(data.n)
        beta_next = state.beta  # beta is not a parameter of these losses
        n_updates = state.n_updates
    else:
        active = np.flatnonzero(data.signed @ u_next <= beta_next)
    return TrainState(
        t=state.t + 1, u=u_next, beta=beta_next, active_set=active, n_updates=n_updates
    )


def initial_state(data: Dataset, config: TrainConfig) -> TrainState:
    u0 = np.zeros(data.d) if config.u0 is None else as_vector(config.u0, d=data.d, name="u0")
    if config.loss in ("logistic", "logistic_normalized"):
        active = np.arange(data.n)
    else:
        active = np.flatnonzero(data.signed @ u0 <= 0.0)
    return TrainState(t=0, u=u0.copy(), beta=0.0, active_set=active, n_updates=0)


def _auto_recorded(t: int) -> bool:
    if t <= 1000:
        return True
    stride = 10 ** (len(str(t)) - 3)
    return t % stride == 0


def train(data: Dataset, config: TrainConfig,
          cert: MarginCertificate | None = None) -> Trace:
    """Run max_iters descent steps, recording a trace.

    Margin-gap, cosine-gap, and direction-distance columns are filled only
    when a certificate is supplied. Warns (without stopping) when
    alpha <= gamma * eta, the step-size regime the convergence analysis
    excludes. Raises NotSeparableSuspected when the threshold stops
    advancing for longer than any plausible update gap, the signature of
    data with no separator.
    """
    if cert is not None and config.alpha <= cert.gamma * config.eta:
        warnings.warn(
            f"alpha={config.alpha:g} <= gamma*eta={cert.gamma * config.eta:g}; "
            "threshold increments are too small for the step size and "
            "convergence guarantees do not apply",
            AssumptionWarning,
            stacklevel=2,
        )
    Z = data.signed
    eta, alpha, zeta = config.eta, config.alpha, config.zeta
    is_complete = config.loss == "complete_hinge"
    is_vanilla = config.loss == "vanilla_hinge"
    is_logistic = config.loss in ("logistic", "logistic_normalized")
    state = initial_state(data, config)
    u = state.u.copy()
    beta = 0.0
    n_updates = 0
    trace = Trace(iterates=[] if config.store_iterates else None)

    def recorded(t: int) -> bool:
        if config.record_every is not None:
            return t % config.record_every == 0
        return _auto_recorded(t)

    zero_grad = np.zeros(data.d)
    for t in range(1, config.max_iters + 1):
        fired = False
        if is_complete or is_vanilla:
            dots = Z @ u
            active = dots <= beta
            grad_sum = Z[active].sum(axis=0) if active.any() else zero_grad
            if is_complete:
                hinge = float(np.maximum(beta - dots, 0.0).sum())
                fired = hinge <= zeta
            u = u + eta * grad_sum
            if fired:
                n_updates += 1
                beta = alpha * n_updates
        else:
            evaluation = _evaluate(config.loss, u, data, beta, config)
            u = u - eta * evaluation.grad_u
        _check_finite(u, t)
        if fired:
            trace.beta_update_times.append(t)
            trace.update_vectors.append(u.copy())
        if recorded(t) or fired or t == config.max_iters:
            trace.rows.append(_make_row(t, u, beta, data, cert, config, is_logistic))
            if trace.iterates is not None:
                trace.iterates.append((t, u.copy()))
    trace.final_u = u.copy()
    trace.final_beta = beta

    if is_complete:
        times = trace.beta_update_times
        last = times[-1] if times else 0
        gaps = np.diff([0] + times) if times else np.array([0])
        stall = config.max_iters - last
        threshold = max(100.0, 10.0 * float(gaps.max()), config.max_iters / 2.0)
        if stall > threshold:
            hinge = float(np.maximum(beta - Z @ u, 0.0).sum())
            raise NotSeparableSuspected(
                f"threshold has not advanced for {stall} of {config.max_iters} "
                f"iterations (final hinge risk {hinge:g}); the data looks "
                "linearly inseparable"
            )
    return trace


def _make_row(t, u, beta, data, cert, config, is_logistic) -> TraceRow:
    norm_u = float(np.linalg.norm(u))
    gap = cosine = dist = None
    if cert is not None and norm_u > 0.0:
        gap = margin_gap(u, data, cert)
        cosine = cosine_gap(u, cert)
        dist = direction_distance(u, cert)
    evaluation = _evaluate(config.loss, u, data, beta, config)
    if is_logistic:
        active_size = data.n
    else:
        active_size = int(evaluation.active_set.size)
    return TraceRow(
        t=t, beta=float(beta), norm_u=norm_u, margin_gap=gap, cosine_gap=cosine,
        direction_distance=dist, active_size=active_size, risk=float(evaluation.risk),
    )


@dataclass(frozen=True)
class FlowEvent:
    """One piecewise-flow event: dataset point index, grid level, travel."""

    index: int
    level: float
    length: float


def flow_step(u, data: Dataset, beta_level: float, alpha: float) -> tuple[np.ndarray, FlowEvent]:
    """Jump u to the nearest grid hyperplane along the descent direction.

    The direction is the active-set gradient at (u, beta_level); each
    point's target is its next multiple-of-alpha level at or above its
    current inner product (points exactly on a grid level report a
    zero-length event). Only points the direction approaches are
    candidates; the smallest travel wins, lowest index on ties.
    """
    alpha = check_positive(alpha, "alpha")
    Z = data.signed
    u = as_vector(u, d=Z.shape[1], name="u")
    dots = Z @ u
    active = dots <= float(beta_level)
    if not active.any():
        raise ZeroGradient("no active points at this threshold level")
    mu = Z[active].sum(axis=0)
    mu_norm = np.linalg.norm(mu)
    if mu_norm == 0.0:
        raise ZeroGradient("active points cancel; descent direction is zero")
    mu_hat = mu / mu_norm
    rates = Z @ mu_hat
    ratio = dots / alpha
    nearest = np.rint(ratio)
    on_grid = np.abs(dots - nearest * alpha) <= 1e-9 * np.maximum(1.0, np.abs(dots))
    targets = np.where(on_grid, nearest, np.ceil(ratio)) * alpha
    best_index = -1
    best_length = np.inf
    for i in range(Z.shape[0]):
        if rates[i] <= 1e-12:
            continue
        length = (targets[i] - dots[i]) / rates[i]
        if length < -1e-12:
            continue
        length = max(length, 0.0)
        if length < best_length - 1e-15:
            best_index = i
            best_length = length
    if best_index < 0:
        raise NoPositiveCrossing(
            "the descent direction approaches no grid hyperplane"
        )
    u_next = u + best_length * mu_hat
    return u_next, FlowEvent(index=best_index, level=float(targets[best_index]),
                             length=float(best_length))


def beta_intervals(trace: Trace) -> list[tuple[int, int]]:
    """Consecutive gaps between threshold-update times, as (k, t_k - t_{k-1})."""
    times = trace.beta_update_times
    if len(times) < 2:
        raise InsufficientUpdates(
            f"need at least two threshold updates, trace has {len(times)}"
        )
    return [(k, times[k] - times[k - 1]) for k in range(1, len(times))]
