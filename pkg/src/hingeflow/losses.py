"""Risk values and descent directions for every loss used by the trainers.

All binary losses act on the signed points z_i = y_i x_i and return a
LossEval whose grad_u is a descent direction in the sense u <- u - eta * grad_u.
Points sitting exactly on the threshold <u, z_i> = beta are INCLUDED in the
active set, so a boundary point can simultaneously contribute to the
gradient and let the threshold indicator fire; both effects apply.

Per-point sums are accumulated in fixed index order, which keeps repeated
evaluations bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .exceptions import (
    InvalidHyperparameter,
    LabelOutOfRange,
    ShapeMismatch,
    ZeroGradient,
)
from .geometry import Dataset
from .validation import (
    as_vector,
    check_class_labels,
    check_nonnegative,
    check_positive,
)


@dataclass(frozen=True)
class LossEval:
    """One loss evaluation at a fixed parameter point.

    beta_fires reports whether the threshold-increment indicator is
    active, i.e. the plain hinge risk at (u, beta) is at most zeta.
    """

    risk: float
    grad_u: np.ndarray
    beta_fires: bool
    active_set: np.ndarray


@dataclass(frozen=True)
class MulticlassEval:
    """Multiclass pairwise-margin evaluation over a batch of score rows."""

    risk: float
    grad_scores: np.ndarray
    beta_fires: bool
    active_pairs: int


def _signed_dots(u, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    Z = data.signed
    u = as_vector(u, d=Z.shape[1], name="u")
    return Z, Z @ u


def vanilla_hinge(u, data: Dataset, beta: float) -> LossEval:
    """Plain hinge risk sum_i max(beta - <u, z_i>, 0), unnormalized."""
    Z, dots = _signed_dots(u, data)
    beta = float(beta)
    active = dots <= beta
    risk = float(np.maximum(beta - dots, 0.0).sum())
    grad = -Z[active].sum(axis=0) if active.any() else np.zeros(Z.shape[1])
    # The threshold never moves under the plain hinge; that mechanism
    # belongs to the complete variant.
    return LossEval(
        risk=risk,
        grad_u=grad,
        beta_fires=False,
        active_set=np.flatnonzero(active),
    )


def hinge_active_term(u, data: Dataset, beta: float) -> float:
    """Data term of the complete hinge: -sum of <u, z_i> over the active set.

    Kept as its own function so the trainer, the series evaluator, and the
    equivalence tests all share one floating-point summation path.
    """
    _, dots = _signed_dots(u, data)
    return float(-np.sum(dots[dots <= float(beta)]))


def complete_hinge(
    u, data: Dataset, beta: float, alpha: float, eta: float, zeta: float = 0.0
) -> LossEval:
    """Hinge risk with an explicit descent direction at its critical points.

    risk = -sum_{<u,z_i> <= beta} <u,z_i> - 1[hinge <= zeta] * (alpha/eta) * beta.
    The gradient in u is -sum over the active set; the indicator firing
    means one descent step moves beta up by exactly alpha.
    """
    alpha = check_positive(alpha, "alpha")
    eta = check_positive(eta, "eta")
    zeta = check_nonnegative(zeta, "zeta")
    Z, dots = _signed_dots(u, data)
    beta = float(beta)
    active = dots <= beta
    data_term = float(-np.sum(dots[active]))
    hinge = float(np.maximum(beta - dots, 0.0).sum())
    fires = hinge <= zeta
    risk = data_term - (alpha / eta) * beta if fires else data_term
    grad = -Z[active].sum(axis=0) if active.any() else np.zeros(Z.shape[1])
    return LossEval(
        risk=risk,
        grad_u=grad,
        beta_fires=bool(fires),
        active_set=np.flatnonzero(active),
    )


def series_band(u, data: Dataset, alpha: float, k: int) -> float:
    """Band k of the series form of the complete hinge.

    Value is -sum of <u, z_i> over points with (k-1) alpha <= <u, z_i> <= k alpha,
    gated by the indicator that every point clears (k-1) alpha strictly.
    """
    alpha = check_positive(alpha, "alpha")
    _, dots = _signed_dots(u, data)
    lo = (k - 1) * alpha
    if not dots.min() > lo:
        return 0.0
    mask = (dots >= lo) & (dots <= k * alpha)
    return float(-np.sum(dots[mask]))


def complete_hinge_series(u, data: Dataset, alpha: float, kmax: int) -> float:
    """Series form of the complete hinge data term, truncated at band kmax.

    Band k contributes only while the whole dataset has cleared level
    (k-1) alpha, so bands above ceil(max dot / alpha) + 1 are identically
    zero and the truncation is exact once kmax reaches that index.

    Evaluated as one sum over the union of live bands rather than as a
    sum of per-band sums: the bands partition the union (a point exactly
    on a shared band boundary is counted once), and the single masked sum
    follows the same floating-point path as the direct data term, making
    the two forms bit-identical whenever the union covers the active set.
    """
    alpha = check_positive(alpha, "alpha")
    if kmax < 1:
        raise InvalidHyperparameter(f"kmax must be >= 1, got {kmax}")
    _, dots = _signed_dots(u, data)
    lowest = dots.min()
    # Gates are monotone in k, and consecutive bands abut, so the union of
    # live bands is the single interval [-alpha, last_live * alpha].
    last_live = -1
    for k in range(0, kmax + 1):
        if not lowest > (k - 1) * alpha:
            break
        last_live = k
    if last_live < 0:
        union = np.zeros(dots.shape, dtype=bool)
    else:
        union = (dots >= -alpha) & (dots <= last_live * alpha)
    return float(-np.sum(dots[union]))


def logistic(u, data: Dataset) -> LossEval:
    """Logistic risk sum_i log(1 + exp(-<u, z_i>)) with a stable gradient."""
    Z, dots = _signed_dots(u, data)
    risk = float(np.logaddexp(0.0, -dots).sum())
    grad = -(Z.T @ expit(-dots))
    return LossEval(
        risk=risk,
        grad_u=grad,
        beta_fires=False,
        active_set=np.arange(Z.shape[0]),
    )


def normalize_gradient(evaluation: LossEval) -> LossEval:
    """Rescale the descent direction to unit norm."""
    norm = float(np.linalg.norm(evaluation.grad_u))
    if norm == 0.0:
        raise ZeroGradient("cannot normalize a zero gradient")
    return replace(evaluation, grad_u=evaluation.grad_u / norm)


def multiclass_complete_hinge(
    scores: np.ndarray,
    labels,
    beta: float,
    alpha: float,
    eta: float,
    zeta: float = 0.0,
    n: int | None = None,
) -> MulticlassEval:
    """Pairwise-margin form of the complete hinge over score rows.

    A pair (i, y), y != y_i, is active when s_{i,y_i} - s_{i,y} <= beta and
    contributes (s_{i,y} - s_{i,y_i})/n to the risk; the threshold term
    -(alpha/(n eta)) * beta applies when the mean pairwise hinge is at most
    zeta. grad_scores carries +1/n at each active (i, y) and -1/n per
    active pair at (i, y_i). n defaults to the number of rows, letting a
    mini-batch evaluation scale like the full-sample definition.
    """
    alpha = check_positive(alpha, "alpha")
    eta = check_positive(eta, "eta")
    zeta = check_nonnegative(zeta, "zeta")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ShapeMismatch(f"scores must be (n, K) with K >= 2, got {scores.shape}")
    b, K = scores.shape
    y = check_class_labels(labels, K)
    if y.shape[0] != b:
        raise ShapeMismatch("labels must align with score rows")
    if n is None:
        n = b
    n = int(n)
    if n < 1:
        raise InvalidHyperparameter(f"n must be >= 1, got {n}")
    rows = np.arange(b)
    own = scores[rows, y]
    margins = own[:, None] - scores  # margins[i, y] = s_{i, y_i} - s_{i, y}
    beta = float(beta)
    active = margins <= beta
    active[rows, y] = False
    pair_term = float(-np.sum(margins[active])) / n
    hinge = float(np.maximum(beta - margins, 0.0)[active].sum())
    fires = hinge / n <= zeta
    risk = pair_term - (alpha / (n * eta)) * beta if fires else pair_term
    grad = active.astype(np.float64)
    grad[rows, y] = -active.sum(axis=1, dtype=np.float64)
    grad /= n
    return MulticlassEval(
        risk=risk,
        grad_scores=grad,
        beta_fires=bool(fires),
        active_pairs=int(active.sum()),
    )
