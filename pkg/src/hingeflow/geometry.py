"""Max-margin geometry: exact separator, support matrices, crossing operators.

The central object is the margin certificate: the unit direction u_bar
attaining the largest possible minimum of <u, z_i> over the signed points
z_i = y_i x_i, the attained margin gamma, the set of points meeting it,
and a full-volume selection of support vectors Gamma together with its
biorthogonal functionals Gamma_dual (columns gamma_i* with
<gamma_i, gamma_j*> = delta_ij). The identity u_bar = gamma * Gamma_dual @ 1
ties the separator to the support geometry and is verified on every
certificate this module produces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .exceptions import (
    DegenerateSupport,
    DimensionMismatch,
    DuplicatePoints,
    LabelOutOfRange,
    MissingCertificate,
    NoCrossing,
    NotSeparable,
    ParallelDirection,
    ZeroVector,
)
from .validation import as_matrix, as_vector, nonzero_vector

# A point is a support vector iff <u_bar, z> <= gamma + SUPPORT_TOL * max(1, gamma).
SUPPORT_TOL = 1e-9
# A candidate direction is feasible iff every <u, z_i> >= 1 - FEASIBLE_TOL.
FEASIBLE_TOL = 1e-9
# Candidates whose norm is within NORM_TIE_TOL of the best tie on the
# lexicographically smallest support subset.
NORM_TIE_TOL = 1e-9


@dataclass(frozen=True)
class Dataset:
    """A finite training sample.

    points[i] is x_i, labels[i] its class. Binary labels live in {-1,+1}
    and the signed points z_i = y_i x_i drive all margin computations;
    multiclass labels live in {0..K-1} and are used by the network trainer.
    """

    points: np.ndarray
    labels: np.ndarray
    name: str = ""
    # Margin machinery needs distinct points; image data may repeat rows.
    allow_duplicates: bool = False

    def __post_init__(self):
        pts = as_matrix(self.points, "points")
        raw = np.asarray(self.labels)
        if raw.ndim != 1 or raw.shape[0] != pts.shape[0]:
            raise DimensionMismatch("labels must be a vector with one entry per point")
        try:
            numeric = np.asarray(raw, dtype=np.float64)
        except (TypeError, ValueError):
            raise LabelOutOfRange("labels must be numeric") from None
        if np.all(np.isin(numeric, (-1.0, 1.0))):
            labels = numeric
        else:
            as_int = numeric.astype(np.int64)
            if not np.array_equal(as_int, numeric) or as_int.min() < 0:
                raise LabelOutOfRange(
                    "labels must be -1/+1 (binary) or 0..K-1 (multiclass)"
                )
            labels = as_int
        if not self.allow_duplicates and np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise DuplicatePoints("all points must be distinct")
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_binary(self) -> bool:
        return self.labels.dtype == np.float64

    @property
    def n_classes(self) -> int:
        if self.is_binary:
            return 2
        return int(self.labels.max()) + 1

    @cached_property
    def signed(self) -> np.ndarray:
        """Signed points z_i = y_i x_i; defined for binary labels only."""
        if not self.is_binary:
            raise LabelOutOfRange("signed points require binary -1/+1 labels")
        signed = self.points * self.labels[:, None]
        signed.setflags(write=False)
        return signed


@dataclass(frozen=True)
class MarginCertificate:
    """Everything known about the max-margin separator of one dataset.

    epsilon is the slack of the tightest non-support point, i.e.
    min over non-support z of <u_bar, z> minus gamma (always positive);
    it is None when every point is a support vector.
    """

    u_bar: np.ndarray
    gamma: float
    support_indices: tuple[int, ...]
    gamma_matrix: np.ndarray | None = None
    gamma_dual: np.ndarray | None = None
    epsilon: float | None = None

    def __post_init__(self):
        u = as_vector(self.u_bar, name="u_bar")
        if abs(np.linalg.norm(u) - 1.0) > 1e-12:
            raise ZeroVector("u_bar must be a unit vector")
        if not self.gamma > 0:
            raise NotSeparable(f"margin must be positive, got {self.gamma}")
        u.setflags(write=False)
        object.__setattr__(self, "u_bar", u)
        object.__setattr__(self, "support_indices", tuple(int(i) for i in self.support_indices))

    @property
    def has_support_matrix(self) -> bool:
        return self.gamma_matrix is not None

    @property
    def k(self) -> int:
        """Number of rows of the support matrix."""
        if self.gamma_matrix is None:
            raise MissingCertificate("support matrix not populated")
        return self.gamma_matrix.shape[0]


@dataclass(frozen=True)
class Hyperplane:
    """The set of u with <u, normal> = level."""

    normal: np.ndarray
    level: float

    def __post_init__(self):
        normal = nonzero_vector(self.normal, name="normal")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "level", float(self.level))


def _feasible_candidates(Z: np.ndarray, size: int):
    """All support subsets of the given size whose margin system is solvable.

    For a subset T the minimum-norm solution of <u, z_i> = 1 on T is
    u = Z_T' lam with Gram(Z_T) lam = 1. Row-rank-deficient subsets are
    skipped: when their system is consistent a smaller subset yields the
    same solution, and when it is inconsistent they cannot host the
    optimum. Returns (subsets, u_candidates, norms) for feasible ones.
    """
    n, d = Z.shape
    subsets = np.array(list(itertools.combinations(range(n), size)), dtype=np.intp)
    if subsets.size == 0:
        return np.empty((0, size), dtype=np.intp), np.empty((0, d)), np.empty(0)
    stacks = Z[subsets]  # (m, size, d)
    grams = stacks @ stacks.transpose(0, 2, 1)
    dets = np.linalg.det(grams)
    # Hadamard bound on |det Gram| screens out rank-deficient subsets.
    row_norms = np.linalg.norm(stacks, axis=2)
    scale = np.prod(row_norms, axis=1) ** 2
    solvable = np.abs(dets) > 1e-12 * np.maximum(scale, 1e-300)
    if not np.any(solvable):
        return np.empty((0, size), dtype=np.intp), np.empty((0, d)), np.empty(0)
    subsets = subsets[solvable]
    stacks = stacks[solvable]
    lam = np.linalg.solve(grams[solvable], np.ones((subsets.shape[0], size, 1)))[..., 0]
    cands = np.einsum("msd,ms->md", stacks, lam)
    # Guard against ill-conditioned solves sneaking through the det screen.
    residual = np.abs(np.einsum("msd,md->ms", stacks, cands) - 1.0).max(axis=1)
    dots = cands @ Z.T
    feasible = (residual <= 1e-6) & (dots.min(axis=1) >= 1.0 - FEASIBLE_TOL)
    return subsets[feasible], cands[feasible], np.linalg.norm(cands[feasible], axis=1)


def solve_max_margin(data: Dataset) -> MarginCertificate:
    """Exact l2 max-margin direction by support-subset enumeration.

    Tries every candidate support subset of size <= d: the optimum solves
    <u, z_i> = 1 on its own support set with minimal norm, so the feasible
    candidate of smallest norm is the unique optimum, with u_bar = u/||u||
    and gamma = 1/||u||. Among subsets tied on norm the lexicographically
    smallest index set is reported. The returned certificate has its
    support matrix populated.
    """
    Z = data.signed
    n, d = Z.shape
    best: tuple[float, tuple[int, ...], np.ndarray] | None = None
    for size in range(1, min(n, d) + 1):
        subsets, cands, norms = _feasible_candidates(Z, size)
        for subset, u, norm in zip(subsets, cands, norms):
            key = (norm, tuple(int(i) for i in subset))
            if best is None:
                best = (norm, key[1], u)
            elif norm < best[0] - NORM_TIE_TOL:
                best = (norm, key[1], u)
            elif norm <= best[0] + NORM_TIE_TOL and key[1] < best[1]:
                best = (best[0], key[1], u)
    if best is None:
        raise NotSeparable("no feasible support subset; data is not linearly separable")
    norm, _, u = best
    gamma = 1.0 / np.linalg.norm(u)
    u_bar = u * gamma
    dots = Z @ u_bar
    support_mask = dots <= gamma + SUPPORT_TOL * max(1.0, gamma)
    support = tuple(int(i) for i in np.flatnonzero(support_mask))
    epsilon = None
    if not support_mask.all():
        epsilon = float(dots[~support_mask].min() - gamma)
    cert = MarginCertificate(
        u_bar=u_bar, gamma=float(gamma), support_indices=support, epsilon=epsilon
    )
    return select_support_matrix(cert, data)


def _volume(rows: np.ndarray) -> float:
    """Parallelotope volume spanned by the rows (Gram determinant form)."""
    k, d = rows.shape
    if k == d:
        return abs(float(np.linalg.det(rows)))
    gram = rows @ rows.T
    return float(np.sqrt(max(np.linalg.det(gram), 0.0)))


def select_support_matrix(cert: MarginCertificate, data: Dataset) -> MarginCertificate:
    """Fill Gamma with the max-volume independent support subset.

    k = dim span(support). Among all k-subsets of the support set the one
    with the largest parallelotope volume is selected (ties resolved to
    the lexicographically smallest index set). The biorthogonal block is
    Gamma' (Gamma Gamma')^-1 when k < d, specializing to the plain inverse
    when the support spans the whole space.
    """
    if not cert.support_indices:
        raise DegenerateSupport("certificate has an empty support set")
    Z = data.signed
    support = list(cert.support_indices)
    stack = Z[support]
    k = int(np.linalg.matrix_rank(stack))
    if k == 0:
        raise DegenerateSupport("support vectors span a zero-dimensional space")
    best_subset = None
    best_volume = -1.0
    for subset in itertools.combinations(support, k):
        vol = _volume(Z[list(subset)])
        if vol > best_volume * (1.0 + 1e-12) + 1e-15:
            best_volume = vol
            best_subset = subset
    if best_subset is None or best_volume <= 0.0:
        raise DegenerateSupport("no k-subset of the support has nonzero volume")
    gamma_matrix = Z[list(best_subset)].copy()
    if k == gamma_matrix.shape[1]:
        gamma_dual = np.linalg.inv(gamma_matrix)
    else:
        gamma_dual = gamma_matrix.T @ np.linalg.inv(gamma_matrix @ gamma_matrix.T)
    if not np.allclose(gamma_matrix @ gamma_dual, np.eye(k), atol=1e-9):
        raise DegenerateSupport("biorthogonality failed; support matrix ill-conditioned")
    gamma_matrix.setflags(write=False)
    gamma_dual.setflags(write=False)
    return replace(cert, gamma_matrix=gamma_matrix, gamma_dual=gamma_dual)


def check_dual_positivity(cert: MarginCertificate) -> list[float]:
    """Inner products <u_bar, gamma_i*>, one per support-matrix row.

    Each must be non-negative for a genuine max-margin certificate; a
    negative value witnesses a direction with a larger margin.
    """
    if cert.gamma_dual is None:
        raise MissingCertificate("support matrix not populated")
    return [float(v) for v in cert.u_bar @ cert.gamma_dual]


def project_orthogonal(u, v) -> np.ndarray:
    """Component of v orthogonal to u: v - (<u,v>/||u||^2) u."""
    u = nonzero_vector(u, name="u")
    v = as_vector(v, d=u.shape[0], name="v")
    return v - (np.dot(u, v) / np.dot(u, u)) * u


def crossing_length(u, mu, plane: Hyperplane) -> float:
    """Travel distance from u along unit direction mu/||mu|| to the plane.

    L = (level - <u, normal>) / <mu_hat, normal>; u + L mu_hat lies on the
    plane by construction. L is negative when the plane is behind u.
    """
    mu = nonzero_vector(mu, name="mu")
    u = as_vector(u, d=mu.shape[0], name="u")
    mu_hat = mu / np.linalg.norm(mu)
    rate = float(np.dot(mu_hat, plane.normal))
    if abs(rate) < 1e-12:
        raise ParallelDirection("direction is parallel to the hyperplane")
    return float((plane.level - np.dot(u, plane.normal)) / rate)


def first_crossed_support(
    u, cert: MarginCertificate, beta_level: float, event_budget: int = 1000
) -> int:
    """Row index of the first support-matrix plane reached by the flow.

    From u the flow moves along the sum of the support rows still at or
    below their hyperplane <., gamma_i> = beta_level, reading off
    crossing_length per row; the smallest non-negative crossing wins
    (lowest row index on ties). Rows already on their plane win with
    travel zero.
    """
    if cert.gamma_matrix is None:
        raise MissingCertificate("support matrix not populated")
    rows = cert.gamma_matrix
    u = as_vector(u, d=rows.shape[1], name="u")
    beta_level = float(beta_level)
    for _ in range(event_budget):
        dots = rows @ u
        active = dots <= beta_level
        if not active.any():
            raise NoCrossing("u is already past every support hyperplane")
        mu = rows[active].sum(axis=0)
        best_index = -1
        best_length = np.inf
        for i in np.flatnonzero(active):
            try:
                length = crossing_length(u, mu, Hyperplane(rows[i], beta_level))
            except ParallelDirection:
                continue
            if -1e-12 <= length < best_length - 1e-15:
                best_index = int(i)
                best_length = max(length, 0.0)
        if best_index >= 0:
            return best_index
        # The flow moves away from every remaining plane; should be
        # impossible for independent rows, so treat it as budget failure.
        u = u + mu / np.linalg.norm(mu)
    raise NoCrossing(f"no support hyperplane reached within {event_budget} events")
