"""Measured quantities, convergence-rate fits, and geometric property checks.

Everything here is a pure function of a finished training trace, the data,
and a margin certificate; repeated invocations give identical results. The
property checks work on the iterates stored at threshold-update times
(u_k with beta = k alpha) because the theory's guarantees attach to that
subsequence. Early updates are excluded via a burn-in index: with the
tightest non-support slack eps, checks start after ceil((gamma+eps)/eps)
updates, or after 10 when every point is a support vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    InsufficientUpdates,
    InvalidWindow,
    MissingCertificate,
    NonPositiveValues,
    ZeroVector,
)
from .geometry import Dataset, MarginCertificate
from .validation import as_vector

# Slope bands are asserted against exponents fit over the final decades,
# where the asymptotic regime has set in.
DEFAULT_WINDOW_DECADES = 2.0


def margin_gap(u, data: Dataset, cert: MarginCertificate) -> float:
    """gamma minus the worst normalized margin of u over the dataset."""
    u = as_vector(u, d=data.d, name="u")
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ZeroVector("margin gap undefined for the zero vector")
    dots = data.signed @ (u / norm)
    return float(cert.gamma - dots.min())


def cosine_gap(u, cert: MarginCertificate) -> float:
    """1 - <u/||u||, u_bar>."""
    u = as_vector(u, d=cert.u_bar.shape[0], name="u")
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ZeroVector("cosine gap undefined for the zero vector")
    return float(1.0 - np.dot(u / norm, cert.u_bar))


def direction_distance(u, cert: MarginCertificate) -> float:
    """||u/||u|| - u_bar||; satisfies distance^2 = 2 * cosine_gap."""
    u = as_vector(u, d=cert.u_bar.shape[0], name="u")
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ZeroVector("direction distance undefined for the zero vector")
    return float(np.linalg.norm(u / norm - cert.u_bar))


@dataclass(frozen=True)
class RateFit:
    """Log-log least-squares fit of a trace column against iteration."""

    slope: float
    intercept: float
    window: tuple[float, float]
    sup_scaled: float
    n_points: int


def _default_target(column: str) -> float:
    return -0.5 if column == "direction_distance" else -1.0


def fit_rate(trace, column: str, window=None, target: float | None = None) -> RateFit:
    """Fit value ~ C * t^slope over a window of recorded iterations.

    window defaults to the last two decades of recorded t. sup_scaled is
    the maximum of value * t^(-target) over the window, the empirical
    constant for the targeted exponent (-1 for margin and cosine gaps,
    -1/2 for direction distance).
    """
    ts, values = trace.column(column)
    if ts.size == 0:
        raise InvalidWindow(f"trace has no recorded values for {column!r}")
    if window is None:
        t_hi = float(ts[-1])
        window = (t_hi / 10.0**DEFAULT_WINDOW_DECADES, t_hi)
    t_lo, t_hi = float(window[0]), float(window[1])
    if not t_lo < t_hi:
        raise InvalidWindow(f"window must satisfy t_lo < t_hi, got {window}")
    mask = (ts >= t_lo) & (ts <= t_hi)
    ts, values = ts[mask], values[mask]
    if ts.size < 20:
        raise InvalidWindow(
            f"window {window} holds {ts.size} recorded points; at least 20 required"
        )
    if np.any(values <= 0.0):
        raise NonPositiveValues(
            f"column {column!r} touches zero in the window; shrink the window"
        )
    if target is None:
        target = _default_target(column)
    slope, intercept = np.polyfit(np.log(ts), np.log(values), 1)
    sup_scaled = float(np.max(values * ts ** (-target)))
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        window=(t_lo, t_hi),
        sup_scaled=sup_scaled,
        n_points=int(ts.size),
    )


def scaled_sup_stability(trace, column: str = "margin_gap", target: float = -1.0,
                         window=None) -> tuple[float, float]:
    """Running sup of value * t^(-target) and its end-vs-midpoint ratio.

    Returns (sup over the window, sup(full window) / sup(first half)).
    A ratio near 1 means the scaled quantity has stopped growing, i.e.
    the fitted rate is not just a transient.
    """
    ts, values = trace.column(column)
    if ts.size == 0:
        raise InvalidWindow(f"trace has no recorded values for {column!r}")
    if window is None:
        t_hi = float(ts[-1])
        window = (t_hi / 10.0**DEFAULT_WINDOW_DECADES, t_hi)
    t_lo, t_hi = float(window[0]), float(window[1])
    mask = (ts >= t_lo) & (ts <= t_hi)
    ts, values = ts[mask], values[mask]
    if ts.size < 2:
        raise InvalidWindow(f"window {window} holds fewer than 2 recorded points")
    scaled = values * ts ** (-target)
    sup_full = float(scaled.max())
    half = ts <= t_hi / 2.0
    if not half.any():
        raise InvalidWindow(f"window {window} has no points below its midpoint")
    sup_half = float(scaled[half].max())
    return sup_full, sup_full / sup_half


@dataclass(frozen=True)
class LemmaReport:
    """Verdict of one geometric property check over a trace."""

    lemma: str
    passed: bool
    margin_of_pass: float | None
    witness_t: int | None = None
    witness_index: int | None = None
    skipped: bool = False
    note: str = ""

    @property
    def status(self) -> str:
        if self.skipped:
            return "skip"
        return "pass" if self.passed else "fail"


def default_burn_in(cert: MarginCertificate) -> int:
    """Number of threshold updates to skip before asymptotic checks."""
    if cert.epsilon is None:
        return 10
    return math.ceil((cert.gamma + cert.epsilon) / cert.epsilon)


def _decile_split(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tenth = max(1, series.size // 10)
    return series[:tenth], series[-tenth:]


def _trend_report(lemma: str, ks: np.ndarray, series: np.ndarray, note: str) -> LemmaReport:
    """No-growth check: last-decile max at most twice the first-decile max."""
    if series.size < 20:
        return LemmaReport(
            lemma=lemma, passed=True, margin_of_pass=None, skipped=True,
            note=f"only {series.size} post-burn-in samples; {note}",
        )
    first, last = _decile_split(series)
    bound = 2.0 * float(first.max())
    worst = float(last.max())
    worst_at = int(ks[series.size - last.size + int(np.argmax(last))])
    return LemmaReport(
        lemma=lemma,
        passed=worst <= bound,
        margin_of_pass=bound - worst,
        witness_t=worst_at,
        note=note,
    )


def run_lemma_suite(trace, data: Dataset, cert: MarginCertificate, config,
                    burn_in: int | None = None) -> list[LemmaReport]:
    """Check the support-geometry properties a complete-hinge run must obey.

    Reports, in order: dual positivity of the support matrix; no growth of
    threshold-update gaps; non-support points that are still active only
    pull iterates toward the separator ray; iterates stay inside the
    widened support band ((k-1) alpha .. (k+1) alpha); non-support points
    stay ahead of the moving threshold. Checks needing a non-support point
    or enough updates are reported as skipped rather than vacuously passed.
    """
    if cert is None or cert.gamma_dual is None:
        raise MissingCertificate("lemma suite needs a certificate with support matrix")
    alpha = config.alpha
    if burn_in is None:
        burn_in = default_burn_in(cert)
    times = np.asarray(trace.beta_update_times, dtype=np.int64)
    vectors = trace.update_vectors
    Z = data.signed
    support = set(cert.support_indices)
    nonsupport = np.array(
        [i for i in range(data.n) if i not in support], dtype=np.intp
    )
    reports: list[LemmaReport] = []

    # Dual positivity: <u_bar, gamma_i*> >= 0 per support-matrix row.
    products = cert.u_bar @ cert.gamma_dual
    worst_col = int(np.argmin(products))
    reports.append(
        LemmaReport(
            lemma="lemma2",
            passed=bool(products[worst_col] >= -1e-9),
            margin_of_pass=float(products[worst_col]),
            witness_index=worst_col,
            note="dual positivity of the max-volume support matrix",
        )
    )

    # Update-gap trend: consecutive t_k gaps must not grow after burn-in.
    gaps = np.diff(times)
    gap_ks = np.arange(2, times.size + 1)  # gap ending at update k
    post = gap_ks > burn_in
    reports.append(
        _trend_report("lemma3", gap_ks[post], gaps[post].astype(np.float64),
                      note="threshold-update gaps stay bounded")
    )

    # Per-update scans share this iteration.
    def _post_burn_updates():
        for j, u_k in enumerate(vectors):
            k = j + 1
            if k > burn_in:
                yield k, int(times[j]), u_k

    if nonsupport.size == 0 or cert.epsilon is None:
        skip_note = "every point is a support vector; non-support slack undefined"
        reports.append(LemmaReport("lemma4", True, None, skipped=True, note=skip_note))
        reports.append(LemmaReport("lemma5", *_parallelotope(
            _post_burn_updates(), cert, alpha)))
        reports.append(LemmaReport("lemma7", True, None, skipped=True, note=skip_note))
        return reports

    # Active non-support points must pull toward the separator ray:
    # <-pi_ubar(u_k), z> >= 0 for z active at u_k after burn-in.
    worst4 = (np.inf, None, None)
    for k, t_k, u_k in _post_burn_updates():
        dots = Z @ u_k
        level = k * alpha
        active_ns = nonsupport[dots[nonsupport] <= level]
        if active_ns.size == 0:
            continue
        residual = u_k - np.dot(cert.u_bar, u_k) * cert.u_bar
        values = -(Z[active_ns] @ residual)
        j = int(np.argmin(values))
        if values[j] < worst4[0]:
            worst4 = (float(values[j]), t_k, int(active_ns[j]))
    if worst4[1] is None:
        reports.append(LemmaReport(
            "lemma4", True, None, skipped=True,
            note="no non-support point was active after burn-in",
        ))
    else:
        tol = 1e-9 * (1.0 + abs(worst4[0]))
        reports.append(LemmaReport(
            "lemma4", bool(worst4[0] >= -tol), worst4[0],
            witness_t=worst4[1], witness_index=worst4[2],
            note="active non-support points only accelerate convergence",
        ))

    reports.append(LemmaReport("lemma5", *_parallelotope(
        _post_burn_updates(), cert, alpha)))

    # Stay ahead: min over non-support of <u_k, z> >= k alpha after burn-in.
    worst7 = (np.inf, None, None, 0.0)
    for k, t_k, u_k in _post_burn_updates():
        dots = Z[nonsupport] @ u_k
        slack = dots - k * alpha
        j = int(np.argmin(slack))
        if slack[j] < worst7[0]:
            worst7 = (float(slack[j]), t_k, int(nonsupport[j]), k * alpha)
    if worst7[1] is None:
        reports.append(LemmaReport(
            "lemma7", True, None, skipped=True,
            note="no updates recorded after burn-in",
        ))
    else:
        tol = 1e-9 * (1.0 + worst7[3])
        reports.append(LemmaReport(
            "lemma7", bool(worst7[0] >= -tol), worst7[0],
            witness_t=worst7[1], witness_index=worst7[2],
            note="non-support points stay ahead of the threshold",
        ))
    return reports


def _parallelotope(updates, cert: MarginCertificate, alpha: float):
    """Band check: (k-1) alpha - tol <= <u_k, gamma_i> <= (k+1) alpha + tol.

    Returns positional fields for LemmaReport after the lemma id. The
    tolerance 1e-7 * (1 + k alpha) absorbs rounding accumulated over long
    runs.
    """
    rows = cert.gamma_matrix
    worst = (np.inf, None, None)
    violated = False
    seen = False
    for k, t_k, u_k in updates:
        seen = True
        dots = rows @ u_k
        lower = dots - (k - 1) * alpha
        upper = (k + 1) * alpha - dots
        slack = np.minimum(lower, upper)
        j = int(np.argmin(slack))
        tol = 1e-7 * (1.0 + k * alpha)
        if slack[j] < -tol:
            violated = True
        if slack[j] < worst[0]:
            worst = (float(slack[j]), t_k, j)
    if not seen:
        return (True, None, None, None, True, "no updates recorded after burn-in")
    return (not violated, worst[0], worst[1], worst[2], False,
            "iterates stay inside the widened support band")


def norm_growth_report(trace, cert: MarginCertificate, config,
                       burn_in: int | None = None) -> LemmaReport:
    """Deviation |  ||u_k|| - k alpha / gamma  | stays bounded after burn-in."""
    if cert is None:
        raise MissingCertificate("norm-growth check needs a certificate")
    if burn_in is None:
        burn_in = default_burn_in(cert)
    alpha = config.alpha
    ks = []
    devs = []
    for j, u_k in enumerate(trace.update_vectors):
        k = j + 1
        if k <= burn_in:
            continue
        ks.append(k)
        devs.append(abs(float(np.linalg.norm(u_k)) - k * alpha / cert.gamma))
    return _trend_report(
        "norm_growth", np.asarray(ks), np.asarray(devs),
        note="norm tracks k alpha / gamma with bounded deviation",
    )


def reports_to_csv_lines(reports: list[LemmaReport]) -> list[str]:
    """Serialize reports for `lemma,pass,slack,witness_t,witness_index`."""
    lines = ["lemma,pass,slack,witness_t,witness_index"]
    for r in reports:
        slack = "" if r.margin_of_pass is None else repr(r.margin_of_pass)
        wt = "" if r.witness_t is None else str(r.witness_t)
        wi = "" if r.witness_index is None else str(r.witness_index)
        lines.append(f"{r.lemma},{r.status},{slack},{wt},{wi}")
    return lines


def reports_summary(reports: list[LemmaReport]) -> str:
    """Human-readable one-line-per-check summary."""
    out = []
    for r in reports:
        head = f"{r.lemma}: {r.status.upper()}"
        if r.margin_of_pass is not None:
            head += f" (worst slack {r.margin_of_pass:.3e})"
        if r.witness_t is not None:
            head += f" at t={r.witness_t}"
        if r.witness_index is not None:
            head += f" point {r.witness_index}"
        if r.note:
            head += f" [{r.note}]"
        out.append(head)
    return "\n".join(out) + "\n"
