"""Critical exponent estimation from truncated Poincare series.

For a discrete group Gamma acting on H^{d+1} the Poincare series

    P(s, o) = sum_{gamma in Gamma} exp(-s * d(o, gamma o))

diverges for s below the critical exponent delta and converges above it.
For a Schottky group the reduced words of length n form a "shell" and the
shell sums

    a_n(s) = sum_{|gamma| = n} exp(-s * d(o, gamma o))

grow/decay geometrically with ratio crossing 1 exactly at s = delta (up to
truncation error).  The estimator used here finds, for each level n, the
root delta_n of

    log a_n(s) - log a_{n-1}(s) = 0

by bisection (the ratio is strictly decreasing in s) and reports the
deepest-level root.  For elementary groups (k = 1) the shells do not grow
-- the count ratio is 1 for n >= 2 -- so there is no positive root and the
series is degenerate: delta = 0.

Summation is done in the log domain with a max shift, chunked in a fixed
order so results are bit-identical regardless of thread count.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import core

#: Bisection tolerance in s for the per-level roots.
BISECTION_TOL = 1e-6

#: Default truncation depth.
DEFAULT_N_MAX = 12

#: Fixed chunk length for the log-sum-exp reduction tree.  Partial sums are
#: combined in chunk order, so the result does not depend on thread count.
_CHUNK = 1 << 16

#: Upper end of the bracket-expansion search in s.
_BRACKET_CAP = 1024.0


@dataclass(frozen=True)
class PoincareTruncation:
    """Shell sums a_n(s) of the truncated Poincare series.

    ``values[n]`` is a_n(s) for n = levels[n]; ``log_values`` carries the
    same data in the log domain (useful once the float values underflow).
    ``diverged`` flags shells whose sum overflowed double precision; the
    remaining entries are still valid partial data.
    """

    s: float
    levels: np.ndarray
    values: np.ndarray
    log_values: np.ndarray
    diverged: bool = False


@dataclass(frozen=True)
class DeltaEstimate:
    """Per-level critical exponent estimates delta_n and the final value.

    ``delta`` is the deepest-level estimate delta_{n_max}; ``spread`` is
    max - min of the last three per-level estimates and measures truncation
    stability.
    """

    delta: float
    levels: np.ndarray
    per_level: np.ndarray
    spread: float
    counts: np.ndarray
    n_max: int


def _chunked_logsumexp(values: np.ndarray, threads: int = 1) -> float:
    """log(sum(exp(values))) with a fixed chunked reduction order."""
    n = values.shape[0]
    if n <= _CHUNK or threads <= 1:
        if n <= _CHUNK:
            return float(logsumexp(values))
        chunks = [values[i : i + _CHUNK] for i in range(0, n, _CHUNK)]
        partial = np.array([logsumexp(c) for c in chunks])
        return float(logsumexp(partial))
    chunks = [values[i : i + _CHUNK] for i in range(0, n, _CHUNK)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
        partial = np.array(list(ex.map(logsumexp, chunks)))
    return float(logsumexp(partial))


def level_distances(group, n_max: int, basepoint: np.ndarray | None = None) -> list[np.ndarray]:
    """Orbit distances d(x, w.x) grouped by word length, n = 0 .. n_max.

    With the default basepoint the cached cancellation-free corner sums are
    used; for a custom basepoint x the distances are evaluated through the
    bilinear form.
    """
    if basepoint is None:
        return group.orbit_distances(n_max)
    x = np.asarray(basepoint, dtype=float)
    core.check_hyperbolic_point(x)
    out = []
    for n in range(n_max + 1):
        mats = group.level(n).mats
        imgs = np.einsum("nij,j->ni", mats, x)
        out.append(core.distance(x[None, :], imgs))
    return out


def log_shell_sums(dists: list[np.ndarray], s: float, threads: int = 1) -> np.ndarray:
    """log a_n(s) for each shell of distances, in the given level order."""
    return np.array([_chunked_logsumexp(-s * d, threads) for d in dists])


def shell_sums(
    group,
    s: float,
    n_max: int,
    basepoint: np.ndarray | None = None,
    threads: int = 1,
) -> PoincareTruncation:
    """Shell sums a_n(s), n = 0 .. n_max, of the truncated Poincare series."""
    if s < 0:
        raise ValueError(f"s must be >= 0, got {s}")
    dists = level_distances(group, n_max, basepoint)
    log_a = log_shell_sums(dists, s, threads)
    with np.errstate(over="ignore"):
        values = np.exp(log_a)
    diverged = bool(np.any(~np.isfinite(values)))
    return PoincareTruncation(
        s=float(s),
        levels=np.arange(n_max + 1),
        values=values,
        log_values=log_a,
        diverged=diverged,
    )


def delta_from_distances(
    dists: list[np.ndarray],
    tol: float = BISECTION_TOL,
    threads: int = 1,
) -> tuple[float, np.ndarray]:
    """Per-level roots delta_n of log a_n(s) = log a_{n-1}(s).

    ``dists[n]`` holds the level-n orbit distances (``dists[0]`` is the
    identity shell, ``[0.0]``).  Returns (delta_{n_max}, per-level array).
    Raises :class:`core.DegenerateConfigurationError` when a shell fails to
    outgrow its predecessor (count ratio <= 1), in which case the series
    converges for every s > 0 and delta = 0.
    """
    n_max = len(dists) - 1
    per_level = np.empty(n_max)
    for n in range(1, n_max + 1):
        d_prev, d_cur = dists[n - 1], dists[n]
        ratio0 = np.log(d_cur.shape[0] / d_prev.shape[0])
        if ratio0 <= 1e-12:
            raise core.DegenerateConfigurationError(
                f"degenerate shell growth at level {n}: "
                f"{d_cur.shape[0]} words after {d_prev.shape[0]}; the series "
                "converges for all s > 0 (elementary group, delta = 0)"
            )

        def f(s: float) -> float:
            return _chunked_logsumexp(-s * d_cur, threads) - _chunked_logsumexp(
                -s * d_prev, threads
            )

        lo, hi = 0.0, 1.0
        f_hi = f(hi)
        while f_hi > 0.0 and hi < _BRACKET_CAP:
            hi *= 2.0
            f_hi = f(hi)
        if f_hi > 0.0:
            raise core.GeometryError(
                f"bisection bracket failure at level {n}: shell ratio still "
                f"growing at s = {hi}"
            )
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if f(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        per_level[n - 1] = 0.5 * (lo + hi)
    return float(per_level[-1]), per_level


def estimate_delta(
    group,
    n_max: int = DEFAULT_N_MAX,
    tol: float = BISECTION_TOL,
    basepoint: np.ndarray | None = None,
    threads: int = 1,
) -> DeltaEstimate:
    """Estimate the critical exponent of a Schottky group.

    delta_n is the unique s at which the level-n shell sum equals the
    level-(n-1) shell sum; the estimate is delta_{n_max} and ``spread``
    (max - min over the last three levels) quantifies truncation error.
    """
    if n_max < 6:
        raise ValueError(f"n_max must be >= 6 for a stable estimate, got {n_max}")
    dists = level_distances(group, n_max, basepoint)
    counts = np.array([d.shape[0] for d in dists])
    delta, per_level = delta_from_distances(dists, tol, threads)
    d = group.d
    if not 0.0 < delta < d:
        raise core.DegenerateConfigurationError(
            f"estimated delta = {delta:.6g} outside (0, {d}); the group is "
            "elementary or the truncation is unusable"
        )
    tail = per_level[-3:]
    return DeltaEstimate(
        delta=delta,
        levels=np.arange(1, n_max + 1),
        per_level=per_level,
        spread=float(tail.max() - tail.min()),
        counts=counts,
        n_max=n_max,
    )
