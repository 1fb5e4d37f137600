"""Nonuniform Fourier transform of atomic measures and decay statistics.

Implements mu-hat(xi) = (1/mass) sum_j w_j e^{2 pi i <xi, x_j>} evaluated by
direct summation (desk scale; no NUFFT), with a fixed atom-chunk order and
Neumaier-compensated combination so results are bit-identical for any thread
count.  On top of the transform sit the three experiment statistics:

* ``decay_scan`` -- per-shell maxima of |mu-hat| over sampled directions and
  a least-squares decay exponent kappa fitted on the upper half of the
  shells (polynomial Fourier decay |mu-hat| ~ ||xi||^{-kappa});
* ``l2_average`` -- Riemann estimate of the L2 frequency average
  int_{||xi|| <= R} |mu-hat|^2, whose doubling ratio tracks R^{d - alpha}
  (L2-flattening / Frostman scaling);
* ``exceptional_set_measure`` -- Lebesgue measure of the super-level set
  {||xi|| <= T : |mu-hat(xi)| > T^{-delta}} (the flattening exceptional set).

Atomic discretizations only resolve frequencies below ~1/(atom spacing);
every scan computes that cap from the weighted median nearest-neighbour
distance and refuses to report samples beyond it.
"""

from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import core
from .measure import AtomicMeasure

#: Values of |mu-hat| below this are double-precision cancellation noise.
NUMERICAL_FLOOR = 1e-14

#: Resolution cap: frequencies above 1/(4 eta) for atom spacing eta are
#: artifacts of the discretization.
_CAP_FACTOR = 0.25

_ATOM_CHUNK = 1 << 16
_FREQ_CHUNK = 1 << 10


def _thread_count(threads) -> int:
    if threads is None:
        threads = int(os.environ.get("LIMSET_THREADS", "1") or 1)
    return max(1, int(threads))


def _atom_sum(pts: np.ndarray, w: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """sum_j w_j e^{2 pi i <xi, x_j>} with compensated fixed-order chunking."""
    total = np.zeros(freqs.shape[0], dtype=complex)
    comp = np.zeros(freqs.shape[0], dtype=complex)
    for i in range(0, pts.shape[0], _ATOM_CHUNK):
        block = pts[i : i + _ATOM_CHUNK]
        part = np.exp(2j * np.pi * (freqs @ block.T)) @ w[i : i + _ATOM_CHUNK]
        t = total + part
        comp += np.where(np.abs(total) >= np.abs(part),
                         (total - t) + part, (part - t) + total)
        total = t
    return total + comp


def _nudft(pts: np.ndarray, w: np.ndarray, freqs: np.ndarray, threads: int) -> np.ndarray:
    blocks = [slice(i, min(i + _FREQ_CHUNK, freqs.shape[0]))
              for i in range(0, freqs.shape[0], _FREQ_CHUNK)]
    if threads > 1 and len(blocks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda sl: _atom_sum(pts, w, freqs[sl]), blocks))
    else:
        parts = [_atom_sum(pts, w, freqs[sl]) for sl in blocks]
    num = np.concatenate(parts)
    # normalize by the total weight accumulated along the identical chunked
    # path, so the zero frequency evaluates to exactly 1
    den = _atom_sum(pts, w, np.zeros((1, pts.shape[1]))).real[0]
    return num / den


def fourier_transform(mu: AtomicMeasure, xi, threads=None):
    """mu-hat(xi) = (1/mass) sum_j w_j e^{2 pi i <xi, x_j>}.

    ``xi`` is a single frequency vector (length d) or a batch (..., d);
    returns a complex scalar or array accordingly.  mu-hat(0) = 1 exactly
    and mu-hat(-xi) = conj(mu-hat(xi)).
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    freqs = np.atleast_2d(xi)
    if freqs.shape[-1] != mu.d:
        raise ValueError(f"frequency dim {freqs.shape[-1]} != measure dim {mu.d}")
    shape = freqs.shape[:-1]
    vals = _nudft(mu.points, mu.weights, freqs.reshape(-1, mu.d),
                  _thread_count(threads))
    return complex(vals[0]) if single else vals.reshape(shape)


def nearest_neighbor_distances(points: np.ndarray) -> np.ndarray:
    """Distance from each atom to its nearest distinct-index neighbour."""
    if points.shape[0] < 2:
        raise ValueError("need at least two atoms for neighbour distances")
    if points.shape[1] == 1:
        order = np.argsort(points[:, 0])
        xs = points[order, 0]
        gaps = np.diff(xs)
        nn_sorted = np.minimum(np.concatenate([[gaps[0]], gaps]),
                               np.concatenate([gaps, [gaps[-1]]]))
        nn = np.empty_like(nn_sorted)
        nn[order] = nn_sorted
        return nn
    return cKDTree(points).query(points, k=2)[0][:, 1]


def atom_spacing(mu: AtomicMeasure) -> float:
    """Resolution scale of the discretization: the weighted median of the
    nearest-neighbour atom distances (inf for a single atom)."""
    if mu.n < 2:
        return np.inf
    nn = nearest_neighbor_distances(mu.points)
    srt = np.argsort(nn)
    cum = np.cumsum(mu.weights[srt])
    eta = float(nn[srt][np.searchsorted(cum, 0.5 * cum[-1])])
    if eta <= 0.0:
        raise core.DegenerateConfigurationError("coincident atoms: spacing 0")
    return eta


def resolution_cap(mu: AtomicMeasure) -> float:
    """Largest honestly resolvable frequency: 1/(4 eta) for atom spacing eta."""
    eta = atom_spacing(mu)
    return _CAP_FACTOR / eta if np.isfinite(eta) else np.inf


@dataclass(frozen=True)
class FrequencySpec:
    """Frequency sampling plan: a geometric shell ladder with directions.

    ``mode`` is "shell" (per-shell direction fans with log-spaced radial
    samples), "ray" (nominal radii along the given directions only), or
    "grid" (uniform grid of step ``grid_step``, used by the L2/exceptional
    statistics).
    """

    mode: str = "shell"
    r0: float = 4.0
    ratio: float = 2.0
    count: int = 8
    directions: np.ndarray | None = None
    samples_per_shell: int = 16
    grid_step: float = 0.25

    def __post_init__(self):
        if self.mode not in ("shell", "ray", "grid"):
            raise ValueError(f"unknown frequency mode {self.mode!r}")
        if self.r0 <= 0.0 or self.ratio <= 1.0 or self.count < 1:
            raise ValueError("shell ladder must be strictly increasing: "
                             f"r0={self.r0}, ratio={self.ratio}, count={self.count}")
        if self.grid_step <= 0.0:
            raise ValueError(f"grid_step must be positive, got {self.grid_step}")
        if self.directions is not None:
            dirs = np.atleast_2d(np.asarray(self.directions, dtype=float))
            norms = np.linalg.norm(dirs, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise ValueError("directions must be unit vectors")
            object.__setattr__(self, "directions", dirs)

    @property
    def radii(self) -> np.ndarray:
        return self.r0 * self.ratio ** np.arange(self.count)


def default_directions(d: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-uniform directions: {+1,-1} for d=1, an equal-angle
    fan for d=2, seeded normalized Gaussians for d >= 3."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True)
class DecayReport:
    """Shell maxima of |mu-hat| and the fitted polynomial decay exponent."""

    shell_radii: np.ndarray
    shell_max: np.ndarray
    sample_radii: np.ndarray
    sample_dir_index: np.ndarray
    sample_values: np.ndarray
    kappa: float
    fit_residual: float
    resolution_cap: float
    floored: bool
    truncated_shells: int


def _fit_kappa(radii: np.ndarray, maxima: np.ndarray) -> tuple[float, float, bool]:
    """-slope of log(shell max) on log R over the upper half of the shells."""
    if np.all(maxima < NUMERICAL_FLOOR):
        return float("nan"), float("nan"), True
    k = radii.shape[0]
    upper = slice(k - k // 2 - (k % 2), k) if k > 1 else slice(0, k)
    x = np.log(radii[upper])
    y = np.log(np.maximum(maxima[upper], NUMERICAL_FLOOR))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - slope * x - intercept) ** 2)))
    return float(-slope), resid, False


def decay_scan(mu: AtomicMeasure, spec: FrequencySpec, seed: int = 0,
               threads=None) -> DecayReport:
    """Per-shell maxima of |mu-hat| and the decay exponent kappa.

    Shells beyond the measure's resolution cap are dropped (and counted);
    within each kept shell the modulus is maximized over the direction fan
    and log-spaced radial samples.  kappa = -slope of log(max) vs log(R)
    over the upper half of the kept shells (a sup-bound fit).
    """
    if spec.mode not in ("shell", "ray"):
        raise ValueError(f"decay_scan needs a shell or ray spec, got {spec.mode!r}")
    if spec.count < 8:
        raise ValueError(f"need at least 8 shells for a decay fit, got {spec.count}")
    dirs = spec.directions
    if dirs is None:
        dirs = default_directions(mu.d, seed=seed)
    if dirs.shape[1] != mu.d:
        raise ValueError(f"direction dim {dirs.shape[1]} != measure dim {mu.d}")
    cap = resolution_cap(mu)
    radii = spec.radii
    kept = radii[radii <= cap]
    truncated = int(radii.shape[0] - kept.shape[0])
    if kept.shape[0] == 0:
        raise core.DegenerateConfigurationError(
            f"all shells lie above the resolution cap {cap:.3g}")

    if spec.mode == "ray":
        r_samples = kept[:, None]
    else:
        frac = (np.arange(spec.samples_per_shell) + 0.5) / spec.samples_per_shell
        r_samples = kept[:, None] * spec.ratio ** frac[None, :]
        r_samples = np.minimum(r_samples, cap)
    n_shell, n_rad = r_samples.shape
    n_dir = dirs.shape[0]
    # fixed sample order: shell-major, then direction, then radial position
    freqs = (r_samples[:, None, :, None] * dirs[None, :, None, :]).reshape(-1, mu.d)
    sample_radii = np.broadcast_to(r_samples[:, None, :], (n_shell, n_dir, n_rad)).reshape(-1)
    dir_index = np.broadcast_to(np.arange(n_dir)[None, :, None],
                                (n_shell, n_dir, n_rad)).reshape(-1).copy()
    vals = _nudft(mu.points, mu.weights, freqs, _thread_count(threads))
    mods = np.abs(vals).reshape(n_shell, n_dir * n_rad)
    shell_max = mods.max(axis=1)
    kappa, resid, floored = _fit_kappa(kept, shell_max)
    return DecayReport(
        shell_radii=kept,
        shell_max=shell_max,
        sample_radii=sample_radii,
        sample_dir_index=dir_index,
        sample_values=vals,
        kappa=kappa,
        fit_residual=resid,
        resolution_cap=cap,
        floored=floored,
        truncated_shells=truncated,
    )


def _grid_values_1d(pts: np.ndarray, w: np.ndarray, step: float, k_max: int,
                    threads: int) -> np.ndarray:
    """mu-hat(k*step) for k = 0..k_max by a running-phase-power recursion."""

    def chunk_values(sl: slice) -> np.ndarray:
        x = pts[sl, 0]
        z = np.exp(2j * np.pi * step * x)
        p = w[sl].astype(complex)
        out = np.empty(k_max + 1, dtype=complex)
        out[0] = p.sum()
        for k in range(1, k_max + 1):
            p *= z
            out[k] = p.sum()
        return out

    blocks = [slice(i, min(i + _ATOM_CHUNK, pts.shape[0]))
              for i in range(0, pts.shape[0], _ATOM_CHUNK)]
    if threads > 1 and len(blocks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(chunk_values, blocks))
    else:
        parts = [chunk_values(sl) for sl in blocks]
    total = parts[0].copy()
    for part in parts[1:]:
        total += part
    return total / total[0].real


@dataclass(frozen=True)
class L2Average:
    """Riemann estimate of int_{||xi|| <= R} |mu-hat|^2 d xi."""

    value: float
    radius: float
    grid_step: float
    coarse: bool


def _grid_ball(d: int, radius: float, step: float) -> np.ndarray:
    ax = np.arange(-np.floor(radius / step), np.floor(radius / step) + 1) * step
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts[np.linalg.norm(pts, axis=1) <= radius]


def l2_average(mu: AtomicMeasure, radius: float, grid_step: float = 0.25,
               threads=None) -> L2Average:
    """Grid Riemann sum of |mu-hat(xi)|^2 over the ball ||xi|| <= radius.

    The doubling ratio value(2R)/value(R) tracks R^{d-alpha} for a measure
    of local dimension alpha.  ``coarse`` flags grids whose step exceeds the
    reciprocal support span (|mu-hat|'s oscillation scale under-resolved).
    """
    if grid_step > 0.25:
        raise ValueError(f"grid_step must be <= 1/4, got {grid_step}")
    if radius <= 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    span = float((mu.points.max(axis=0) - mu.points.min(axis=0)).max())
    coarse = grid_step * span > 1.0
    nthreads = _thread_count(threads)
    if mu.d == 1:
        k_max = int(np.floor(radius / grid_step))
        vals = _grid_values_1d(mu.points, mu.weights, grid_step, k_max, nthreads)
        mods2 = np.abs(vals) ** 2
        total = grid_step * (mods2[0] + 2.0 * mods2[1:].sum())
    else:
        freqs = _grid_ball(mu.d, radius, grid_step)
        vals = _nudft(mu.points, mu.weights, freqs, nthreads)
        total = grid_step ** mu.d * float(np.sum(np.abs(vals) ** 2))
    return L2Average(value=float(total), radius=float(radius),
                     grid_step=float(grid_step), coarse=coarse)


@dataclass(frozen=True)
class ExceptionalSet:
    """Lebesgue estimate of {||xi|| <= T : |mu-hat(xi)| > T^{-delta_exp}}."""

    lebesgue: float
    fraction: float
    threshold: float
    t_value: float
    delta_exp: float


def exceptional_set_measure(mu: AtomicMeasure, t_value: float, delta_exp: float,
                            grid_step: float = 0.25, threads=None) -> ExceptionalSet:
    """Grid-cell estimate of the flattening exceptional set at level T^{-delta}."""
    if not 0.0 < delta_exp < 1.0:
        raise ValueError(f"delta_exp must be in (0, 1), got {delta_exp}")
    if t_value < 4.0:
        raise ValueError(f"T must be >= 4, got {t_value}")
    if grid_step > 0.25:
        raise ValueError(f"grid_step must be <= 1/4, got {grid_step}")
    threshold = t_value ** (-delta_exp)
    nthreads = _thread_count(threads)
    if mu.d == 1:
        k_max = int(np.floor(t_value / grid_step))
        mods = np.abs(_grid_values_1d(mu.points, mu.weights, grid_step, k_max,
                                      nthreads))
        count = int(mods[0] > threshold) + 2 * int(np.sum(mods[1:] > threshold))
        lebesgue = count * grid_step
        volume = 2.0 * t_value
    else:
        freqs = _grid_ball(mu.d, t_value, grid_step)
        mods = np.abs(_nudft(mu.points, mu.weights, freqs, nthreads))
        lebesgue = float(np.sum(mods > threshold)) * grid_step ** mu.d
        volume = (np.pi ** (mu.d / 2.0) / math.gamma(mu.d / 2.0 + 1.0)
                  * t_value ** mu.d)
    return ExceptionalSet(
        lebesgue=float(lebesgue),
        fraction=float(lebesgue / volume),
        threshold=float(threshold),
        t_value=float(t_value),
        delta_exp=float(delta_exp),
    )


def exceptional_sweep(mu: AtomicMeasure, t_values=(16.0, 64.0, 256.0),
                      delta_grid=None, grid_step: float = 0.25,
                      threads=None):
    """Exceptional-set fractions over a (delta_exp, T) grid from one pass.

    Returns (delta_grid, t_values, fractions, lebesgues) with ``fractions``
    of shape (len(delta_grid), len(t_values)); only d = 1 measures, sharing
    a single uniform frequency grid up to max(T).
    """
    if mu.d != 1:
        raise ValueError("the sweep shares a 1d uniform grid; d must be 1")
    if delta_grid is None:
        delta_grid = np.arange(0.05, 0.46, 0.05)
    t_values = np.asarray(sorted(t_values), dtype=float)
    delta_grid = np.asarray(delta_grid, dtype=float)
    k_max = int(np.floor(t_values[-1] / grid_step))
    mods = np.abs(_grid_values_1d(mu.points, mu.weights, grid_step, k_max,
                                  _thread_count(threads)))
    fractions = np.empty((delta_grid.shape[0], t_values.shape[0]))
    lebesgues = np.empty_like(fractions)
    for j, t in enumerate(t_values):
        sub = mods[: int(np.floor(t / grid_step)) + 1]
        for i, dexp in enumerate(delta_grid):
            thr = t ** (-dexp)
            count = int(sub[0] > thr) + 2 * int(np.sum(sub[1:] > thr))
            lebesgues[i, j] = count * grid_step
            fractions[i, j] = lebesgues[i, j] / (2.0 * t)
    return delta_grid, t_values, fractions, lebesgues


def uniform_segment_measure(n: int) -> AtomicMeasure:
    """n-atom midpoint discretization of the uniform measure on [0, 1].

    Its transform has the closed form e^{pi i xi} sin(pi xi)/(n sin(pi xi/n)),
    i.e. modulus |sinc(xi)/sinc(xi/n)|.
    """
    pts = ((np.arange(n) + 0.5) / n)[:, None]
    return AtomicMeasure(points=pts, weights=np.full(n, 1.0 / n))


def segment_modulus_oracle(xi, n: int) -> np.ndarray:
    """|mu-hat| of the n-atom segment discretization, in closed form."""
    xi = np.asarray(xi, dtype=float)
    return np.abs(np.sinc(xi) / np.sinc(xi / n))
