"""Quadratic-form model of H^{d+1} and its isometry group.

Everything lives in R^{d+2} with the quadratic form

    Q(x) = 2 x_0 x_{d+1} - sum_{i=1..d} x_i^2,

of signature (1, d+1), with associated symmetric bilinear form

    B(x, y) = x_0 y_{d+1} + x_{d+1} y_0 - sum_{i=1..d} x_i y_i.

Hyperbolic space is the future sheet {Q(x) = 1, x_0 + x_{d+1} > 0} with
basepoint o = (1, 0, ..., 0, 1)/sqrt(2); the boundary at infinity is the set
of future null directions.  The isometry group is realized as SO(Q), and the
distinguished subgroups are the diagonal flow g_t = diag(e^t, I_d, e^{-t}),
the horospherical groups N+ (upper unipotent) and N- = (N+)^T, and the
rotations M = SO(d) embedded as diag(1, m, 1).

The boundary chart identifies x in R^d with the null direction
iota(x) = (||x||^2/2, x, 1); n+(y) acts on the chart by translation by y,
g_t by dilation by e^t, and embedded rotations linearly.  The unique null
direction missed by the chart is [e_0], the attracting endpoint of g_t.

Metric quantities: d(x, y) = arccosh B(x, y) on the future sheet, and the
Busemann cocycle beta_xi(x, y) = log(B(x, xi) / B(y, xi)), normalized to be
positive when y is closer to xi (it is the limit of d(x, z) - d(y, z) as
z -> xi radially).
"""

from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-9


class GeometryError(ValueError):
    """Base class for model-consistency failures."""


class ModelViolationError(GeometryError):
    """An input does not satisfy the model invariants (wrong sheet, not in SO(Q), ...)."""


class DegenerateConfigurationError(GeometryError):
    """A geometric configuration is degenerate (coincident endpoints, B <= 0, ...)."""


class ChartInfinityError(GeometryError):
    """A boundary point is projectively [e_0], the point at infinity of the chart."""


# ---------------------------------------------------------------------------
# The form and the distinguished subgroups
# ---------------------------------------------------------------------------

def gram_matrix(d):
    """Gram matrix J of B: corners J[0, d+1] = J[d+1, 0] = 1, middle block -I_d.

    J is an involution (J @ J = I), so g^{-1} = J g^T J on SO(Q).
    """
    J = np.zeros((d + 2, d + 2))
    J[0, d + 1] = 1.0
    J[d + 1, 0] = 1.0
    J[1:d + 1, 1:d + 1] = -np.eye(d)
    return J


def quadratic_form(x):
    """Q(x) = 2 x_0 x_{d+1} - sum of squared middle coordinates."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 3:
        raise ModelViolationError(f"vector length {x.shape[-1]} < 3; need d >= 1")
    return 2.0 * x[..., 0] * x[..., -1] - np.sum(x[..., 1:-1] ** 2, axis=-1)


def bilinear_form(x, y):
    """B(x, y), broadcasting over leading axes of either argument."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x[..., 0] * y[..., -1] + x[..., -1] * y[..., 0]
            - np.sum(x[..., 1:-1] * y[..., 1:-1], axis=-1))


def basepoint(d):
    """o = (1, 0, ..., 0, 1)/sqrt(2): the point on the g_t-axis with Q(o) = 1."""
    o = np.zeros(d + 2)
    o[0] = o[-1] = 1.0 / np.sqrt(2.0)
    return o


def geodesic_flow(t, d):
    """g_t = diag(e^t, I_d, e^{-t})."""
    return np.diag(np.concatenate(([np.exp(t)], np.ones(d), [np.exp(-t)])))


def unipotent_plus(x):
    """n+(x): first row (1, x, ||x||^2/2), middle block I_d with last column x^T.

    One-parameter abelian: n+(x) n+(y) = n+(x + y).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[0]
    g = np.eye(d + 2)
    g[0, 1:d + 1] = x
    g[0, d + 1] = 0.5 * np.dot(x, x)
    g[1:d + 1, d + 1] = x
    return g


def unipotent_minus(y):
    """n-(y) = n+(y)^T, the opposite horospherical subgroup."""
    return unipotent_plus(y).T


def rotation_embed(m, tol=DEFAULT_TOL):
    """Embed m in SO(d) as diag(1, m, 1); commutes with every g_t."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    d = m.shape[0]
    if m.shape != (d, d):
        raise ModelViolationError(f"rotation block must be square, got {m.shape}")
    if np.abs(m.T @ m - np.eye(d)).max() > 1e3 * tol:
        raise ModelViolationError("rotation block is not orthogonal within tolerance")
    g = np.eye(d + 2)
    g[1:d + 1, 1:d + 1] = m
    return g


def group_inverse(g):
    """g^{-1} = J g^T J for g in SO(Q) (exact; no linear solve)."""
    g = np.asarray(g)
    d = g.shape[-1] - 2
    J = gram_matrix(d)
    return J @ np.swapaxes(g, -1, -2) @ J


def random_rotation(d, rng):
    """Haar-ish random element of SO(d) via QR with sign fix."""
    if d == 1:
        return np.eye(1)
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------------------
# Membership checks and drift correction
# ---------------------------------------------------------------------------

def so_residual(g):
    """max-norm defect ||g^T J g - J||_max (absolute)."""
    g = np.asarray(g, dtype=float)
    d = g.shape[-1] - 2
    J = gram_matrix(d)
    return np.abs(np.swapaxes(g, -1, -2) @ J @ g - J).max(axis=(-1, -2))


def so_relative_residual(g):
    """Scale-aware defect: ||g^T J g - J||_max / (1 + ||g||_max^2).

    For matrices with huge entries the absolute defect of even an exactly
    J-orthogonal matrix floats at ~||g||^2 * eps when evaluated in double
    precision, so drift decisions must be made relative to that scale.
    """
    g = np.asarray(g, dtype=float)
    scale = 1.0 + np.abs(g).max(axis=(-1, -2)) ** 2
    return so_residual(g) / scale


def in_so_q(g, tol=DEFAULT_TOL):
    """Whether g preserves Q (scale-relative) and has det close to +1."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 3:
        return False
    if so_relative_residual(g) > tol:
        return False
    sign, logdet = np.linalg.slogdet(g)
    return sign > 0 and abs(logdet) < np.log1p(1e3 * tol) + 1e-6


def project_so(g, tol=DEFAULT_TOL, max_iter=8):
    """Reproject a drifted matrix to SO(Q) (Newton iteration for the J-polar factor).

    Iterates g <- (g + J g^{-T} J)/2, which converges quadratically to the
    J-orthogonal factor of the generalized polar decomposition for g near the
    group.  Returns g unchanged when the scale-relative defect is already
    below tol/10.
    """
    g = np.asarray(g, dtype=float)
    d = g.shape[0] - 2
    J = gram_matrix(d)
    for _ in range(max_iter):
        if so_relative_residual(g) <= 0.1 * tol:
            break
        g = 0.5 * (g + J @ np.linalg.inv(g).T @ J)
    return g


def exact_integer_residual(g):
    """||g^T J g - J||_max computed in exact integer arithmetic.

    Requires every entry of g to be an exactly-integral float (or an integer
    array).  Useful because the float64 evaluation of the defect of a large
    exactly-J-orthogonal integer matrix is dominated by rounding noise
    ~ ||g||^2 * eps; arbitrary-precision integers sidestep that entirely.
    """
    g = np.asarray(g)
    gi = np.rint(np.asarray(g, dtype=float)).astype(object)
    if np.abs(np.asarray(g, dtype=float) - np.asarray(gi, dtype=float)).max() != 0.0:
        raise ModelViolationError("matrix entries are not exactly integral")
    gi = np.vectorize(int, otypes=[object])(gi)
    d = g.shape[0] - 2
    J = np.vectorize(int, otypes=[object])(np.rint(gram_matrix(d)).astype(object))
    resid = gi.T @ J @ gi - J
    return max(abs(int(v)) for v in resid.ravel())


# ---------------------------------------------------------------------------
# Points, boundary, chart
# ---------------------------------------------------------------------------

def check_hyperbolic_point(x, tol=1e-6):
    """Assert Q(x) = 1 and x on the future sheet; returns x as float array."""
    x = np.asarray(x, dtype=float)
    q = quadratic_form(x)
    if abs(q - 1.0) > tol * max(1.0, float(np.abs(x).max()) ** 2):
        raise ModelViolationError(f"Q(x) = {q}, not 1 within tolerance")
    if x[0] + x[-1] <= 0:
        raise ModelViolationError("point is on the past sheet")
    return x


def chart_to_boundary(x):
    """iota(x) = (||x||^2/2, x, 1): the null direction with chart coordinate x.

    Bijective onto null directions other than [e_0]; satisfies the
    equivariance iota(x + y) ~ n+(y) iota(x).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sq = 0.5 * np.sum(x ** 2, axis=-1, keepdims=True)
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([sq, x, ones], axis=-1)


def boundary_from_chart(xi, tol=DEFAULT_TOL):
    """Chart coordinate of a null direction: normalize the last coordinate to 1.

    Raises ChartInfinityError for directions projectively equal to [e_0].
    """
    xi = np.asarray(xi, dtype=float)
    scale = np.abs(xi).max()
    if scale == 0.0:
        raise DegenerateConfigurationError("zero vector is not a boundary point")
    if abs(xi[-1]) <= tol * scale:
        raise ChartInfinityError("boundary point at infinity of the chart ([e_0])")
    return xi[1:-1] / xi[-1]


def chart_action(g, pts):
    """Projective action of g on chart points, vectorized.

    pts has shape (..., d); returns (images, finite) where finite marks points
    whose image stays inside the chart (last homogeneous coordinate away from
    zero at the working scale).  Non-finite rows are filled with nan.
    """
    g = np.asarray(g, dtype=float)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    z = chart_to_boundary(pts) @ g.T
    scale = np.abs(z).max(axis=-1)
    last = z[..., -1]
    finite = np.abs(last) > 1e-12 * np.maximum(scale, 1.0)
    out = np.full(pts.shape, np.nan)
    np.divide(z[..., 1:-1], last[..., None], out=out, where=finite[..., None])
    return out, finite


def normalize_boundary(xi):
    """Canonical representative: unit Euclidean norm, future-pointing.

    Null vectors are scaled to unit norm; the overall sign is fixed by making
    the first-plus-last coordinate positive (every nonzero null vector has
    x_0 + x_{d+1} != 0, and the future cone has it positive).
    """
    xi = np.asarray(xi, dtype=float)
    n = np.linalg.norm(xi, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise DegenerateConfigurationError("zero vector is not a boundary point")
    xi = xi / n
    s = np.sign(xi[..., 0] + xi[..., -1])
    return xi * np.where(s == 0.0, 1.0, s)[..., None]


def boundary_equal(a, b, tol=1e-8):
    """Projective equality of null directions via canonical representatives."""
    return bool(np.abs(normalize_boundary(a) - normalize_boundary(b)).max() <= tol)


# ---------------------------------------------------------------------------
# Metric quantities
# ---------------------------------------------------------------------------

def distance(x, y, tol=DEFAULT_TOL):
    """d(x, y) = arccosh B(x, y); symmetric, isometry-invariant.

    Broadcasts over leading axes.  B < 1 - tol (impossible for points on the
    future sheet) raises ModelViolationError.
    """
    b = bilinear_form(x, y)
    if np.any(b < 1.0 - tol):
        raise ModelViolationError(f"B(x, y) = {np.min(b)} < 1: arguments not on the future sheet")
    return np.arccosh(np.maximum(b, 1.0))


def busemann(xi, x, y):
    """Busemann cocycle beta_xi(x, y) = log(B(x, xi) / B(y, xi)).

    Scale-free in the representative of xi; positive when y is closer to xi;
    satisfies the cocycle identity beta(x,y) + beta(y,z) = beta(x,z) and the
    isometry equivariance beta_{g.xi}(g.x, g.y) = beta_xi(x, y).  Broadcasts
    over leading axes.
    """
    bx = bilinear_form(x, xi)
    by = bilinear_form(y, xi)
    if np.any(bx <= 0.0) or np.any(by <= 0.0):
        raise DegenerateConfigurationError(
            "B(point, xi) <= 0: xi not a future null direction for these points")
    return np.log(bx) - np.log(by)
