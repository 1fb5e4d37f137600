"""Schottky groups: construction, ping-pong certification, words, orbits, limit sets.

A Schottky group here is generated by loxodromic elements gamma_1..gamma_k
together with ping-pong ball pairs in the boundary chart R^d: gamma_i maps the
complement of ball_minus(i) into ball_plus(i) (hence gamma_i^{-1} maps the
complement of ball_plus(i) into ball_minus(i)).  When all 2k balls are
pairwise disjoint and the mapping condition holds, the group is free,
discrete, and convex cocompact, and its limit set is the nested intersection
of ball images.

The word engine enumerates reduced words in deterministic lexicographic
order and caches per-level products.  For integer generator matrices the
products are carried in an exact int64 lane (with an overflow guard) and the
float64 views remain exact while all entries stay below 2^53; this makes
membership in SO(Q) verifiable exactly in integer arithmetic even when the
double-precision residual of the defining identity would be swamped by
rounding at scale ~ ||gamma||^2 eps.  Generic float groups get scale-relative
drift monitoring and reprojection instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from limset import core

# int64 products are abandoned beyond this bound to keep a safety factor
# against wraparound; float64 views are flagged exact up to 2^53.
_INT64_GUARD = 2 ** 62
_FLOAT_EXACT = float(2 ** 53)


class ConfigurationError(ValueError):
    """Invalid Schottky data: overlapping balls, dimension mismatch, ..."""


# ---------------------------------------------------------------------------
# Loxodromic elements
# ---------------------------------------------------------------------------

def translation_length(g, tol=core.DEFAULT_TOL):
    """log of the spectral radius; errors unless g is loxodromic.

    A loxodromic element is conjugate to g_l * m and has simple real
    eigenvalues e^l > 1 and e^{-l} < 1 outside the unit circle, the rest on it.
    """
    ev = np.linalg.eigvals(np.asarray(g, dtype=float))
    radius = float(np.abs(ev).max())
    if radius <= 1.0 + tol:
        raise core.DegenerateConfigurationError(
            f"spectral radius {radius} <= 1 + tol: element is not loxodromic")
    lead = ev[int(np.argmax(np.abs(ev)))]
    if abs(lead.imag) > 1e-6 * radius or lead.real <= 0:
        raise core.ModelViolationError("leading eigenvalue is not real positive")
    return float(np.log(radius))


def fixed_points(g, tol=core.DEFAULT_TOL):
    """(attracting, repelling) null eigenvectors of a loxodromic g, normalized."""
    g = np.asarray(g, dtype=float)
    translation_length(g, tol=tol)  # loxodromy check
    ev, vecs = np.linalg.eig(g)
    order = np.argsort(np.abs(ev))
    rep = np.real(vecs[:, order[0]])
    att = np.real(vecs[:, order[-1]])
    for v in (att, rep):
        if abs(core.quadratic_form(v)) > 1e-6 * float(v @ v):
            raise core.ModelViolationError("fixed eigenvector is not null")
    return core.normalize_boundary(att), core.normalize_boundary(rep)


def build_loxodromic(xi_att, xi_rep, length, m=None, tol=core.DEFAULT_TOL):
    """Loxodromic element with axis (xi_att, xi_rep), translation length, rotation m.

    Builds h in SO(Q) whose columns are (a, u_1, ..., u_d, r) with
    B(a, r) = 1 and B(u_i, u_j) = -delta_ij on the B-orthogonal complement of
    the axis, then returns h (g_length m) h^{-1} with h^{-1} = J h^T J.  The
    attracting fixed point is xi_att.
    """
    xi_att = np.asarray(xi_att, dtype=float)
    xi_rep = np.asarray(xi_rep, dtype=float)
    n = xi_att.shape[0]
    d = n - 2
    if length <= 0:
        raise ValueError("translation length must be positive")
    a = core.normalize_boundary(xi_att)
    r = core.normalize_boundary(xi_rep)
    pairing = core.bilinear_form(a, r)
    if pairing <= tol:
        raise core.DegenerateConfigurationError(
            "axis endpoints coincide (B(att, rep) ~ 0)")
    r = r / pairing
    # B-orthogonal complement of span(a, r); -B is positive definite there
    basis = []
    for j in range(n):
        x = np.zeros(n)
        x[j] = 1.0
        x = x - core.bilinear_form(x, r) * a - core.bilinear_form(x, a) * r
        for u in basis:
            x = x + core.bilinear_form(x, u) * u  # -B-projection: x -= (-B(x,u)) u
        nrm2 = -core.bilinear_form(x, x)
        if nrm2 > 1e-8:
            basis.append(x / np.sqrt(nrm2))
        if len(basis) == d:
            break
    if len(basis) < d:
        raise core.DegenerateConfigurationError("could not complete axis to a frame")
    h = np.column_stack([a] + basis + [r])
    if np.linalg.det(h) < 0:
        h[:, d] = -h[:, d]
    core_part = core.geodesic_flow(length, d)
    if m is not None:
        core_part = core_part @ core.rotation_embed(m)
    return h @ core_part @ core.group_inverse(h)


# ---------------------------------------------------------------------------
# Balls and generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    """Euclidean ball in the boundary chart."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center",
                           np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ConfigurationError(f"ball radius {self.radius} must be positive")

    def margin(self, pts):
        """radius - distance to center: positive inside, vectorized."""
        pts = np.asarray(pts, dtype=float)
        return self.radius - np.linalg.norm(pts - self.center, axis=-1)

    def gap_to(self, other):
        """Distance between the two closed balls (negative if they overlap)."""
        return (float(np.linalg.norm(self.center - other.center))
                - self.radius - other.radius)


@dataclass(frozen=True)
class SchottkyGenerator:
    """A loxodromic generator with its ping-pong ball pair in the chart.

    The element maps the complement of ball_minus into ball_plus; its inverse
    maps the complement of ball_plus into ball_minus.
    """

    elem: np.ndarray
    ball_plus: Ball
    ball_minus: Ball

    def __post_init__(self):
        elem = np.asarray(self.elem, dtype=float)
        object.__setattr__(self, "elem", elem)
        d = elem.shape[0] - 2
        if elem.shape != (d + 2, d + 2) or d < 1:
            raise ConfigurationError(f"generator matrix has shape {elem.shape}")
        if self.ball_plus.center.shape[0] != d or self.ball_minus.center.shape[0] != d:
            raise ConfigurationError("ball dimension does not match the matrix")
        if core.so_relative_residual(elem) > 1e-6:
            raise core.ModelViolationError("generator does not preserve the form Q")
        translation_length(elem)  # raises unless loxodromic
        if self.ball_plus.gap_to(self.ball_minus) <= 0:
            raise ConfigurationError("ball_plus and ball_minus of a generator overlap")

    @property
    def length(self):
        return translation_length(self.elem)


@dataclass
class PingPongReport:
    """Outcome of the ping-pong verification."""

    ok: bool
    margins: dict
    worst_margin: float
    min_ball_gap: float
    witnesses: list = field(default_factory=list)
    zariski: dict = field(default_factory=dict)

    def __str__(self):
        status = "PASS" if self.ok else "FAIL"
        lines = [f"ping-pong {status}: worst margin {self.worst_margin:.6g}, "
                 f"min ball gap {self.min_ball_gap:.6g}"]
        for name, mg in self.margins.items():
            lines.append(f"  {name}: margin {mg:.6g}")
        for w in self.witnesses:
            lines.append(f"  witness: {w}")
        return "\n".join(lines)


def _letter_names(k):
    names = []
    for i in range(k):
        names.append(f"g{i + 1}")
        names.append(f"g{i + 1}^-1")
    return names


@dataclass
class _Level:
    """Cached data for all reduced words of one length."""

    words: np.ndarray        # (N, L) int8 letter ids
    mats: np.ndarray         # (N, d+2, d+2) float64
    dists: np.ndarray        # (N,) d(o, w o)
    imats: np.ndarray | None  # int64 lane, None once the guard tripped
    max_entry: float          # max |entry| over the level


class SchottkyGroup:
    """Schottky group with word/orbit caches and a ping-pong certificate.

    Letters are internally 0..2k-1 with even ids the generators and odd ids
    their inverses (ids 2i, 2i+1 are inverse to each other); externally words
    use signed indices +-(i+1).
    """

    def __init__(self, gens, tol=core.DEFAULT_TOL, name="schottky"):
        gens = list(gens)
        if len(gens) < 1:
            raise ConfigurationError("need at least one generator")
        self.gens = gens
        self.k = len(gens)
        self.d = gens[0].elem.shape[0] - 2
        self.tol = float(tol)
        self.name = name
        for g in gens:
            if g.elem.shape[0] - 2 != self.d:
                raise ConfigurationError("generators have inconsistent dimensions")
        mats = []
        for g in gens:
            mats.append(g.elem)
            mats.append(core.group_inverse(g.elem))
        self.letter_mats = np.stack(mats)
        self.letter_balls = []
        for g in gens:
            self.letter_balls.append((g.ball_minus, g.ball_plus))   # for gamma
            self.letter_balls.append((g.ball_plus, g.ball_minus))   # for gamma^{-1}
        self.letter_names = _letter_names(self.k)
        ints = np.rint(self.letter_mats)
        self._integral = bool(np.abs(self.letter_mats - ints).max() == 0.0)
        self._letter_imats = ints.astype(np.int64) if self._integral else None
        self.validated = False
        self.report = None
        self._levels = [self._level_zero()]

    # -- words ---------------------------------------------------------------

    @staticmethod
    def _inv(letter_id):
        return letter_id ^ 1

    def signed(self, letter_id):
        """External signed index of a letter id: 2i -> i+1, 2i+1 -> -(i+1)."""
        return (letter_id // 2 + 1) * (1 if letter_id % 2 == 0 else -1)

    def letter_id(self, signed_index):
        if signed_index == 0 or abs(signed_index) > self.k:
            raise ConfigurationError(f"letter {signed_index} out of range")
        return 2 * (abs(signed_index) - 1) + (0 if signed_index > 0 else 1)

    def word_count(self, n):
        """1 + sum_{j<=n} 2k (2k-1)^{j-1} reduced words of length <= n."""
        total, level = 1, 2 * self.k
        for _ in range(n):
            total += level
            level *= 2 * self.k - 1
        return total

    def enumerate_words(self, n):
        """All reduced words of length <= n as tuples of signed indices,
        lexicographic in letter ids within each length."""
        yield ()
        frontier = [()]
        for _ in range(n):
            nxt = []
            for w in frontier:
                for b in range(2 * self.k):
                    if w and self._inv(w[-1]) == b:
                        continue
                    nxt.append(w + (b,))
            frontier = nxt
            for w in frontier:
                yield tuple(self.signed(b) for b in w)

    def word_to_element(self, word):
        """Product of generator matrices for a reduced word of signed indices."""
        g = np.eye(self.d + 2)
        prev = None
        for s in word:
            b = self.letter_id(int(s))
            if prev is not None and self._inv(prev) == b:
                raise ConfigurationError(f"word {tuple(word)} is not reduced")
            g = g @ self.letter_mats[b]
            prev = b
        if core.so_relative_residual(g) > 0.1 * self.tol:
            g = core.project_so(g, tol=self.tol)
        return g

    # -- level cache ----------------------------------------------------------

    def _level_zero(self):
        eye = np.eye(self.d + 2)
        ieye = np.rint(eye).astype(np.int64)[None] if self._integral else None
        return _Level(words=np.zeros((1, 0), dtype=np.int8),
                      mats=eye[None], dists=np.zeros(1),
                      imats=ieye, max_entry=1.0)

    def _extend_levels(self, n):
        while len(self._levels) <= n:
            self._levels.append(self._next_level(self._levels[-1]))

    def _next_level(self, parent: _Level):
        k2 = 2 * self.k
        npar, plen = parent.words.shape
        per = k2 if plen == 0 else k2 - 1
        total = npar * per
        words = np.empty((total, plen + 1), dtype=np.int8)
        mats = np.empty((total, self.d + 2, self.d + 2))
        imats = None
        # int64 lane with wraparound guard: |child| <= |parent| * col-abs-sum
        col_sum = int(np.abs(self._letter_imats).sum(axis=1).max()) if self._integral else 0
        int_ok = (parent.imats is not None
                  and parent.max_entry * col_sum < _INT64_GUARD)
        if int_ok:
            imats = np.empty((total, self.d + 2, self.d + 2), dtype=np.int64)
        last = parent.words[:, -1] if plen else np.full(npar, -9, dtype=np.int8)
        parent_pos = np.arange(npar)
        for b in range(k2):
            sel = np.nonzero(last != self._inv(b))[0]
            if sel.size == 0:
                continue
            # lexicographic slot: rank of b among the parent's allowed letters
            rank = b - ((self._inv(last[sel]) < b) & (last[sel] >= 0))
            pos = parent_pos[sel] * per + rank
            words[pos, :plen] = parent.words[sel]
            words[pos, plen] = b
            mats[pos] = parent.mats[sel] @ self.letter_mats[b]
            if int_ok:
                imats[pos] = parent.imats[sel] @ self._letter_imats[b]
        if int_ok:
            mats = imats.astype(np.float64)
        else:
            bad = core.so_relative_residual(mats) > 0.1 * self.tol
            if np.any(bad):
                idx = np.nonzero(bad)[0]
                J = core.gram_matrix(self.d)
                fix = mats[idx]
                for _ in range(6):
                    fix = 0.5 * (fix + J @ np.linalg.inv(fix).transpose(0, 2, 1) @ J)
                    if core.so_relative_residual(fix).max() <= 0.01 * self.tol:
                        break
                mats[idx] = fix
        corner = 0.5 * (mats[:, 0, 0] + mats[:, 0, -1] + mats[:, -1, 0] + mats[:, -1, -1])
        dists = np.arccosh(np.maximum(corner, 1.0))
        return _Level(words=words, mats=mats, dists=dists, imats=imats,
                      max_entry=float(np.abs(mats).max()))

    def level(self, n) -> _Level:
        self._extend_levels(n)
        return self._levels[n]

    def levels(self, n):
        self._extend_levels(n)
        return self._levels[:n + 1]

    def exact_through(self, n):
        """Deepest level <= n whose float64 matrices are exactly the integer
        products (int64 lane alive and entries <= 2^53); -1 for float groups."""
        if not self._integral:
            return -1
        deep = -1
        for j, lev in enumerate(self.levels(n)):
            if lev.imats is not None and lev.max_entry <= _FLOAT_EXACT:
                deep = j
        return deep

    # -- orbit ----------------------------------------------------------------

    def orbit_vectors(self, n):
        """Per-level arrays of orbit points w . o in R^{d+2}."""
        out = []
        for lev in self.levels(n):
            cols = lev.mats[:, :, 0] + lev.mats[:, :, -1]
            out.append(cols / np.sqrt(2.0))
        return out

    def orbit_distances(self, n):
        return [lev.dists for lev in self.levels(n)]

    def orbit_chart(self, n):
        """Chart coordinates of all orbit points of word length <= n, with
        their distances to o, flattened across levels in enumeration order.

        Orbit points are future timelike, so their last homogeneous
        coordinate is strictly positive: nothing is dropped.
        """
        pts, dists = [], []
        for lev in self.levels(n):
            num = lev.mats[:, 1:-1, 0] + lev.mats[:, 1:-1, -1]
            den = lev.mats[:, -1, 0] + lev.mats[:, -1, -1]
            pts.append(num / den[:, None])
            dists.append(lev.dists)
        return np.concatenate(pts), np.concatenate(dists)

    # -- limit set ------------------------------------------------------------

    def limit_set_sample(self, depth):
        """One chart point per reduced word of length = depth.

        The word w = l_1...l_n is applied to the attracting-ball center of its
        final letter; ping-pong puts the result in the nested ball of w, and
        every point of the limit set is a limit of such samples.  Points that
        escape to the chart's point at infinity are excluded; the count is
        returned alongside (it is 0 for validated groups, whose ball system
        is bounded in the chart).
        """
        if depth < 1:
            raise ValueError("depth must be >= 1")
        lev = self.level(depth)
        centers = np.stack([self.letter_balls[b][1].center
                            for b in range(2 * self.k)])
        seeds = core.chart_to_boundary(centers)          # (2k, d+2)
        z = np.einsum("nij,nj->ni", lev.mats, seeds[lev.words[:, -1]])
        scale = np.abs(z).max(axis=-1)
        finite = np.abs(z[:, -1]) > 1e-12 * np.maximum(scale, 1.0)
        pts = z[finite, 1:-1] / z[finite, -1][:, None]
        return pts, int((~finite).sum())

    # -- validation -----------------------------------------------------------

    def verify_ping_pong(self, n_boundary=64, n_outside=256, seed=0):
        """Check the ping-pong mapping condition and return a report.

        Disjointness of the 2k balls is a hard precondition (raises
        ConfigurationError naming the first offending pair).  For each letter
        the image of the complement of its source ball is bounded as an exact
        ball image (interval endpoints for d = 1, sphere fit for d >= 2) and
        must sit inside the target ball; dense boundary and outside samples
        (including the image of the chart's point at infinity) are checked
        point-wise.  The worst containment margin is reported.
        """
        names = self.letter_names
        # the plus-balls of the 2k letters run through all 2k balls exactly once
        balls = [self.letter_balls[b][1] for b in range(2 * self.k)]
        min_gap = np.inf
        for i in range(2 * self.k):
            for j in range(i + 1, 2 * self.k):
                gap = balls[i].gap_to(balls[j])
                min_gap = min(min_gap, gap)
                if gap <= 0:
                    raise ConfigurationError(
                        f"balls of {names[i]} and {names[j]} overlap (gap {gap:.3g})")
        rng = np.random.default_rng(seed)
        margins, witnesses = {}, []
        ok = True
        for b in range(2 * self.k):
            g = self.letter_mats[b]
            source, target = self.letter_balls[b]
            margin, wit = self._letter_margin(g, source, target,
                                              n_boundary, n_outside, rng)
            margins[names[b]] = margin
            if margin <= 0:
                ok = False
                if wit is not None:
                    witnesses.append(f"{names[b]}: image of {np.round(wit, 6)} "
                                     f"escapes the target ball")
        report = PingPongReport(ok=ok, margins=margins,
                                worst_margin=float(min(margins.values())),
                                min_ball_gap=float(min_gap),
                                witnesses=witnesses,
                                zariski=self.zariski_heuristic())
        return report

    def _letter_margin(self, g, source, target, n_boundary, n_outside, rng):
        d = self.d
        # the point sent to chart-infinity must lie inside the source ball,
        # otherwise the image of the complement is unbounded
        ginv = core.group_inverse(g)
        try:
            pole = core.boundary_from_chart(ginv[:, 0])
        except core.ChartInfinityError:
            return -np.inf, None
        if source.margin(pole) <= 0:
            return -np.inf, pole
        # exact image of the source-ball boundary
        if d == 1:
            ends = np.array([[source.center[0] - source.radius],
                             [source.center[0] + source.radius]])
            img, fin = core.chart_action(g, ends)
            if not fin.all():
                return -np.inf, ends[~fin][0]
            fit_margin = float(target.margin(img).min())
            worst = ends[int(np.argmin(target.margin(img)))]
        else:
            u = rng.standard_normal((max(n_boundary, d + 3), d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            sphere = source.center + source.radius * u
            img, fin = core.chart_action(g, sphere)
            if not fin.all():
                return -np.inf, sphere[~fin][0]
            # Moebius images of spheres are spheres: fit ||y||^2 = 2<y,c> - k
            A = np.column_stack([2.0 * img, -np.ones(len(img))])
            rhs = np.sum(img ** 2, axis=1)
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            c_img, k_img = sol[:d], sol[d]
            r_img = np.sqrt(max(float(c_img @ c_img - k_img), 0.0))
            if np.abs(A @ sol - rhs).max() > 1e-6 * (1.0 + rhs.max()):
                return -np.inf, sphere[0]  # not a sphere: g outside the model
            fit_margin = float(target.radius - np.linalg.norm(c_img - target.center) - r_img)
            worst = sphere[int(np.argmin(target.margin(img)))]
        # dense samples outside the source ball, plus the image of infinity
        u = rng.standard_normal((n_outside, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        radii = source.radius * np.exp(rng.uniform(0.0, 5.0, n_outside))
        outside = source.center + radii[:, None] * u
        img_out, fin = core.chart_action(g, outside)
        if not fin.all():
            return -np.inf, outside[~fin][0]
        m = target.margin(img_out)
        sample_margin = float(m.min())
        if sample_margin < fit_margin - 1e-9:
            worst = outside[int(np.argmin(m))]
        try:
            inf_img = core.boundary_from_chart(g[:, 0])
            inf_margin = float(target.margin(inf_img))
        except core.ChartInfinityError:
            return -np.inf, None
        margin = min(fit_margin, sample_margin, inf_margin)
        return margin, (worst if margin <= 0 else None)

    def validate(self, **kw):
        """Run verify_ping_pong, store the report, set .validated on success."""
        report = self.verify_ping_pong(**kw)
        self.report = report
        self.validated = bool(report.ok)
        return report

    def zariski_heuristic(self):
        """Heuristic (not a certificate): k >= 2, non-commuting generators,
        pairwise distinct axes.  Zariski density admits no finite numerical
        certificate; this records the standard sanity checks only."""
        out = {"k": self.k, "d": self.d, "noncommuting": False, "distinct_axes": False}
        if self.k >= 2:
            a, b = self.gens[0].elem, self.gens[1].elem
            comm = a @ b - b @ a
            out["noncommuting"] = bool(np.abs(comm).max() > 1e-9 * np.abs(a @ b).max())
            axes = [fixed_points(g.elem) for g in self.gens]
            distinct = True
            for i in range(self.k):
                for j in range(i + 1, self.k):
                    for p in axes[i]:
                        for q in axes[j]:
                            if core.boundary_equal(p, q, tol=1e-8):
                                distinct = False
            out["distinct_axes"] = distinct
        return out

    def __repr__(self):
        return (f"SchottkyGroup(name={self.name!r}, k={self.k}, d={self.d}, "
                f"validated={self.validated})")
