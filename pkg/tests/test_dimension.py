"""Critical exponent estimation: closed-form roots, fixtures, stability."""

import numpy as np
import pytest

from limset import core, dimension, schottky

REFERENCE_DELTA = 0.4842963218688965  # level-12 shell-ratio root, bisection tol 1e-6


# ---------------------------------------------------------------------------
# shell sums


def test_shell_sums_identity_level(reference):
    for s in (0.0, 0.7, 100.0):
        tr = dimension.shell_sums(reference, s, 4)
        assert tr.values[0] == 1.0
        assert tr.log_values[0] == 0.0


def test_shell_sums_at_zero_count_words(reference):
    tr = dimension.shell_sums(reference, 0.0, 5)
    counts = np.array([1] + [4 * 3 ** (n - 1) for n in range(1, 6)])
    assert np.allclose(tr.values, counts, rtol=1e-12)


def test_shell_sums_strictly_decreasing_in_s(reference):
    grid = [0.0, 0.3, 0.7, 1.2, 2.5]
    stack = np.array([dimension.shell_sums(reference, s, 5).log_values for s in grid])
    # entrywise strictly decreasing in s for every shell with positive distances
    assert np.all(np.diff(stack[:, 1:], axis=0) < 0.0)


def test_shell_sums_decay_geometrically_at_large_s(reference):
    tr = dimension.shell_sums(reference, 100.0, 6)
    assert not tr.diverged
    assert np.all(np.diff(tr.log_values) < -100.0)


def test_shell_sums_rejects_negative_s(reference):
    with pytest.raises(ValueError):
        dimension.shell_sums(reference, -0.5, 4)


def test_shell_sums_threads_bit_identical(reference):
    a = dimension.shell_sums(reference, 0.48, 8, threads=1).log_values
    b = dimension.shell_sums(reference, 0.48, 8, threads=4).log_values
    assert np.array_equal(a, b)


def test_cyclic_shell_sums_on_axis_closed_form():
    # one loxodromic with axis (-1, 1) in the chart; for a basepoint on the
    # axis d(x, g^n x) = n*ell exactly, so a_n(s) = 2 exp(-s n ell)
    ell = 2.0
    att = core.chart_to_boundary(np.array([1.0]))
    rep = core.chart_to_boundary(np.array([-1.0]))
    g = schottky.build_loxodromic(att, rep, ell)
    r_iso = 1.0 / np.sinh(ell / 2.0)
    rho = 1.3 * r_iso
    pole = core.boundary_from_chart(core.group_inverse(g)[:, 0])
    tinf = core.boundary_from_chart(g[:, 0])
    gen = schottky.SchottkyGenerator(
        elem=g,
        ball_plus=schottky.Ball(tinf, rho),
        ball_minus=schottky.Ball(pole, rho),
    )
    group = schottky.SchottkyGroup([gen], name="axis-cyclic")

    x = (att + rep) / np.sqrt(2.0 * core.bilinear_form(att, rep))
    core.check_hyperbolic_point(x)
    for s in (0.2, 1.0):
        tr = dimension.shell_sums(group, s, 5, basepoint=x)
        n = np.arange(1, 6)
        assert np.allclose(tr.values[1:], 2.0 * np.exp(-s * n * ell), rtol=1e-10)


# ---------------------------------------------------------------------------
# per-level roots: synthetic closed form


@pytest.mark.parametrize("c", [0.5, 1.7])
@pytest.mark.parametrize("k", [2, 3])
def test_delta_from_distances_matches_geometric_closed_form(c, k):
    # constant distance c*n per shell: the level-n ratio equation reads
    # log(2k-1) - s*c = 0 for n >= 2, log(2k) - s*c = 0 for n = 1
    dists = [np.zeros(1)]
    for n in range(1, 7):
        count = 2 * k * (2 * k - 1) ** (n - 1)
        dists.append(np.full(count, c * n))
    delta, per_level = dimension.delta_from_distances(dists)
    assert abs(per_level[0] - np.log(2 * k) / c) < 2e-6
    assert np.all(np.abs(per_level[1:] - np.log(2 * k - 1) / c) < 2e-6)
    assert delta == per_level[-1]


def test_delta_from_distances_degenerate_on_flat_counts():
    dists = [np.zeros(1), np.array([2.0, 2.0]), np.array([4.0, 4.0])]
    with pytest.raises(core.DegenerateConfigurationError):
        dimension.delta_from_distances(dists)


# ---------------------------------------------------------------------------
# estimate_delta on fixtures


def test_reference_delta_value_and_stability(reference):
    est = dimension.estimate_delta(reference, n_max=12)
    assert 0.0 < est.delta < 1.0
    assert abs(est.delta - REFERENCE_DELTA) < 2e-6
    # truncation stability: deepest levels agree
    assert abs(est.per_level[11] - est.per_level[9]) < 0.01
    assert est.spread < 1e-4
    # weak monotone trend of successive differences
    diffs = np.abs(np.diff(est.per_level))
    assert diffs[-1] <= diffs[0]
    assert est.counts[0] == 1 and est.counts[1] == 4


def test_reference_delta_basepoint_drift(reference):
    o = core.basepoint(1)
    base = dimension.estimate_delta(reference, n_max=10).delta
    for h in (core.unipotent_plus(np.array([0.3])),
              core.unipotent_plus(np.array([-0.5])),
              core.geodesic_flow(0.2, 1)):
        est = dimension.estimate_delta(reference, n_max=10, basepoint=h @ o)
        assert abs(est.delta - base) < 0.02


def test_cyclic_group_is_degenerate(cyclic):
    with pytest.raises(core.DegenerateConfigurationError):
        dimension.estimate_delta(cyclic, n_max=6)


def test_estimate_delta_rejects_shallow_truncation(reference):
    with pytest.raises(ValueError):
        dimension.estimate_delta(reference, n_max=4)


def test_sweep_delta_decreases_with_translation_length(sweep_groups):
    deltas = {}
    for ell, group in sorted(sweep_groups.items()):
        est = dimension.estimate_delta(group, n_max=8)
        assert 0.0 < est.delta < 0.5
        deltas[ell] = est.delta
    assert deltas[2.0] > deltas[3.0] > deltas[4.0]


def test_sweep_truncation_spread_small(sweep_groups):
    est = dimension.estimate_delta(sweep_groups[2.0], n_max=12)
    assert est.delta < 0.5
    assert abs(est.per_level[11] - est.per_level[9]) < 0.01
