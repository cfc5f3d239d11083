import itertools

import numpy as np
import pytest

from lutshrink.lutcore import LutMask, binarize_mask, index_pattern, pattern_index
from lutshrink.shrink import (
    PruneMask,
    SalienceMatrix,
    TransformMatrix,
    apply_transform,
    build_U,
    build_prune_mask,
    compose_transforms,
    salience,
    salience_rows,
)

AND_MASK = LutMask(2, [-0.90, -0.01, -0.85, 0.05])


def brute_salience(params, k):
    """Enumerate every pair differing in one input (independent oracle)."""
    s = np.zeros(k)
    for i in range(k):
        for d in itertools.product([-1, 1], repeat=k):
            if d[i] == 1:
                d_lo = list(d)
                d_lo[i] = -1
                s[i] += abs(params[pattern_index(d)] - params[pattern_index(d_lo)])
    return s


def test_salience_and_gate_table_values():
    s = salience(AND_MASK)
    # column sums 0.89 + 0.90 and 0.05 + 0.06
    np.testing.assert_allclose(s, [1.79, 0.11], atol=1e-12)


def test_salience_constant_mask_is_zero():
    s = salience(LutMask(3, np.full(8, 0.37)))
    np.testing.assert_array_equal(s, np.zeros(3))


def test_salience_matches_brute_force():
    rng = np.random.default_rng(4)
    for k in range(1, 7):
        for _ in range(25):
            params = rng.uniform(-1, 1, 2**k)
            np.testing.assert_allclose(
                salience(LutMask(k, params)), brute_salience(params, k), atol=1e-12
            )


def test_U_k2_matches_displayed_matrices():
    # input 0: averages index pairs {0,1} and {2,3}
    u0 = build_U(2, 0).entries
    expected0 = 0.5 * np.array(
        [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]], dtype=float
    )
    np.testing.assert_array_equal(u0, expected0)
    # input 1: averages index pairs {0,2} and {1,3}
    u1 = build_U(2, 1).entries
    expected1 = 0.5 * np.array(
        [[1, 0, 1, 0], [0, 1, 0, 1], [1, 0, 1, 0], [0, 1, 0, 1]], dtype=float
    )
    np.testing.assert_array_equal(u1, expected1)


def test_U_k1_collapses_to_constant():
    np.testing.assert_array_equal(build_U(1, 0).entries, np.full((2, 2), 0.5))


@pytest.mark.parametrize("k", range(1, 7))
def test_U_operator_properties(k):
    us = [build_U(k, i).entries for i in range(k)]
    for u in us:
        np.testing.assert_allclose(u.sum(axis=1), 1.0, atol=1e-12)  # row-stochastic
        np.testing.assert_allclose(u.sum(axis=0), 1.0, atol=1e-12)  # doubly
        np.testing.assert_allclose(u, u.T, atol=1e-12)  # symmetric
        np.testing.assert_allclose(u @ u, u, atol=1e-12)  # idempotent
    for a, b in itertools.combinations(us, 2):
        np.testing.assert_allclose(a @ b, b @ a, atol=1e-12)  # commute


def test_compose_empty_is_identity():
    v = compose_transforms(3, [])
    np.testing.assert_array_equal(v.entries, np.eye(8))


def test_compose_all_is_global_mean():
    v = compose_transforms(2, [0, 1])
    np.testing.assert_allclose(v.entries, np.full((4, 4), 0.25), atol=1e-12)


def test_compose_order_independent():
    a = build_U(2, 0).entries @ build_U(2, 1).entries
    b = build_U(2, 1).entries @ build_U(2, 0).entries
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(compose_transforms(2, [0, 1]).entries, a, atol=1e-12)


def test_compose_zeroes_targeted_salience_only():
    rng = np.random.default_rng(5)
    v = compose_transforms(4, [1, 3])
    np.testing.assert_allclose(v.entries @ v.entries, v.entries, atol=1e-12)
    for _ in range(20):
        mask = LutMask(4, rng.uniform(-1, 1, 16))
        out = apply_transform(v, mask)
        s_before = salience(mask)
        s_after = salience(out)
        assert s_after[1] == 0.0 and s_after[3] == 0.0
        # averaging merges signed differences, so untouched positions can
        # only lose salience, never gain it
        assert np.all(s_after[[0, 2]] <= s_before[[0, 2]] + 1e-12)


def test_apply_transform_table_example():
    # severing input 1 (0-based) of the AND mask, rounds to -0.88 / 0.02
    v = compose_transforms(2, [1])
    out = apply_transform(v, AND_MASK)
    np.testing.assert_allclose(out.params, [-0.875, 0.02, -0.875, 0.02], atol=1e-12)


def test_apply_transform_identity_and_idempotence():
    rng = np.random.default_rng(6)
    ident = compose_transforms(3, [])
    v = compose_transforms(3, [0, 2])
    for _ in range(1000):
        mask = LutMask(3, rng.uniform(-1, 1, 8))
        np.testing.assert_array_equal(apply_transform(ident, mask).params, mask.params)
        once = apply_transform(v, mask)
        twice = apply_transform(v, once)
        np.testing.assert_allclose(twice.params, once.params, atol=1e-12)


def test_mean_preservation():
    rng = np.random.default_rng(7)
    for k in range(1, 6):
        v = compose_transforms(k, rng.choice(k, size=max(1, k // 2), replace=False))
        mask = LutMask(k, rng.uniform(-1, 1, 2**k))
        out = apply_transform(v, mask)
        assert abs(out.params.mean() - mask.params.mean()) <= 1e-12


def test_zero_salience_severance_preserves_function():
    rng = np.random.default_rng(8)
    for k in range(2, 7):
        for _ in range(100):
            params = rng.uniform(-1, 1, 2**k)
            # plant a dead input by pre-averaging a random position
            dead = int(rng.integers(k))
            params = build_U(k, dead).apply(params)
            mask = LutMask(k, params)
            s = salience(mask)
            zero_pos = [i for i in range(k) if s[i] == 0.0]
            assert dead in zero_pos
            out = apply_transform(compose_transforms(k, zero_pos), mask)
            np.testing.assert_array_equal(
                binarize_mask(out).bits, binarize_mask(mask).bits
            )


def test_min_salience_severance_bounded_table_change():
    rng = np.random.default_rng(9)
    for k in range(2, 7):
        for _ in range(100):
            mask = LutMask(k, rng.uniform(-1, 1, 2**k))
            i = int(np.argmin(salience(mask)))
            out = apply_transform(compose_transforms(k, [i]), mask)
            diff = binarize_mask(out).bits != binarize_mask(mask).bits
            assert diff.sum() <= 2 ** (k - 1)


def test_prune_mask_trivial_fractions():
    s = SalienceMatrix(np.array([[1.79, 0.11], [0.50, 0.40]]))
    prev = PruneMask(np.zeros((2, 2), dtype=bool), 0.0)
    assert build_prune_mask(s, 0.0, prev).count == 0
    np.testing.assert_array_equal(
        build_prune_mask(s, 1.0, prev).mask, np.ones((2, 2), dtype=bool)
    )


def test_prune_mask_ranks_ascending():
    s = SalienceMatrix(np.array([[1.79, 0.11], [0.50, 0.40]]))
    m = build_prune_mask(s, 0.5, None)
    # hand sort: 0.11 < 0.40 < 0.50 < 1.79 -> (0,1) and (1,1) pruned
    np.testing.assert_array_equal(m.mask, [[False, True], [False, True]])
    assert m.count == 2


def test_prune_mask_monotone_and_exact_count():
    rng = np.random.default_rng(11)
    scores = rng.uniform(0, 1, (50, 4))
    prev = None
    for t in range(1, 5):
        delta_t = 0.8 * t / 4
        # severed entries report zero salience from then on
        sc = scores.copy()
        if prev is not None:
            sc[prev.mask] = 0.0
        cur = build_prune_mask(SalienceMatrix(sc), delta_t, prev)
        assert cur.count == int(np.floor(delta_t * 200))
        if prev is not None:
            assert np.all(cur.mask[prev.mask])
        prev = cur


def test_prune_mask_stable_tiebreak():
    s = SalienceMatrix(np.zeros((2, 3)))
    m = build_prune_mask(s, 0.5, None)  # floor(3) of 6 all-equal entries
    np.testing.assert_array_equal(m.mask, [[True, True, True], [False, False, False]])


def test_salience_rows_matches_single():
    rng = np.random.default_rng(12)
    params = rng.uniform(-1, 1, (10, 8))
    rows = salience_rows(params, 3)
    for n in range(10):
        np.testing.assert_allclose(rows[n], salience(LutMask(3, params[n])), atol=1e-15)
