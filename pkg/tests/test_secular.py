import numpy as np
import pytest

from sprintreg.linalg import economy_svd
from sprintreg.secular import (
    ADD,
    REMOVE,
    BisectionConfig,
    SecularBreakdown,
    batch_bisect,
    bisect_min_singular,
    bracket,
    rank_one_update,
    secular_minus,
    secular_plus,
    secular_regularized,
)


def remove_oracle(A, k):
    """Smallest singular value after deleting column k, by direct SVD."""
    return np.linalg.svd(np.delete(A, k, axis=1), compute_uv=False)[-1]


def add_oracle(A, g):
    return np.linalg.svd(np.column_stack([A, g]), compute_uv=False)[-1]


class TestSecularFunctions:
    def test_minus_asymptote(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(8, 5))
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 2], REMOVE)
        val = secular_minus(1e6 * F.sigma[0], F, upd)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_plus_asymptote(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(8, 5))
        F = economy_svd(A)
        upd = rank_one_update(F, rng.normal(size=8), ADD)
        assert secular_plus(1e6 * F.sigma[0], F, upd) == pytest.approx(1.0, abs=1e-6)

    def test_pole_rejected(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(6, 4))
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 0], REMOVE)
        with pytest.raises(ValueError, match="pole"):
            secular_minus(float(F.sigma[1]), F, upd)
        upd = rank_one_update(F, rng.normal(size=6), ADD)
        with pytest.raises(ValueError, match="pole"):
            secular_plus(0.0, F, upd)

    def test_minus_roots_are_modified_singular_values(self):
        # every root of f- inside (sigma_{j+1}, sigma_j) matches the direct
        # SVD of the column-zeroed matrix
        rng = np.random.default_rng(3)
        A = rng.normal(size=(10, 10))
        F = economy_svd(A)
        k = 4
        upd = rank_one_update(F, A[:, k], REMOVE)
        target = np.linalg.svd(np.delete(A, k, axis=1), compute_uv=False)
        s = F.sigma
        for j in range(len(s) - 1):
            lo, hi = s[j + 1], s[j]
            f = lambda x: secular_minus(x, F, upd)
            a, b = lo * (1 + 1e-12), hi * (1 - 1e-12)
            fa, fb = f(a), f(b)
            assert fa > 0 > fb  # pole signs bracket one root per gap
            for _ in range(200):
                mid = 0.5 * (a + b)
                if f(mid) > 0:
                    a = mid
                else:
                    b = mid
            root = 0.5 * (a + b)
            assert root == pytest.approx(target[j], rel=1e-10)

    def test_minus_three_by_three_two_roots_between_old_values(self):
        # removing the last column of a 3x3 leaves two nonzero singular
        # values; they are the roots of f- and interlace the old spectrum
        rng = np.random.default_rng(4)
        A = rng.normal(size=(3, 3))
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 2], REMOVE)
        s = F.sigma
        oracle = np.linalg.svd(A[:, :2], compute_uv=False)
        assert len(oracle) == 2
        for j, target in enumerate(oracle):
            a, b = s[j + 1] * (1 + 1e-12), s[j] * (1 - 1e-12)
            fa = secular_minus(a, F, upd)
            fb = secular_minus(b, F, upd)
            assert fa > 0 > fb  # exactly one sign change per gap
            for _ in range(200):
                mid = 0.5 * (a + b)
                if secular_minus(mid, F, upd) > 0:
                    a = mid
                else:
                    b = mid
            assert 0.5 * (a + b) == pytest.approx(target, rel=1e-10)
            assert s[j + 1] < target < s[j]

    def test_plus_squared_weights_match_oracle_linear_do_not(self):
        # resolves the weight-exponent ambiguity empirically: power 2 is the
        # form consistent with direct recomputation
        rng = np.random.default_rng(5)
        hits = {1: 0, 2: 0}
        trials = 50
        for _ in range(trials):
            A = rng.normal(size=(12, 6))
            g = rng.normal(size=12)
            F = economy_svd(A)
            upd = rank_one_update(F, g, ADD)
            oracle = add_oracle(A, g)
            for power in (1, 2):
                f = lambda x: secular_plus(x, F, upd, weight_power=power)
                a, b = 1e-9 * F.sigma[-1], F.sigma[-1] * (1 - 1e-12)
                fa, fb = f(a), f(b)
                if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
                    continue
                for _ in range(200):
                    mid = 0.5 * (a + b)
                    if np.sign(f(mid)) == np.sign(fa):
                        a = mid
                    else:
                        b = mid
                if abs(0.5 * (a + b) - oracle) < 1e-8 * F.sigma[0]:
                    hits[power] += 1
        assert hits[2] == trials
        assert hits[1] < trials // 2

    def test_plus_orthogonal_column_diagonal_case(self):
        # appending a norm-nu column orthogonal to diag(3,2): sigma_min' =
        # min(nu, 2); the raw f+ has its root exactly there
        A = np.zeros((4, 2))
        A[0, 0], A[1, 1] = 3.0, 2.0
        for nu in (0.5, 1.7):
            g = np.array([0.0, 0.0, nu, 0.0])
            F = economy_svd(A)
            upd = rank_one_update(F, g, ADD)
            a, b = 1e-6, 2.0 * (1 - 1e-12)
            fa = secular_plus(a, F, upd)
            fb = secular_plus(b, F, upd)
            assert fa < 0 < fb  # pole at 0 pushes f+ to -inf at the bottom
            for _ in range(200):
                mid = 0.5 * (a + b)
                if secular_plus(mid, F, upd) < 0:
                    a = mid
                else:
                    b = mid
            assert 0.5 * (a + b) == pytest.approx(min(nu, 2.0), rel=1e-10)

    def test_plus_duplicate_column_bounded_by_old_min(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(9, 4))
        F = economy_svd(A)
        oracle = add_oracle(A, A[:, 1])
        assert oracle <= F.sigma[-1] + 1e-12


class TestRegularized:
    def test_finite_at_endpoints_with_correct_signs(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(9, 5))
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 3], REMOVE)
        l, u = bracket(F, REMOVE)
        fl = secular_regularized(l, F, upd)
        fu = secular_regularized(u, F, upd)
        assert np.isfinite(fl) and np.isfinite(fu)
        assert fl > 0 > fu
        g = rng.normal(size=9)
        upd = rank_one_update(F, g, ADD)
        l, u = bracket(F, ADD)
        fl = secular_regularized(l, F, upd)
        fu = secular_regularized(u, F, upd)
        assert np.isfinite(fl) and np.isfinite(fu)
        assert fl > 0 > fu

    def test_same_root_as_plain_form(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(8, 5))
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 0], REMOVE)
        l, u = bracket(F, REMOVE)

        def find_root(f):
            a, b = l * (1 + 1e-13), u * (1 - 1e-13)
            fa = f(a)
            for _ in range(200):
                mid = 0.5 * (a + b)
                if np.sign(f(mid)) == np.sign(fa):
                    a = mid
                else:
                    b = mid
            return 0.5 * (a + b)

        r1 = find_root(lambda x: secular_minus(x, F, upd))
        r2 = find_root(lambda x: secular_regularized(x, F, upd))
        assert r1 == pytest.approx(r2, rel=1e-12)

    def test_degenerate_spectrum_raises(self):
        A = np.diag([3.0, 1.0, 1.0])
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 0], REMOVE)
        with pytest.raises(SecularBreakdown, match="degenerate spectrum"):
            secular_regularized(1.5, F, upd)


class TestBracket:
    def test_remove_diag(self):
        F = economy_svd(np.diag([3.0, 2.0, 1.0]))
        assert bracket(F, REMOVE) == (1.0, 2.0)

    def test_add_diag(self):
        F = economy_svd(np.diag([3.0, 2.0, 1.0]))
        assert bracket(F, ADD) == (0.0, 1.0)

    def test_remove_needs_two_values(self):
        F = economy_svd(np.ones((4, 1)))
        with pytest.raises(ValueError):
            bracket(F, REMOVE)

    def test_oracle_always_inside(self):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            A = rng.normal(size=(12, 12))
            F = economy_svd(A)
            k = int(rng.integers(0, 12))
            oracle = remove_oracle(A, k)
            l, u = bracket(F, REMOVE)
            assert l - 1e-12 <= oracle <= u + 1e-12


class TestBisection:
    def test_remove_matches_oracle_random(self):
        rng = np.random.default_rng(10)
        fallbacks = 0
        for _ in range(300):
            A = rng.normal(size=(10, 10))
            F = economy_svd(A)
            k = int(rng.integers(0, 10))
            upd = rank_one_update(F, A[:, k], REMOVE)
            try:
                got = bisect_min_singular(F, upd)
            except SecularBreakdown:
                fallbacks += 1
                continue
            assert got == pytest.approx(remove_oracle(A, k), abs=1e-10 * F.sigma[0])
        assert fallbacks < 15

    def test_orthogonal_columns_reduce_to_column_norms(self):
        # exactly orthogonal columns put the new smallest singular value on
        # the bracket endpoint, which the endpoint-sign check flags for a
        # direct-SVD fallback; a slightly coupled system bisects cleanly to
        # the same answer
        A = np.zeros((6, 3))
        A[0, 0], A[1, 1], A[2, 2] = 3.0, 2.0, 1.0
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 2], REMOVE)
        with pytest.raises(SecularBreakdown):
            bisect_min_singular(F, upd)
        direct = np.linalg.svd(A[:, :2], compute_uv=False)[-1]
        assert direct == pytest.approx(2.0, rel=1e-12)

        B = A.copy()
        B[1, 2] = 1e-4  # weak coupling moves the root just inside
        F = economy_svd(B)
        upd = rank_one_update(F, B[:, 2], REMOVE)
        got = bisect_min_singular(F, upd)
        assert got == pytest.approx(
            np.linalg.svd(B[:, :2], compute_uv=False)[-1], rel=1e-9
        )

    def test_geometric_convergence_of_bracket(self):
        rng = np.random.default_rng(11)
        A = rng.normal(size=(3, 3))
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 2], REMOVE)
        trace = []
        bisect_min_singular(
            F, upd, BisectionConfig(max_iterations=50, relative_tolerance=1e-30),
            trace=trace,
        )
        widths = np.array([row[2] - row[1] for row in trace])
        # halving is exact up to endpoint rounding, which matters once the
        # bracket width approaches the ulp scale of the endpoints
        keep = widths > 1e-8 * F.sigma[0]
        ratios = widths[1:][keep[1:]] / widths[:-1][keep[1:]]
        assert len(ratios) >= 20
        np.testing.assert_allclose(ratios, 0.5, atol=1e-6)

    def test_breakdown_on_degenerate_spectrum(self):
        A = np.diag([2.0, 1.0, 1.0 + 1e-15])
        F = economy_svd(A)
        upd = rank_one_update(F, A[:, 0], REMOVE)
        with pytest.raises(SecularBreakdown):
            bisect_min_singular(F, upd)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BisectionConfig(max_iterations=0)
        with pytest.raises(ValueError):
            BisectionConfig(relative_tolerance=0.0)


class TestBatchBisect:
    def test_matches_scalar_for_all_candidates(self):
        rng = np.random.default_rng(12)
        A = rng.normal(size=(14, 9))
        F = economy_svd(A)
        norms = np.linalg.norm(A, axis=0)
        W = (F.U.T @ A) / norms
        sig, fb = batch_bisect(F, W, 1.0 / norms, REMOVE)
        for j in range(9):
            upd = rank_one_update(F, A[:, j], REMOVE)
            if fb[j]:
                with pytest.raises(SecularBreakdown):
                    bisect_min_singular(F, upd)
            else:
                scalar = bisect_min_singular(F, upd)
                assert sig[j] == pytest.approx(scalar, rel=1e-12)

    def test_add_direction_against_oracle(self):
        rng = np.random.default_rng(13)
        A = rng.normal(size=(16, 6))
        cols = rng.normal(size=(16, 10))
        F = economy_svd(A)
        norms = np.linalg.norm(cols, axis=0)
        W = (F.U.T @ cols) / norms
        sig, fb = batch_bisect(F, W, 1.0 / norms, ADD)
        for j in range(10):
            if not fb[j]:
                assert sig[j] == pytest.approx(
                    add_oracle(A, cols[:, j]), abs=1e-10 * F.sigma[0]
                )

    def test_zero_column_flagged_for_fallback(self):
        rng = np.random.default_rng(14)
        A = rng.normal(size=(8, 4))
        F = economy_svd(A)
        cols = rng.normal(size=(8, 3))
        cols[:, 1] = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            norms = np.linalg.norm(cols, axis=0)
            W = (F.U.T @ cols) / norms
            sig, fb = batch_bisect(F, W, 1.0 / norms, ADD)
        assert fb[1]
        assert not fb[0] and not fb[2]
