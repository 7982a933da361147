import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tokentrim import ValidationError
from tokentrim.dvts import (LtamParams, _neighbour_pairs, adaptive_fuse, affinity,
                            cls_attention_from_qk, global_scores, grid_coords, ltam_raw,
                            ltam_scores, ltam_scores_at, select_dominant)
from tokentrim.oracle import brute_force_ltam, brute_force_topk
from tokentrim.tensor_store import Rng


class TestClsAttention:
    def test_identical_keys(self):
        out = cls_attention_from_qk([[1.0, 0.0]], [[[1.0, 0.0], [1.0, 0.0]]], d_k=2)
        np.testing.assert_allclose(out, [[0.5, 0.5]])

    def test_single_token(self):
        assert cls_attention_from_qk([[0.3, 2.0]], [[[5.0, -1.0]]]).tolist() == [[1.0]]

    def test_scaled_logits(self):
        # logits (2*1)/sqrt(4) = 1 and 0; d_k passed explicitly disagrees with key dim
        q = np.array([[2.0, 0.0, 0.0, 0.0]])
        keys = np.array([[[1.0, 0, 0, 0], [0, 1.0, 0, 0]]])
        np.testing.assert_allclose(cls_attention_from_qk(q, keys)[0], [0.73106, 0.26894],
                                   atol=1e-4)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            cls_attention_from_qk([[1.0, 0.0]], [[[1.0, 0.0, 0.0]]])
        with pytest.raises(ValidationError):
            cls_attention_from_qk([[1.0, 0.0]], [[[1.0, 0.0]]], d_k=3)


class TestGlobalScores:
    def test_symmetric(self):
        np.testing.assert_allclose(global_scores([[0.5, 0.5]]), [0.5, 0.5])

    def test_two_heads(self):
        out = global_scores([[0.7, 0.3], [0.1, 0.9]])
        np.testing.assert_allclose(out, [0.45017, 0.54983], atol=1e-4)

    def test_single_token(self):
        assert global_scores([[1.0]]).tolist() == [1.0]

    def test_rejects_non_distribution(self):
        with pytest.raises(ValidationError):
            global_scores([[0.7, 0.7]])


class TestLtam:
    def test_identical_features_line(self):
        np.testing.assert_allclose(ltam_scores([[1.0, 2.0]] * 2, (1, 2)), [0.5, 0.5])

    def test_single_token(self):
        assert ltam_scores([[3.0]], (1, 1)).tolist() == [1.0]

    def test_worked_2x2_matches_oracle(self):
        feats = [[0.0], [1.0], [1.0], [0.0]]
        got = ltam_scores(feats, (2, 2), LtamParams(3, 0.3, 0.3, 0.5))
        np.testing.assert_allclose(got, brute_force_ltam(feats, (2, 2)), atol=1e-6)
        np.testing.assert_allclose(got, [0.25] * 4, atol=1e-12)

    def test_grid_mismatch(self):
        with pytest.raises(ValidationError):
            ltam_scores(np.zeros((5, 2)), (2, 2))

    @pytest.mark.parametrize("kw", [dict(kernel_size=2), dict(kernel_size=0), dict(w1=0.0),
                                    dict(w2=-1.0), dict(w3=-0.1), dict(sigma_floor=0.0)])
    def test_bad_params(self, kw):
        with pytest.raises(ValidationError):
            LtamParams(**kw)

    def test_border_truncation(self):
        src, _ = _neighbour_pairs(grid_coords(3, 3), 3)
        counts = np.bincount(src, minlength=9)
        assert counts.tolist() == [3, 5, 3, 5, 8, 5, 3, 5, 3]

    def test_outlier_token_scores_lowest(self):
        feats = np.zeros((16, 3))
        feats[5] = 10.0
        s = ltam_scores(feats, (4, 4))
        assert s.argmin() == 5

    def test_sparse_coords_skip_missing(self):
        coords = np.array([[0, 0], [0, 1], [5, 5]])
        raw = ltam_raw(np.array([[0.0], [1.0], [2.0]]), coords)
        assert raw[2] == 0.0
        assert raw[0] == raw[1] < 0

    def test_sparse_coords_equal_grid_when_complete(self):
        feats = Rng(3).uniform((12, 4))
        perm = np.array([3, 0, 11, 5, 1, 2, 4, 6, 7, 8, 9, 10])
        got = ltam_scores_at(feats[perm], grid_coords(3, 4)[perm])
        np.testing.assert_allclose(got, ltam_scores(feats, (3, 4))[perm], atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("k", [1, 3, 5])
    def test_matches_oracle(self, seed, k):
        rng = Rng(seed)
        h, w, d = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 7)
        feats = rng.uniform((h * w, d), -1, 1)
        p = LtamParams(k, 0.4, 0.7, 0.9)
        got = ltam_scores(feats, (h, w), p)
        want = brute_force_ltam(feats, (h, w), k, 0.4, 0.7, 0.9)
        assert np.abs(got - np.asarray(want)).max() < 1e-6

    def test_affinity_symmetric_and_nonpositive(self):
        rng = Rng(11)
        f = rng.uniform((2, 5))
        p = LtamParams()
        for (a, b) in [(0, 1), (1, 0)]:
            fd = np.linalg.norm(f[a] - f[b])
            kab = affinity(fd, np.sqrt(2.0), 0.7, 0.4, p)
            assert kab < 0
        assert affinity(np.linalg.norm(f[0] - f[1]), 1.0, 0.7, 0.4, p) == \
            affinity(np.linalg.norm(f[1] - f[0]), 1.0, 0.7, 0.4, p)
        # zero only when features coincide and the position term is off
        assert affinity(0.0, 1.0, 1.0, 1.0, LtamParams(w3=0.0)) == 0.0
        assert affinity(0.0, 1.0, 1.0, 1.0, LtamParams(w3=0.5)) < 0


class TestAdaptiveFuse:
    def test_equal_variances(self):
        g = np.array([0.1, 0.2, 0.7])
        _, alpha = adaptive_fuse(g, g[[2, 0, 1]])
        assert alpha == pytest.approx(0.5)

    def test_uniform_local(self):
        g = np.array([0.1, 0.6, 0.3])
        fused, alpha = adaptive_fuse(g, np.full(3, 1 / 3))
        assert alpha == 0.0
        np.testing.assert_allclose(fused, 1 / 3)

    def test_worked(self):
        fused, alpha = adaptive_fuse([0.45017, 0.54983], [0.6, 0.4])
        assert alpha == pytest.approx(0.80104, abs=1e-4)
        np.testing.assert_allclose(fused, [0.47998, 0.52002], atol=1e-4)

    def test_swap(self):
        _, alpha = adaptive_fuse([0.45017, 0.54983], [0.6, 0.4], swap=True)
        assert alpha == pytest.approx(1 - 0.80104, abs=1e-4)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            adaptive_fuse([0.5, 0.5], [1.0])

    @given(st.lists(st.floats(0.01, 1), min_size=2, max_size=20), st.randoms())
    def test_convex_bounds(self, raw, rnd):
        g = np.asarray(raw) / sum(raw)
        loc = g.copy()
        rnd.shuffle(loc)
        loc = (loc + 0.1) / (loc + 0.1).sum()
        fused, alpha = adaptive_fuse(g, loc)
        assert 0 <= alpha <= 1
        assert fused.sum() == pytest.approx(1.0, abs=1e-6)
        assert (fused >= np.minimum(g, loc) - 1e-15).all()
        assert (fused <= np.maximum(g, loc) + 1e-15).all()


class TestSelectDominant:
    def test_identity(self):
        assert select_dominant([0.3, 0.1, 0.6], 3).tolist() == [0, 1, 2]

    def test_ranking(self):
        assert select_dominant([0.1, 0.4, 0.2, 0.3], 2).tolist() == [1, 3]

    def test_ties_lowest_index(self):
        assert select_dominant([0.25] * 4, 2).tolist() == [0, 1]

    @pytest.mark.parametrize("k", [0, 5])
    def test_bad_k(self, k):
        with pytest.raises(ValidationError):
            select_dominant([0.1, 0.2, 0.3, 0.4], k)

    @settings(max_examples=200)
    @given(st.lists(st.integers(0, 6), min_size=1, max_size=30), st.data())
    def test_matches_oracle_and_affine_invariant(self, ints, data):
        s = np.asarray(ints, dtype=float)
        k = data.draw(st.integers(1, len(s)))
        a = data.draw(st.sampled_from([0.25, 0.5, 2.0, 8.0]))
        b = data.draw(st.integers(-10, 10))
        base = select_dominant(s, k)
        assert base.tolist() == brute_force_topk(ints, k)
        assert select_dominant(a * s + b, k).tolist() == base.tolist()

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=20, unique=True), st.randoms())
    def test_permutation_equivariance(self, vals, rnd):
        s = np.asarray(vals)
        perm = list(range(len(s)))
        rnd.shuffle(perm)
        k = max(1, len(s) // 3)
        picked = set(select_dominant(s, k).tolist())
        moved = set(select_dominant(s[perm], k).tolist())
        assert {perm[i] for i in moved} == picked
