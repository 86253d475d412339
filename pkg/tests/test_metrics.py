import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from faceveil.metrics import (
    ActivationStats,
    SsimParams,
    activation_stats,
    cosine_similarity,
    frechet_distance,
    gaussian_window,
    pair_similarities,
    reid_rate,
    reid_rate_from_similarities,
    ssim,
)


class TestCosine:
    def test_parallel_is_one(self):
        v = np.array([1.0, 2.0, 3.0])
        assert cosine_similarity(v, 2.5 * v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_is_zero(self):
        assert cosine_similarity(
            np.array([1.0, 0.0]), np.array([0.0, 4.0])
        ) == pytest.approx(0.0, abs=1e-15)

    def test_worked_example(self):
        sim = cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
        assert sim == pytest.approx(0.7071068, abs=1e-7)

    def test_antiparallel_is_minus_one(self):
        v = np.array([0.3, -0.4])
        assert cosine_similarity(v, -v) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity(np.zeros(3), np.ones(3))

    @given(
        hnp.arrays(
            np.float64,
            4,
            elements=st.floats(-10, 10, allow_nan=False),
        ).filter(lambda v: np.linalg.norm(v) > 1e-6)
    )
    @settings(max_examples=50, deadline=None)
    def test_bounded_and_symmetric(self, v):
        w = np.roll(v, 1) + 0.5
        if np.linalg.norm(w) <= 1e-6:
            return
        s = cosine_similarity(v, w)
        assert -1.0 - 1e-9 <= s <= 1.0 + 1e-9
        assert s == cosine_similarity(w, v)


class TestReid:
    def test_identical_embeddings_all_match(self):
        emb = np.random.default_rng(60).standard_normal((5, 8))
        pairs = [(row, row.copy()) for row in emb]
        assert reid_rate(pairs, threshold=0.99) == 1.0

    def test_orthogonal_embeddings_never_match(self):
        pairs = [
            (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
            (np.array([0.0, 1.0]), np.array([1.0, 0.0])),
        ]
        assert reid_rate(pairs, threshold=0.5) == 0.0

    def test_worked_example(self):
        sims = np.array([0.9, 0.3, 0.6, 0.1])
        assert reid_rate_from_similarities(sims, 0.5) == pytest.approx(0.5)

    def test_threshold_comparison_is_strict(self):
        sims = np.array([0.4, 0.4, 0.8])
        assert reid_rate_from_similarities(sims, 0.4) == pytest.approx(1 / 3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            reid_rate_from_similarities(np.array([]), 0.4)

    def test_pairwise_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pair_similarities([(np.zeros(4) + 1.0, np.ones(5))])

    @given(
        st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=30),
        st.floats(-1, 1, allow_nan=False),
        st.floats(0, 0.5, allow_nan=False),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_threshold(self, sims, thr, bump):
        sims = np.asarray(sims)
        assert reid_rate_from_similarities(
            sims, thr + bump
        ) <= reid_rate_from_similarities(sims, thr)


class TestSsim:
    def test_self_similarity_is_one(self, make_image):
        img = make_image(61, shape=(16, 16))
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)

    def test_constant_images_closed_form(self):
        """For two flat images the structure terms drop out and the score
        reduces to (2ab + C1)/(a^2 + b^2 + C1)."""
        a, b = 0.3, -0.2
        params = SsimParams()
        c1 = (params.k1 * params.data_range) ** 2
        expected = (2 * a * b + c1) / (a * a + b * b + c1)
        got = ssim(np.full((16, 16), a), np.full((16, 16), b), params)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_symmetry_is_bitwise(self, make_image):
        x = make_image(62, shape=(16, 16))
        y = make_image(63, shape=(16, 16))
        assert ssim(x, y) == ssim(y, x)

    def test_different_images_score_below_one(self, make_image):
        x = make_image(64, shape=(16, 16))
        y = make_image(65, shape=(16, 16))
        assert ssim(x, y) < 1.0

    def test_window_larger_than_image_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_non_2d_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))

    def test_window_normalized(self):
        w = gaussian_window(11, 1.5)
        assert w.shape == (11, 11)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.array_equal(w, w.T)

    def test_even_window_rejected(self):
        with pytest.raises(ValueError):
            SsimParams(window_size=10)


def diagonal_frechet(mu_p, var_p, mu_q, var_q):
    """Closed form for diagonal covariances: sum of per-dimension
    (dmu^2 + (sqrt(vp) - sqrt(vq))^2)."""
    mu_p, var_p = np.asarray(mu_p), np.asarray(var_p)
    mu_q, var_q = np.asarray(mu_q), np.asarray(var_q)
    return float(
        np.sum((mu_p - mu_q) ** 2)
        + np.sum((np.sqrt(var_p) - np.sqrt(var_q)) ** 2)
    )


class TestFrechet:
    def test_identical_stats_are_zero(self):
        rng = np.random.default_rng(66)
        feats = rng.standard_normal((50, 4))
        p = activation_stats(feats)
        assert frechet_distance(p, p) == pytest.approx(0.0, abs=1e-6)

    def test_one_dimensional_worked_example(self):
        p = ActivationStats(mean=np.array([0.0]), cov=np.array([[1.0]]), count=2)
        q = ActivationStats(mean=np.array([1.0]), cov=np.array([[1.0]]), count=2)
        assert frechet_distance(p, q) == pytest.approx(1.0, abs=1e-9)

    def test_diagonal_closed_form(self):
        mu_p, var_p = [0.0, 1.0, -2.0], [1.0, 2.0, 0.5]
        mu_q, var_q = [0.5, 1.0, 0.0], [2.0, 1.0, 0.5]
        p = ActivationStats(mean=np.array(mu_p), cov=np.diag(var_p), count=2)
        q = ActivationStats(mean=np.array(mu_q), cov=np.diag(var_q), count=2)
        expected = diagonal_frechet(mu_p, var_p, mu_q, var_q)
        assert frechet_distance(p, q) == pytest.approx(expected, rel=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(67)
        p = activation_stats(rng.standard_normal((40, 5)))
        q = activation_stats(rng.standard_normal((40, 5)) * 1.5 + 0.3)
        assert frechet_distance(p, q) == pytest.approx(
            frechet_distance(q, p), rel=1e-8
        )

    def test_nonnegative(self):
        rng = np.random.default_rng(68)
        for _ in range(10):
            p = activation_stats(rng.standard_normal((30, 3)))
            q = activation_stats(rng.standard_normal((30, 3)))
            assert frechet_distance(p, q) >= 0.0

    def test_near_singular_covariance_survives_via_jitter(self):
        # rank-deficient: second feature is a copy of the first
        rng = np.random.default_rng(69)
        base = rng.standard_normal((30, 1))
        feats = np.hstack([base, base])
        p = activation_stats(feats)
        q = activation_stats(rng.standard_normal((30, 2)))
        d = frechet_distance(p, q)
        assert np.isfinite(d) and d >= 0.0

    def test_dimension_mismatch_rejected(self):
        p = ActivationStats(mean=np.zeros(2), cov=np.eye(2), count=2)
        q = ActivationStats(mean=np.zeros(3), cov=np.eye(3), count=2)
        with pytest.raises(ValueError):
            frechet_distance(p, q)

    def test_asymmetric_covariance_rejected(self):
        cov = np.array([[1.0, 0.5], [0.1, 1.0]])
        with pytest.raises(ValueError):
            ActivationStats(mean=np.zeros(2), cov=cov, count=2)

    def test_activation_stats_match_numpy(self):
        feats = np.random.default_rng(70).standard_normal((25, 4))
        stats = activation_stats(feats)
        assert np.allclose(stats.mean, feats.mean(axis=0), atol=1e-12)
        assert np.allclose(stats.cov, np.cov(feats, rowvar=False),
                           atol=1e-12)

    def test_single_sample_rejected(self):
        with pytest.raises(ValueError):
            activation_stats(np.zeros((1, 4)))
