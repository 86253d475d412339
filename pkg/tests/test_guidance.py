import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceveil.backends import ToyAttributeScorer, ToyCodec
from faceveil.guidance import GuidanceTerm, apply_guidance, guidance_term


class StubScorer:
    """Returns a fixed loss and gradient, recording how often it is hit."""

    def __init__(self, loss, grad):
        self.loss = float(loss)
        self.grad = np.asarray(grad, dtype=np.float64)
        self.calls = 0

    def loss_and_grad(self, z, target_image):
        self.calls += 1
        return self.loss, self.grad.copy()


class TestGuidanceTerm:
    def test_worked_scalar_example(self):
        """loss 1.0, grad 4.0, sigma 0.5, strength 0.8 gives a 1.6 term."""
        scorer = StubScorer(1.0, [4.0])
        term = guidance_term(
            np.array([1.0]), np.zeros(1), 0.5, 0.8, scorer
        )
        assert term.weight == pytest.approx(0.4, abs=0)
        assert term.values[0] == pytest.approx(1.6, abs=1e-12)
        assert term.loss == 1.0

    def test_apply_worked_example(self):
        term = GuidanceTerm(
            values=np.array([1.6]), loss=1.0, weight=0.4
        )
        out = apply_guidance(np.array([1.0]), term)
        assert out[0] == pytest.approx(-0.6, abs=1e-12)

    def test_apply_is_elementwise_subtraction(self):
        rng = np.random.default_rng(40)
        z = rng.standard_normal((2, 4, 4))
        vals = rng.standard_normal((2, 4, 4))
        term = GuidanceTerm(values=vals, loss=1.0, weight=1.0)
        assert np.array_equal(apply_guidance(z, term), z - vals)

    def test_zero_strength_gives_positive_zeros(self):
        scorer = StubScorer(2.0, [[3.0, -5.0]])
        term = guidance_term(
            np.zeros((1, 2)), np.zeros((1, 2)), 0.7, 0.0, scorer
        )
        assert np.all(term.values == 0.0)
        assert not np.any(np.signbit(term.values))
        assert term.weight == 0.0

    def test_zero_sigma_gives_positive_zeros(self):
        scorer = StubScorer(2.0, [[3.0, -5.0]])
        term = guidance_term(
            np.zeros((1, 2)), np.zeros((1, 2)), 0.0, 0.8, scorer
        )
        assert np.all(term.values == 0.0)
        assert not np.any(np.signbit(term.values))

    def test_zero_weight_apply_preserves_bits(self):
        """Subtracting a zero-weight term must not flip a single bit,
        negative zeros in the latent included."""
        z = np.array([0.0, -0.0, 1.5, -2.25, np.nextafter(0.0, 1.0)])
        scorer = StubScorer(1.0, np.ones(5))
        term = guidance_term(z, np.zeros(5), 0.5, 0.0, scorer)
        out = apply_guidance(z, term)
        assert out.tobytes() == z.tobytes()

    def test_doubling_strength_doubles_term_bitwise(self):
        """2x strength is an exact power-of-two rescale, so the doubled
        term is bitwise equal to term + term."""
        rng = np.random.default_rng(41)
        grad = rng.standard_normal((1, 8, 8))
        z = rng.standard_normal((1, 8, 8))
        base = guidance_term(z, np.zeros((8, 8)), 0.3, 0.4,
                             StubScorer(1.0, grad))
        doubled = guidance_term(z, np.zeros((8, 8)), 0.3, 0.8,
                                StubScorer(1.0, grad))
        assert doubled.values.tobytes() == (2.0 * base.values).tobytes()

    @given(
        strength=st.floats(0.0, 4.0, allow_nan=False),
        sigma=st.floats(0.0, 2.0, allow_nan=False),
    )
    @settings(max_examples=50, deadline=None)
    def test_weight_is_strength_times_sigma(self, strength, sigma):
        scorer = StubScorer(1.0, np.ones(3))
        term = guidance_term(np.zeros(3), np.zeros(3), sigma, strength,
                             scorer)
        assert term.weight == strength * sigma
        assert scorer.calls == 1

    def test_gradient_clipping(self):
        grad = np.array([3.0, 4.0])  # norm 5
        scorer = StubScorer(1.0, grad)
        term = guidance_term(
            np.zeros(2), np.zeros(2), 1.0, 1.0, scorer, max_grad_norm=1.0
        )
        assert np.linalg.norm(term.values) == pytest.approx(1.0, rel=1e-12)
        unclipped = guidance_term(
            np.zeros(2), np.zeros(2), 1.0, 1.0, scorer, max_grad_norm=10.0
        )
        assert np.array_equal(unclipped.values, grad)

    def test_shape_mismatch_rejected(self):
        term = GuidanceTerm(values=np.zeros((2, 2)), loss=0.5, weight=1.0)
        with pytest.raises(ValueError):
            apply_guidance(np.zeros((3, 3)), term)

    def test_nonfinite_gradient_rejected(self):
        scorer = StubScorer(1.0, [np.inf])
        with pytest.raises(ValueError):
            guidance_term(np.zeros(1), np.zeros(1), 0.5, 0.8, scorer)

    def test_negative_strength_rejected(self):
        scorer = StubScorer(1.0, [1.0])
        with pytest.raises(ValueError):
            guidance_term(np.zeros(1), np.zeros(1), 0.5, -0.1, scorer)

    def test_zero_loss_with_nonzero_values_rejected(self):
        with pytest.raises(ValueError):
            GuidanceTerm(values=np.ones(2), loss=0.0, weight=1.0)

    def test_values_are_read_only(self):
        term = GuidanceTerm(values=np.ones(2), loss=1.0, weight=1.0)
        with pytest.raises(ValueError):
            term.values[0] = 5.0


class TestDescent:
    def test_small_step_reduces_the_quadratic_loss(self, codec, make_image):
        """One guided step with a small weight must move the latent
        downhill on the scorer's own objective."""
        scorer = ToyAttributeScorer(codec=codec)
        target = make_image(50)
        rng = np.random.default_rng(51)
        for _ in range(10):
            z = rng.standard_normal(codec.latent_shape)
            loss_before, _ = scorer.loss_and_grad(z, target)
            term = guidance_term(z, target, 0.1, 1.0, scorer)
            loss_after, _ = scorer.loss_and_grad(
                apply_guidance(z, term), target
            )
            assert loss_after < loss_before

    def test_guiding_toward_own_decode_is_a_fixed_point(self, codec):
        scorer = ToyAttributeScorer(codec=codec)
        z = np.random.default_rng(52).standard_normal(codec.latent_shape)
        target = codec.decode(z)
        term = guidance_term(z, target, 0.5, 0.8, scorer)
        assert term.loss == pytest.approx(0.0, abs=1e-18)
        assert np.all(term.values == 0.0)
        out = apply_guidance(z, term)
        assert out.tobytes() == z.tobytes()
