"""Deterministic analytic backends for exact verification of the sampler.

Every contract gets a closed-form implementation on small grids
(1x8x8 latents by default), so each sampler equation can be checked
against hand-computable values:

* `ToyCodec`:       identity encode/decode (adds/removes the channel axis).
* `ToyDenoiser`:    noise prediction constructed so that the clean-latent
                     estimate recovers a known grid mu(cond) exactly at
                     every timestep.
* `FixedNoiseDenoiser`: always predicts a stored noise grid; feeding it
                     the true forward noise makes the deterministic
                     reverse pass invert the forward pass exactly.
* `ToyAttributeScorer`: quadratic feature-matching loss through a fixed
                     linear feature map, with the analytic gradient.
* `ToyFaceParser`:  paints a parse map from a rectangle layout.
* `ToyIdentityEmbedder`: fixed linear projection with a constant
                     component so embeddings never have zero norm.

All toy backends are pure and concurrent-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..masking import LabelMap, ParseMap
from ..schedule import NoiseSchedule
from .contracts import Conditioning


class ToyCodec:
    """Identity codec between (h, w) images and (1, h, w) latents."""

    concurrent_safe = True

    def __init__(self, image_shape: tuple[int, int] = (8, 8)):
        h, w = image_shape
        self.image_shape = (int(h), int(w))
        self.latent_shape = (1, int(h), int(w))

    def encode(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.image_shape:
            raise ValueError(
                f"expected image shape {self.image_shape}, got {image.shape}"
            )
        return image[None, :, :].copy()

    def decode(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if latent.shape != self.latent_shape:
            raise ValueError(
                f"expected latent shape {self.latent_shape}, got {latent.shape}"
            )
        return latent[0].copy()


def broadcast_mean(cond: Conditioning, shape: tuple[int, ...]) -> np.ndarray:
    """Default mu: the scalar mean of the conditioning latent, broadcast."""
    return np.full(shape, float(np.mean(cond.latent)))


class ToyDenoiser:
    """Noise prediction whose clean-latent estimate is mu(cond) exactly.

    predict_noise(z_t, t, cond) = (z_t - sqrt(abar_t) * mu) / sqrt(1 - abar_t),
    so solving for the clean latent returns mu for every z_t and t >= 1.
    """

    concurrent_safe = True

    def __init__(
        self,
        schedule: NoiseSchedule,
        mu_of_cond: Callable[[Conditioning, tuple[int, ...]], np.ndarray] = broadcast_mean,
    ):
        self.schedule = schedule
        self.mu_of_cond = mu_of_cond

    def predict_noise(self, z_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        if t < 1:
            raise ValueError("toy denoiser needs t >= 1 (abar(0) = 1 divides by zero)")
        z_t = np.asarray(z_t, dtype=np.float64)
        abar = self.schedule.alpha_bar(t)
        mu = np.asarray(self.mu_of_cond(cond, z_t.shape), dtype=np.float64)
        if mu.shape != z_t.shape:
            raise ValueError(f"mu shape {mu.shape} does not match latent {z_t.shape}")
        return (z_t - np.sqrt(abar) * mu) / np.sqrt(1.0 - abar)


class FixedNoiseDenoiser:
    """Always predicts the stored noise grid.

    Built with the true forward noise, it makes the eta = 0 reverse chain
    reproduce the clean latent exactly; unlike `ToyDenoiser`, its
    clean-latent estimate responds to shifts in z_t, so guidance
    corrections propagate to the final output.
    """

    concurrent_safe = True

    def __init__(self, noise: np.ndarray):
        self.noise = np.asarray(noise, dtype=np.float64).copy()

    def predict_noise(self, z_t: np.ndarray, t: int, cond: Conditioning) -> np.ndarray:
        z_t = np.asarray(z_t)
        if z_t.shape != self.noise.shape:
            raise ValueError(
                f"latent shape {z_t.shape} does not match stored noise "
                f"{self.noise.shape}"
            )
        return self.noise.copy()


def default_feature_map(input_size: int, features: int | None = None, seed: int = 0) -> np.ndarray:
    """Seeded random feature map with spectral norm around 2."""
    features = features or input_size
    rng = np.random.default_rng(seed)
    return rng.standard_normal((features, input_size)) / np.sqrt(input_size)


class ToyAttributeScorer:
    """Quadratic feature-matching loss through a fixed linear map A.

    With the identity decode, loss(z0_hat) = mean((A x_hat - A x_tgt)^2)
    over feature rows, and the gradient at the latent is
    (2 / n_features) * A^T (A x_hat - A x_tgt), reshaped to latent shape.
    """

    concurrent_safe = True

    def __init__(
        self,
        feature_map: np.ndarray | None = None,
        codec: ToyCodec | None = None,
    ):
        if codec is None:
            codec = ToyCodec()
        if feature_map is None:
            feature_map = default_feature_map(int(np.prod(codec.image_shape)))
        feature_map = np.asarray(feature_map, dtype=np.float64)
        if feature_map.ndim != 2:
            raise ValueError("feature map must be a 2-D matrix")
        expected = int(np.prod(codec.image_shape))
        if feature_map.shape[1] != expected:
            raise ValueError(
                f"feature map expects {feature_map.shape[1]} inputs, "
                f"image has {expected} pixels"
            )
        self.feature_map = feature_map
        self.codec = codec

    def loss_and_grad(
        self, z0_hat: np.ndarray, target_image: np.ndarray
    ) -> tuple[float, np.ndarray]:
        z0_hat = np.asarray(z0_hat, dtype=np.float64)
        target_image = np.asarray(target_image, dtype=np.float64)
        if target_image.shape != self.codec.image_shape:
            raise ValueError(
                f"target shape {target_image.shape} does not match image "
                f"shape {self.codec.image_shape}"
            )
        x_hat = self.codec.decode(z0_hat)
        a = self.feature_map
        residual = a @ x_hat.ravel() - a @ target_image.ravel()
        n_features = a.shape[0]
        loss = float(residual @ residual) / n_features
        grad_image = (2.0 / n_features) * (a.T @ residual)
        return loss, grad_image.reshape(z0_hat.shape)


@dataclass(frozen=True)
class ToyFaceLayout:
    """Rectangles-per-label spec used to paint a synthetic parse map.

    Each rect is (label_name, row, col, height, width). Rectangles must
    stay inside the grid and must not overlap; unpainted pixels are
    background.
    """

    height: int
    width: int
    rects: tuple[tuple[str, int, int, int, int], ...]
    label_map: LabelMap = field(default_factory=LabelMap)

    def __post_init__(self):
        claimed = np.zeros((self.height, self.width), dtype=bool)
        for name, row, col, h, w in self.rects:
            if name not in self.label_map.names:
                raise ValueError(f"layout uses unknown label {name!r}")
            if h < 1 or w < 1:
                raise ValueError(f"rectangle for {name!r} has empty extent")
            if row < 0 or col < 0 or row + h > self.height or col + w > self.width:
                raise ValueError(f"rectangle for {name!r} falls outside the grid")
            cell = claimed[row : row + h, col : col + w]
            if cell.any():
                raise ValueError(f"rectangle for {name!r} overlaps an earlier one")
            cell[:] = True

    def paint(self) -> ParseMap:
        labels = np.full(
            (self.height, self.width), self.label_map.names["background"], dtype=np.int64
        )
        for name, row, col, h, w in self.rects:
            labels[row : row + h, col : col + w] = self.label_map.names[name]
        return ParseMap(labels=labels, num_labels=self.label_map.num_labels)


def default_toy_layout() -> ToyFaceLayout:
    """8x8 face: hair on top, background at the bottom, features between."""
    return ToyFaceLayout(
        height=8,
        width=8,
        rects=(
            ("hair", 0, 0, 1, 8),
            ("skin", 1, 0, 1, 1),
            ("l_brow", 1, 1, 1, 2),
            ("skin", 1, 3, 1, 2),
            ("r_brow", 1, 5, 1, 2),
            ("skin", 1, 7, 1, 1),
            ("skin", 2, 0, 1, 1),
            ("l_eye", 2, 1, 1, 2),
            ("skin", 2, 3, 1, 2),
            ("r_eye", 2, 5, 1, 2),
            ("skin", 2, 7, 1, 1),
            ("skin", 3, 0, 2, 3),
            ("nose", 3, 3, 2, 2),
            ("skin", 3, 5, 2, 3),
            ("skin", 5, 0, 1, 2),
            ("u_lip", 5, 2, 1, 4),
            ("skin", 5, 6, 1, 2),
            ("skin", 6, 0, 1, 2),
            ("mouth", 6, 2, 1, 2),
            ("l_lip", 6, 4, 1, 2),
            ("skin", 6, 6, 1, 2),
        ),
    )


class ToyFaceParser:
    """Returns the layout's parse map for any image of matching size."""

    concurrent_safe = True

    def __init__(self, layout: ToyFaceLayout | None = None):
        self.layout = layout or default_toy_layout()
        self._parse = self.layout.paint()

    def parse(self, image: np.ndarray) -> ParseMap:
        image = np.asarray(image)
        if image.shape != (self.layout.height, self.layout.width):
            raise ValueError(
                f"image shape {image.shape} does not match layout "
                f"({self.layout.height}, {self.layout.width})"
            )
        return self._parse


class ToyIdentityEmbedder:
    """Fixed random projection of the flattened image.

    A trailing constant component keeps the embedding norm bounded away
    from zero for every input, including the all-zero image.
    """

    concurrent_safe = True

    def __init__(self, image_shape: tuple[int, int] = (8, 8), dim: int = 16, seed: int = 7):
        self.image_shape = tuple(image_shape)
        n = int(np.prod(image_shape))
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((dim, n)) / np.sqrt(n)

    def embed(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.image_shape:
            raise ValueError(
                f"expected image shape {self.image_shape}, got {image.shape}"
            )
        return np.concatenate([self.projection @ image.ravel(), [1.0]])


class CountingDenoiser:
    """Delegating wrapper that counts predict_noise calls."""

    def __init__(self, inner):
        self.inner = inner
        self.concurrent_safe = inner.concurrent_safe
        self.calls = 0

    def predict_noise(self, z_t, t, cond):
        self.calls += 1
        return self.inner.predict_noise(z_t, t, cond)


class CountingScorer:
    """Delegating wrapper that counts loss_and_grad calls."""

    def __init__(self, inner):
        self.inner = inner
        self.concurrent_safe = inner.concurrent_safe
        self.calls = 0

    def loss_and_grad(self, z0_hat, target_image):
        self.calls += 1
        return self.inner.loss_and_grad(z0_hat, target_image)
