"""Model contracts the sampler and pipeline depend on.

The core algorithm never imports pretrained-model code. It talks to
five pluggable backends through these contracts: a latent codec
(encode/decode), a conditional denoiser, an attribute scorer returning
a feature-matching loss and its gradient, a face parser, and an
identity embedder for evaluation. The toy module implements all five
analytically; real weights live behind adapter processes speaking the
wire protocol in `faceveil.backends.wire`.

Every implementation declares `concurrent_safe`; the pipeline
serializes calls to any backend that declares single-threaded
inference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ..masking import ParseMap


@dataclass(frozen=True)
class Conditioning:
    """Opaque denoiser conditioning: the encoded masked image, plus an
    optional editable-region mask channel at latent resolution."""

    latent: np.ndarray
    mask: np.ndarray | None = None


@dataclass(frozen=True)
class LatentState:
    """A latent grid together with its timestep index (0 = clean)."""

    values: np.ndarray
    t: int

    def __post_init__(self):
        values = np.asarray(self.values)
        if not np.all(np.isfinite(values)):
            raise ValueError("latent values must be finite")
        if self.t < 0:
            raise ValueError("timestep index must be >= 0")
        object.__setattr__(self, "values", values)


@runtime_checkable
class LatentCodec(Protocol):
    """Image <-> latent transform; decode(encode(x)) must reconstruct x
    within the implementation's declared tolerance."""

    image_shape: tuple[int, int]
    latent_shape: tuple[int, int, int]
    concurrent_safe: bool

    def encode(self, image: np.ndarray) -> np.ndarray: ...

    def decode(self, latent: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class Denoiser(Protocol):
    """Predicts the noise content of a latent at timestep t, steered by
    the inpainting conditioning. Deterministic given identical inputs."""

    concurrent_safe: bool

    def predict_noise(
        self, z_t: np.ndarray, t: int, cond: Conditioning
    ) -> np.ndarray: ...


@runtime_checkable
class AttributeScorer(Protocol):
    """Feature-matching loss between the decoded clean-latent estimate
    and a target image, with its gradient taken at the latent.

    The loss is a mean squared error over feature dimensions, so it is
    nonnegative and zero exactly when the gradient vanishes. Adapters
    obtain the gradient by automatic differentiation through decode and
    feature extraction; the sampler never differentiates anything
    itself.
    """

    concurrent_safe: bool

    def loss_and_grad(
        self, z0_hat: np.ndarray, target_image: np.ndarray
    ) -> tuple[float, np.ndarray]: ...


@runtime_checkable
class FaceParser(Protocol):
    """Semantic face parser; output dimensions match the input image."""

    concurrent_safe: bool

    def parse(self, image: np.ndarray) -> ParseMap: ...


@runtime_checkable
class IdentityEmbedder(Protocol):
    """Maps an (aligned, cropped) face image to an identity vector."""

    concurrent_safe: bool

    def embed(self, image: np.ndarray) -> np.ndarray: ...
