"""Shared conformance checks every backend implementation must pass.

Each check raises `ConformanceError` with a specific message on
failure, so the same suite can gate toy backends, remote adapters, and
future plugins. The scorer gradient is validated against central finite
differences, an oracle independent of however the implementation
computes its gradient. The toy backend must meet `rel_tol=1e-5`; real
adapters (float32 weights, nonlinear feature stacks) may document and
pass a looser tolerance.
"""

from __future__ import annotations

import numpy as np

from .contracts import (
    AttributeScorer,
    Conditioning,
    Denoiser,
    FaceParser,
    IdentityEmbedder,
    LatentCodec,
)


class ConformanceError(AssertionError):
    """A backend implementation violated its contract."""


def finite_difference_grad(fn, z: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a latent grid."""
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    flat = grad.ravel()
    base = z.copy()
    for i in range(z.size):
        probe = base.ravel().copy()
        probe[i] += step
        hi = fn(probe.reshape(z.shape))
        probe[i] -= 2.0 * step
        lo = fn(probe.reshape(z.shape))
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def check_codec(codec: LatentCodec, rng: np.random.Generator, recon_tol: float = 0.0):
    """Shape declarations, determinism, and the decode(encode(x)) round trip."""
    image = rng.standard_normal(codec.image_shape)
    latent = codec.encode(image)
    if latent.shape != codec.latent_shape:
        raise ConformanceError(
            f"encode produced {latent.shape}, declared {codec.latent_shape}"
        )
    if not np.all(np.isfinite(latent)):
        raise ConformanceError("encode produced non-finite values")
    if not np.array_equal(latent, codec.encode(image)):
        raise ConformanceError("encode is not deterministic")
    recon = codec.decode(latent)
    if recon.shape != codec.image_shape:
        raise ConformanceError(
            f"decode produced {recon.shape}, declared {codec.image_shape}"
        )
    err = float(np.max(np.abs(recon - image)))
    if err > recon_tol:
        raise ConformanceError(
            f"reconstruction error {err} exceeds declared tolerance {recon_tol}"
        )


def check_denoiser(
    denoiser: Denoiser,
    latent_shape: tuple[int, ...],
    timesteps: tuple[int, ...],
    cond: Conditioning,
    rng: np.random.Generator,
):
    """Shape preservation, finiteness, determinism over a few timesteps."""
    for t in timesteps:
        z_t = rng.standard_normal(latent_shape)
        eps = denoiser.predict_noise(z_t, t, cond)
        if eps.shape != z_t.shape:
            raise ConformanceError(
                f"predict_noise at t={t} produced {eps.shape}, expected {z_t.shape}"
            )
        if not np.all(np.isfinite(eps)):
            raise ConformanceError(f"predict_noise at t={t} produced non-finite values")
        if not np.array_equal(eps, denoiser.predict_noise(z_t, t, cond)):
            raise ConformanceError(f"predict_noise at t={t} is not deterministic")


def check_scorer(
    scorer: AttributeScorer,
    latent_shape: tuple[int, ...],
    target_image: np.ndarray,
    rng: np.random.Generator,
    rel_tol: float = 1e-5,
    trials: int = 3,
    fd_step: float = 1e-6,
):
    """Loss sign, gradient shape, determinism, and the finite-difference check.

    Adapters that quantize the wire to float32 need a probe step well
    above the quantization floor (1e-3 works) and a matching rel_tol.
    """
    for _ in range(trials):
        z = rng.standard_normal(latent_shape)
        loss, grad = scorer.loss_and_grad(z, target_image)
        if loss < 0.0:
            raise ConformanceError(f"loss must be nonnegative, got {loss}")
        if grad.shape != z.shape:
            raise ConformanceError(
                f"gradient shape {grad.shape} does not match latent {z.shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise ConformanceError("gradient has non-finite values")
        loss2, grad2 = scorer.loss_and_grad(z, target_image)
        if loss2 != loss or not np.array_equal(grad, grad2):
            raise ConformanceError("loss_and_grad is not deterministic")
        fd = finite_difference_grad(
            lambda q: scorer.loss_and_grad(q, target_image)[0], z,
            step=fd_step,
        )
        scale = max(float(np.max(np.abs(fd))), 1e-12)
        rel_err = float(np.max(np.abs(grad - fd))) / scale
        if rel_err > rel_tol:
            raise ConformanceError(
                f"gradient deviates from finite differences: rel err {rel_err:.3g} "
                f"> {rel_tol:.3g}"
            )


def check_zero_loss_zero_grad(
    scorer: AttributeScorer, codec: LatentCodec, image: np.ndarray
):
    """Scoring a latent against its own decode must yield loss 0, grad 0."""
    z = codec.encode(image)
    loss, grad = scorer.loss_and_grad(z, codec.decode(z))
    if loss != 0.0:
        raise ConformanceError(f"self-target loss must be 0, got {loss}")
    if np.any(grad != 0.0):
        raise ConformanceError("self-target gradient must vanish")


def check_parser(parser: FaceParser, image: np.ndarray):
    parse = parser.parse(image)
    if (parse.height, parse.width) != image.shape:
        raise ConformanceError(
            f"parse map {(parse.height, parse.width)} does not match image "
            f"{image.shape}"
        )


def check_embedder(embedder: IdentityEmbedder, image: np.ndarray):
    vec = embedder.embed(image)
    if vec.ndim != 1:
        raise ConformanceError("embedding must be a 1-D vector")
    if not np.all(np.isfinite(vec)):
        raise ConformanceError("embedding has non-finite values")
    if float(np.linalg.norm(vec)) == 0.0:
        raise ConformanceError("embedding norm must be nonzero")
    if not np.array_equal(vec, embedder.embed(image)):
        raise ConformanceError("embed is not deterministic")
