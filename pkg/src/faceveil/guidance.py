"""Adaptive attribute guidance.

Each reverse step gets a correction M_t = w_t * grad, where grad is the
attribute-loss gradient at the current clean estimate and w_t = lambda
* sigma_t ties the guidance strength to the sampler's own noise level:
large corrections early, vanishing corrections as sigma_t -> 0. The
correction is subtracted from the proposed previous latent.

The weight is formed before it touches the gradient, so scaling lambda
by k scales the whole term by exactly k (one scorer call, outputs
scaled), and a zero weight yields an exactly-zero term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends.contracts import AttributeScorer


@dataclass(frozen=True)
class GuidanceTerm:
    """One step's correction grid plus the loss and weight behind it."""

    values: np.ndarray
    loss: float
    weight: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("guidance values must be finite")
        if not np.isfinite(self.loss):
            raise ValueError("guidance loss must be finite")
        if self.loss == 0.0 and np.any(values != 0.0):
            raise ValueError("zero loss must produce a zero correction")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def guidance_term(
    z_tilde0: np.ndarray,
    target_image: np.ndarray,
    sigma_t: float,
    strength: float,
    scorer: AttributeScorer,
    max_grad_norm: float | None = None,
) -> GuidanceTerm:
    """Evaluate the scorer once at the clean estimate and weight its
    gradient by strength * sigma_t.

    `max_grad_norm`, when given, rescales the raw gradient to that
    L2 norm if it exceeds it. Off by default: the reference algorithm
    applies the gradient unnormalized and unclipped.
    """
    if strength < 0.0:
        raise ValueError(f"guidance strength must be >= 0, got {strength}")
    if sigma_t < 0.0:
        raise ValueError(f"sigma_t must be >= 0, got {sigma_t}")
    loss, grad = scorer.loss_and_grad(z_tilde0, target_image)
    grad = np.asarray(grad, dtype=np.float64)
    if max_grad_norm is not None:
        norm = float(np.linalg.norm(grad))
        if norm > max_grad_norm:
            grad = grad * (max_grad_norm / norm)
    weight = strength * sigma_t
    if weight == 0.0:
        # Materialized +0.0 rather than 0.0 * grad: keeps the signs of
        # zeros positive so subtracting the term never flips a bit.
        values = np.zeros_like(grad)
    else:
        values = weight * grad
    return GuidanceTerm(values=values, loss=float(loss), weight=weight)


def apply_guidance(z_prev: np.ndarray, term: GuidanceTerm) -> np.ndarray:
    """Shift the proposed previous latent by the correction."""
    z_prev = np.asarray(z_prev)
    if z_prev.shape != term.values.shape:
        raise ValueError(
            f"latent shape {z_prev.shape} does not match correction "
            f"{term.values.shape}"
        )
    return z_prev - term.values
