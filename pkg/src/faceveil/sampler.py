"""Guided inpainting sampler.

The loop is plain DDIM with one extra move per step. Starting from the
clean source latent, forward-noise to the top of the schedule, then
walk the timestep plan down: predict noise once per step, form the
clean estimate, take the stochastic reverse step, and subtract the
attribute-guidance correction weighted by the current sigma.

Reproducibility contract: one Generator drives a run, and the draw
order is fixed: the forward-noising epsilon first, then exactly one
per-step epsilon for every transition in the plan, drawn even when
sigma is zero so that runs differing only in eta or guidance settings
consume an identical stream. Identical inputs and seed give
bitwise-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends.contracts import AttributeScorer, Conditioning, Denoiser
from .guidance import apply_guidance, guidance_term
from .schedule import (
    DEFAULT_ETA,
    NoiseSchedule,
    TimestepPlan,
    sigma as compute_sigma,
)

DEFAULT_GUIDANCE_STRENGTH = 0.8


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for one anonymization run.

    guidance_strength is the lambda trade-off: 0 reduces the loop to
    vanilla sampling bit for bit. guidance_cutoff, when set, stops
    applying (and evaluating) guidance once t drops below it; the
    reference algorithm guides every step, so the default is None.
    """

    guidance_strength: float = DEFAULT_GUIDANCE_STRENGTH
    eta: float = DEFAULT_ETA
    seed: int = 0
    guidance_enabled: bool = True
    guidance_cutoff: int | None = None
    max_grad_norm: float | None = None

    def __post_init__(self):
        if self.guidance_strength < 0.0:
            raise ValueError(
                f"guidance strength must be >= 0, got {self.guidance_strength}"
            )
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.guidance_cutoff is not None and self.guidance_cutoff < 0:
            raise ValueError("guidance cutoff must be >= 0")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0.0:
            raise ValueError("max grad norm must be positive")


@dataclass(frozen=True)
class StepTrace:
    """Per-step record: transition taken, attribute loss seen (None
    when guidance was off for the step), the guidance weight, and the
    applied correction grid."""

    t: int
    t_prev: int
    sigma: float
    loss: float | None
    weight: float
    term: np.ndarray | None = None


def forward_noise(
    z0: np.ndarray, schedule: NoiseSchedule, t: int, epsilon: np.ndarray
) -> np.ndarray:
    """Noise a clean latent to timestep t in one jump."""
    z0 = np.asarray(z0, dtype=np.float64)
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if epsilon.shape != z0.shape:
        raise ValueError(
            f"noise shape {epsilon.shape} does not match latent {z0.shape}"
        )
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"t must be in 1..{schedule.total_steps}, got {t}")
    alpha_bar = schedule.alpha_bar(t)
    return np.sqrt(alpha_bar) * z0 + np.sqrt(1.0 - alpha_bar) * epsilon


def estimate_clean(
    z_t: np.ndarray, t: int, eps_hat: np.ndarray, schedule: NoiseSchedule
) -> np.ndarray:
    """Invert the forward map at t using the predicted noise."""
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if eps_hat.shape != z_t.shape:
        raise ValueError(
            f"noise shape {eps_hat.shape} does not match latent {z_t.shape}"
        )
    if t < 1:
        raise ValueError("clean estimate is undefined at t = 0")
    if t > schedule.total_steps:
        raise ValueError(f"t must be in 1..{schedule.total_steps}, got {t}")
    alpha_bar = schedule.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha_bar)


def reverse_step(
    z_t: np.ndarray,
    t: int,
    t_prev: int,
    eps_hat: np.ndarray,
    z_tilde0: np.ndarray,
    sigma_t: float,
    epsilon: np.ndarray,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """One stochastic DDIM transition t -> t_prev (t_prev may be 0)."""
    z_t = np.asarray(z_t, dtype=np.float64)
    for name, arr in (("eps_hat", eps_hat), ("z_tilde0", z_tilde0),
                      ("epsilon", epsilon)):
        if np.asarray(arr).shape != z_t.shape:
            raise ValueError(f"{name} shape does not match z_t {z_t.shape}")
    if not 0 <= t_prev < t:
        raise ValueError(f"need 0 <= t_prev < t, got t={t} t_prev={t_prev}")
    if sigma_t < 0.0:
        raise ValueError(f"sigma_t must be >= 0, got {sigma_t}")
    alpha_bar_prev = schedule.alpha_bar(t_prev)
    radicand = 1.0 - alpha_bar_prev - sigma_t * sigma_t
    if radicand < 0.0:
        # The exact sigma formula can land a hair below zero in floats.
        if radicand < -1e-12:
            raise ValueError(
                f"sigma_t={sigma_t} too large for transition {t}->{t_prev}"
            )
        radicand = 0.0
    return (
        np.sqrt(alpha_bar_prev) * np.asarray(z_tilde0, dtype=np.float64)
        + np.sqrt(radicand) * np.asarray(eps_hat, dtype=np.float64)
        + sigma_t * np.asarray(epsilon, dtype=np.float64)
    )


def _check_plan(plan: TimestepPlan, schedule: NoiseSchedule):
    if plan.total_steps != schedule.total_steps:
        raise ValueError(
            f"plan was built for {plan.total_steps} training steps, "
            f"schedule has {schedule.total_steps}"
        )
    for t, t_prev, sig in plan.transitions():
        expected = compute_sigma(schedule, t, t_prev, plan.eta)
        if sig != expected:
            raise ValueError(
                f"plan sigma at {t}->{t_prev} is {sig}, schedule gives "
                f"{expected}; plan and schedule do not match"
            )


def anonymize_latent(
    z0: np.ndarray,
    cond: Conditioning,
    target_image: np.ndarray | None,
    plan: TimestepPlan,
    schedule: NoiseSchedule,
    denoiser: Denoiser,
    scorer: AttributeScorer | None,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    trace: list[StepTrace] | None = None,
) -> np.ndarray:
    """Run the full guided loop and return the anonymized clean latent.

    Per step there is exactly one denoiser call, reused for both the
    clean estimate and the transition, and (guidance on, no cutoff)
    exactly one scorer call. Pass `trace` to collect per-step records.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    _check_plan(plan, schedule)
    if config.guidance_enabled:
        if scorer is None:
            raise ValueError("guidance is enabled but no scorer was given")
        if target_image is None:
            raise ValueError("guidance is enabled but no target image was given")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    eps_forward = rng.standard_normal(z0.shape)
    z = forward_noise(z0, schedule, schedule.total_steps, eps_forward)

    for t, t_prev, sigma_t in plan.transitions():
        eps_hat = denoiser.predict_noise(z, t, cond)
        z_tilde0 = estimate_clean(z, t, eps_hat, schedule)
        eps_step = rng.standard_normal(z.shape)
        z_next = reverse_step(
            z, t, t_prev, eps_hat, z_tilde0, sigma_t, eps_step, schedule
        )
        guide_now = config.guidance_enabled and (
            config.guidance_cutoff is None or t >= config.guidance_cutoff
        )
        if guide_now:
            term = guidance_term(
                z_tilde0,
                target_image,
                sigma_t,
                config.guidance_strength,
                scorer,
                max_grad_norm=config.max_grad_norm,
            )
            z_next = apply_guidance(z_next, term)
            if trace is not None:
                trace.append(
                    StepTrace(
                        t, t_prev, sigma_t, term.loss, term.weight,
                        term.values,
                    )
                )
        elif trace is not None:
            trace.append(StepTrace(t, t_prev, sigma_t, None, 0.0))
        z = z_next
    return z
