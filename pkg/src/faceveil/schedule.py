"""Diffusion noise schedule and reverse-time step planning.

Timesteps are 1-based: t runs over 1..T, and t = 0 is the clean-data
boundary with abar(0) = 1. The forward marginal at step t is

    z_t = sqrt(abar_t) * z_0 + sqrt(1 - abar_t) * eps,

where abar_t is the running product of (1 - beta_s) for s <= t.

The reverse pass visits a strictly decreasing subsequence of 1..T.
For a transition t -> t_prev the per-step standard deviation is

    sigma = eta * sqrt((1 - abar_prev) / (1 - abar_t))
                * sqrt(1 - abar_t / abar_prev),

which is zero when eta = 0 and at the final transition into t_prev = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TRAIN_STEPS = 1000
DEFAULT_BETA_START = 0.00085
DEFAULT_BETA_END = 0.012
DEFAULT_BETA_KIND = "scaled_linear"
DEFAULT_REVERSE_STEPS = 45
DEFAULT_ETA = 1.0

BETA_KINDS = ("linear", "scaled_linear")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise rates beta_t and their running products abar_t.

    Immutable after construction; safe to share across samplers.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64).copy()
        abars = np.asarray(self.alpha_bars, dtype=np.float64).copy()
        if betas.ndim != 1 or abars.ndim != 1:
            raise ValueError("betas and alpha_bars must be 1-D")
        if betas.size == 0:
            raise ValueError("schedule must have at least one step")
        if betas.size != abars.size:
            raise ValueError(
                f"length mismatch: {betas.size} betas vs {abars.size} alpha_bars"
            )
        if not np.all((betas > 0.0) & (betas < 1.0)):
            raise ValueError("every beta must lie in (0, 1)")
        if not np.all((abars > 0.0) & (abars < 1.0)):
            raise ValueError("every alpha_bar must lie in (0, 1)")
        if not np.all(np.diff(abars) < 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        expected = np.cumprod(1.0 - betas)
        if not np.allclose(abars, expected, rtol=1e-12, atol=0.0):
            raise ValueError("alpha_bars must equal the running product of (1 - beta)")
        betas.flags.writeable = False
        abars.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", abars)

    @property
    def total_steps(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, t: int) -> float:
        """abar at step t, with the t = 0 clean boundary pinned to 1."""
        if not 0 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside 0..{self.total_steps}")
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


@dataclass(frozen=True)
class TimestepPlan:
    """Descending reverse-pass steps with the sigma for each transition.

    steps[i] transitions to steps[i + 1]; the final step transitions to 0.
    Immutable after construction.
    """

    steps: tuple[int, ...]
    eta: float
    sigmas: np.ndarray
    total_steps: int

    def __post_init__(self):
        steps = tuple(int(t) for t in self.steps)
        sigmas = np.asarray(self.sigmas, dtype=np.float64).copy()
        if len(steps) == 0:
            raise ValueError("plan must contain at least one step")
        if any(not 1 <= t <= self.total_steps for t in steps):
            raise ValueError(f"plan steps must lie in 1..{self.total_steps}")
        if any(a <= b for a, b in zip(steps, steps[1:])):
            raise ValueError("plan steps must be strictly decreasing")
        if self.eta < 0.0:
            raise ValueError("eta must be nonnegative")
        if sigmas.shape != (len(steps),):
            raise ValueError("one sigma per plan step required")
        if np.any(sigmas < 0.0):
            raise ValueError("sigmas must be nonnegative")
        if self.eta == 0.0 and np.any(sigmas != 0.0):
            raise ValueError("eta = 0 forces every sigma to 0")
        sigmas.flags.writeable = False
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "sigmas", sigmas)

    def __len__(self) -> int:
        return len(self.steps)

    def transitions(self):
        """Yield (t, t_prev, sigma) for each reverse transition in order."""
        for i, t in enumerate(self.steps):
            t_prev = self.steps[i + 1] if i + 1 < len(self.steps) else 0
            yield t, t_prev, float(self.sigmas[i])


def build_schedule(
    total_steps: int = DEFAULT_TRAIN_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
    kind: str = DEFAULT_BETA_KIND,
) -> NoiseSchedule:
    """Construct a noise schedule from an interpolated beta range.

    kind "linear" interpolates beta_t linearly in t; "scaled_linear"
    interpolates sqrt(beta_t) linearly (the latent-diffusion convention).
    """
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, total_steps)
    elif kind == "scaled_linear":
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), total_steps) ** 2
    else:
        raise ValueError(f"unknown schedule kind {kind!r}; expected one of {BETA_KINDS}")
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def sigma(schedule: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """Standard deviation for the reverse transition t -> t_prev.

    Zero exactly when eta = 0 or t_prev = 0 (abar_prev = 1); strictly
    positive otherwise.
    """
    if eta < 0.0:
        raise ValueError("eta must be nonnegative")
    if t_prev >= t:
        raise ValueError(f"t_prev ({t_prev}) must be smaller than t ({t})")
    if not 1 <= t <= schedule.total_steps:
        raise ValueError(f"step {t} outside 1..{schedule.total_steps}")
    if t_prev < 0:
        raise ValueError("t_prev must be >= 0")
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t_prev)
    return eta * math.sqrt((1.0 - abar_prev) / (1.0 - abar_t)) * math.sqrt(
        1.0 - abar_t / abar_prev
    )


def plan_timesteps(
    schedule: NoiseSchedule,
    num_steps: int = DEFAULT_REVERSE_STEPS,
    eta: float = DEFAULT_ETA,
) -> TimestepPlan:
    """Spread num_steps reverse steps uniformly over 1..T, largest first.

    Uses leading spacing with stride T // num_steps, so the plan always
    reaches step 1 and ends with the deterministic transition into t = 0.
    """
    total = schedule.total_steps
    if not 1 <= num_steps <= total:
        raise ValueError(f"num_steps must lie in 1..{total}, got {num_steps}")
    stride = total // num_steps
    steps = tuple(1 + stride * i for i in reversed(range(num_steps)))
    sigmas = np.array(
        [
            sigma(schedule, t, steps[i + 1] if i + 1 < num_steps else 0, eta)
            for i, t in enumerate(steps)
        ]
    )
    return TimestepPlan(steps=steps, eta=eta, sigmas=sigmas, total_steps=total)
