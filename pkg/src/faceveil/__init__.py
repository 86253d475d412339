"""Face anonymization by guided resampling of a diffusion latent.

The package is organized around five pluggable model contracts
(codec, denoiser, attribute scorer, face parser, identity embedder)
with a fully analytic toy backend for exact verification, a DDIM-style
sampler with adaptive attribute guidance, parse-map masking, and an
evaluation suite (Re-ID rate, SSIM, Fréchet distance).
"""

from .guidance import GuidanceTerm, apply_guidance, guidance_term
from .masking import FaceMask, LabelMap, ParseMap
from .sampler import SamplerConfig, anonymize_latent
from .schedule import NoiseSchedule, TimestepPlan, build_schedule, plan_timesteps

__version__ = "0.1.0"

__all__ = [
    "FaceMask",
    "GuidanceTerm",
    "LabelMap",
    "NoiseSchedule",
    "ParseMap",
    "SamplerConfig",
    "TimestepPlan",
    "anonymize_latent",
    "apply_guidance",
    "build_schedule",
    "guidance_term",
    "plan_timesteps",
    "__version__",
]
