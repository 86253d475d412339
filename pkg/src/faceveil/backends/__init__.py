from .contracts import (
    AttributeScorer,
    Conditioning,
    Denoiser,
    FaceParser,
    IdentityEmbedder,
    LatentCodec,
    LatentState,
)
from .toy import (
    CountingDenoiser,
    CountingScorer,
    FixedNoiseDenoiser,
    ToyAttributeScorer,
    ToyCodec,
    ToyDenoiser,
    ToyFaceLayout,
    ToyFaceParser,
    ToyIdentityEmbedder,
    broadcast_mean,
    default_feature_map,
    default_toy_layout,
)

__all__ = [
    "AttributeScorer",
    "Conditioning",
    "CountingDenoiser",
    "CountingScorer",
    "Denoiser",
    "FaceParser",
    "FixedNoiseDenoiser",
    "IdentityEmbedder",
    "LatentCodec",
    "LatentState",
    "ToyAttributeScorer",
    "ToyCodec",
    "ToyDenoiser",
    "ToyFaceLayout",
    "ToyFaceParser",
    "ToyIdentityEmbedder",
    "broadcast_mean",
    "default_feature_map",
    "default_toy_layout",
]
