"""Binary editable-region masks derived from semantic face parse maps.

A parse map labels every pixel with one of 19 semantic classes (the
CelebAMask-HQ convention). The full-face mask marks the union of the
facial classes as editable (1) and everything else (background, hair,
ears, neck, accessories) as preserved (0). Localized masks subtract
named region groups (eyes, lips, nose, eyebrows) from the full-face
mask so those pixels survive anonymization untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from PIL import Image
from scipy import ndimage

# CelebAMask-HQ label indices.
CELEBAMASK_LABELS: Mapping[str, int] = {
    "background": 0,
    "skin": 1,
    "l_brow": 2,
    "r_brow": 3,
    "l_eye": 4,
    "r_eye": 5,
    "eye_g": 6,
    "l_ear": 7,
    "r_ear": 8,
    "ear_r": 9,
    "nose": 10,
    "mouth": 11,
    "u_lip": 12,
    "l_lip": 13,
    "neck": 14,
    "neck_l": 15,
    "cloth": 16,
    "hair": 17,
    "hat": 18,
}

# Editable facial classes. Hair, ears, neck, clothing, headwear and
# eyeglasses (an accessory) are preserved.
DEFAULT_FACE_LABELS = (
    "skin",
    "l_brow",
    "r_brow",
    "l_eye",
    "r_eye",
    "nose",
    "mouth",
    "u_lip",
    "l_lip",
)

DEFAULT_REGIONS: Mapping[str, tuple[str, ...]] = {
    "eyes": ("l_eye", "r_eye"),
    "lips": ("u_lip", "l_lip", "mouth"),
    "nose": ("nose",),
    "eyebrows": ("l_brow", "r_brow"),
}


@dataclass(frozen=True)
class LabelMap:
    """Names of parse labels, the editable face set, and region groups."""

    names: Mapping[str, int] = field(default_factory=lambda: dict(CELEBAMASK_LABELS))
    face: tuple[str, ...] = DEFAULT_FACE_LABELS
    regions: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_REGIONS)
    )

    def __post_init__(self):
        for name in self.face:
            if name not in self.names:
                raise ValueError(f"face label {name!r} missing from label map")
        for region, members in self.regions.items():
            if not members:
                raise ValueError(f"region {region!r} resolves to no labels")
            for name in members:
                if name not in self.names:
                    raise ValueError(
                        f"region {region!r} uses unknown label {name!r}"
                    )

    @property
    def num_labels(self) -> int:
        return max(self.names.values()) + 1

    def face_indices(self) -> frozenset[int]:
        return frozenset(self.names[n] for n in self.face)

    def region_indices(self, region: str) -> frozenset[int]:
        if region not in self.regions:
            raise ValueError(
                f"unknown region {region!r}; known regions: {sorted(self.regions)}"
            )
        return frozenset(self.names[n] for n in self.regions[region])


def load_label_map(path: str | Path) -> LabelMap:
    """Read a label map from a JSON text config.

    Schema: {"labels": {name: index}, "face": [names], "regions":
    {region: [names]}}; "face" and "regions" fall back to the defaults.
    """
    raw = json.loads(Path(path).read_text())
    names = {str(k): int(v) for k, v in raw["labels"].items()}
    face = tuple(raw.get("face", DEFAULT_FACE_LABELS))
    regions = {k: tuple(v) for k, v in raw.get("regions", DEFAULT_REGIONS).items()}
    return LabelMap(names=names, face=face, regions=regions)


@dataclass(frozen=True)
class ParseMap:
    """Per-pixel semantic labels for one face image."""

    labels: np.ndarray
    num_labels: int = 19

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("parse map must be 2-D")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("parse labels must be integers")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_labels):
            raise ValueError(f"labels must lie in 0..{self.num_labels - 1}")
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class FaceMask:
    """Strictly binary editable-region mask; 1 = editable, 0 = preserved."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise ValueError("mask must be 2-D")
        if mask.dtype != np.bool_:
            values = np.unique(mask)
            if not np.all(np.isin(values, (0, 1))):
                raise ValueError("mask values must be binary")
            mask = mask.astype(bool)
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    def editable_fraction(self) -> float:
        return float(self.mask.mean())


def full_face_mask(parse: ParseMap, label_map: LabelMap | None = None) -> FaceMask:
    """Editable mask covering every pixel whose label is in the face set."""
    label_map = label_map or LabelMap()
    face = np.fromiter(label_map.face_indices(), dtype=np.int64)
    return FaceMask(np.isin(parse.labels, face))


def localized_mask(
    parse: ParseMap,
    keep: Iterable[str],
    label_map: LabelMap | None = None,
) -> FaceMask:
    """Full-face mask minus every region named in `keep`.

    Kept regions stay preserved (0), so the result is always a pointwise
    subset of the full-face mask.
    """
    label_map = label_map or LabelMap()
    mask = full_face_mask(parse, label_map).mask.copy()
    for region in keep:
        indices = np.fromiter(label_map.region_indices(region), dtype=np.int64)
        mask &= ~np.isin(parse.labels, indices)
    return FaceMask(mask)


def apply_mask(image: np.ndarray, mask: FaceMask) -> np.ndarray:
    """Zero the editable region: original outside the mask, 0 inside."""
    image = np.asarray(image)
    if image.shape != mask.mask.shape:
        raise ValueError(
            f"image shape {image.shape} does not match mask shape {mask.mask.shape}"
        )
    out = image.copy()
    out[mask.mask] = 0
    return out


def composite(
    original: np.ndarray, generated: np.ndarray, mask: FaceMask
) -> np.ndarray:
    """Generated inside the mask, original outside, by exact selection."""
    original = np.asarray(original)
    generated = np.asarray(generated)
    if original.shape != generated.shape or original.shape != mask.mask.shape:
        raise ValueError(
            f"shape mismatch: original {original.shape}, generated "
            f"{generated.shape}, mask {mask.mask.shape}"
        )
    out = original.copy()
    out[mask.mask] = generated[mask.mask]
    return out


def dilate_mask(mask: FaceMask, radius: int) -> FaceMask:
    """Grow the editable region by a disk of the given pixel radius."""
    if radius < 0:
        raise ValueError("dilation radius must be nonnegative")
    if radius == 0:
        return mask
    span = np.arange(-radius, radius + 1)
    disk = span[:, None] ** 2 + span[None, :] ** 2 <= radius**2
    return FaceMask(ndimage.binary_dilation(mask.mask, structure=disk))


def save_parse_map(path: str | Path, parse: ParseMap) -> None:
    """Write labels as a single-channel 8-bit image, pixel value = label."""
    Image.fromarray(parse.labels.astype(np.uint8), mode="L").save(path)


def load_parse_map(path: str | Path, num_labels: int = 19) -> ParseMap:
    labels = np.asarray(Image.open(path).convert("L"), dtype=np.int64)
    return ParseMap(labels=labels, num_labels=num_labels)


def save_mask(path: str | Path, mask: FaceMask) -> None:
    """Write the mask as a single-channel image with values {0, 255}."""
    Image.fromarray(mask.mask.astype(np.uint8) * 255, mode="L").save(path)


def load_mask(path: str | Path) -> FaceMask:
    raw = np.asarray(Image.open(path).convert("L"))
    values = np.unique(raw)
    if not np.all(np.isin(values, (0, 255))):
        raise ValueError(f"mask image must contain only {{0, 255}}, got {values}")
    return FaceMask(raw == 255)
