"""Extraction manifests: which backbone, which images, how to preprocess."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

# Output dimension per backbone tap point.
BACKBONE_DIMS = {
    "vgg16_fc1": 4096,
    "vgg16_fc2": 4096,
    "vgg16_fc3": 1000,
    "resnet50": 1000,
    "resnet152": 1000,
    "conv_map": 512,  # VGG16 last conv layer channels (maps are 512 x 14 x 14)
}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class Preprocess:
    """Deterministic export-time pipeline: resize then center crop."""

    resize: int = 256
    crop: int = 224
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD


@dataclass
class ExtractionManifest:
    backbone: str
    images: list[tuple[str, str]]  # (id, image path)
    dim: int | None = None
    preprocess: Preprocess = field(default_factory=Preprocess)

    def __post_init__(self):
        if self.backbone not in BACKBONE_DIMS:
            raise ValueError(
                f"unknown backbone {self.backbone!r}; expected one of {sorted(BACKBONE_DIMS)}"
            )
        expected = BACKBONE_DIMS[self.backbone]
        if self.dim is None:
            self.dim = expected
        elif self.dim != expected:
            raise ValueError(
                f"manifest dim {self.dim} contradicts {self.backbone} output dim {expected}"
            )
        if not self.images:
            raise ValueError("manifest lists no images")
        ids = [i for i, _ in self.images]
        if len(ids) != len(set(ids)):
            raise ValueError("manifest image ids must be unique")


def load_manifest(path) -> ExtractionManifest:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    pp = raw.get("preprocess", {})
    preprocess = Preprocess(
        resize=int(pp.get("resize", 256)),
        crop=int(pp.get("crop", 224)),
        mean=tuple(pp.get("mean", IMAGENET_MEAN)),
        std=tuple(pp.get("std", IMAGENET_STD)),
    )
    images = [(entry["id"], entry["path"]) for entry in raw["images"]]
    return ExtractionManifest(
        backbone=raw["backbone"],
        images=images,
        dim=raw.get("dim"),
        preprocess=preprocess,
    )
