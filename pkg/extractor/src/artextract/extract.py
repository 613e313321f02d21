"""Run images through a pretrained backbone and dump SEMF files."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image

from .manifest import ExtractionManifest, Preprocess
from .semf import write_conv_maps, write_vectors


def build_backbone(name: str, pretrained: bool = True, seed: int = 0) -> torch.nn.Module:
    """Construct the requested tap point as a single eval-mode module."""
    from torchvision import models

    if not pretrained:
        torch.manual_seed(seed)
    weights = "IMAGENET1K_V1" if pretrained else None

    if name.startswith("vgg16") or name == "conv_map":
        vgg = models.vgg16(weights=weights)
        if name == "conv_map":
            # last conv layer activations, before the final max pool
            module = vgg.features[:-1]
        else:
            cut = {"vgg16_fc1": 1, "vgg16_fc2": 4, "vgg16_fc3": 7}[name]
            module = torch.nn.Sequential(
                vgg.features,
                vgg.avgpool,
                torch.nn.Flatten(1),
                vgg.classifier[:cut],
            )
    elif name == "resnet50":
        module = models.resnet50(weights=weights)
    elif name == "resnet152":
        module = models.resnet152(weights=weights)
    else:
        raise ValueError(f"unknown backbone {name!r}")
    module.eval()
    return module


def preprocess_image(path, pp: Preprocess) -> torch.Tensor:
    """Resize to pp.resize per side, center-crop pp.crop, normalize.

    The crop is deterministic: random crops and flips are training-time
    augmentation and have no place in feature export.
    """
    with Image.open(path) as img:
        img = img.convert("RGB").resize((pp.resize, pp.resize), Image.BILINEAR)
        left = (pp.resize - pp.crop) // 2
        img = img.crop((left, left, left + pp.crop, left + pp.crop))
        array = np.asarray(img, dtype=np.float32) / 255.0
    array = (array - np.array(pp.mean, dtype=np.float32)) / np.array(pp.std, dtype=np.float32)
    return torch.from_numpy(array.transpose(2, 0, 1)).unsqueeze(0)


@dataclass
class ExtractionReport:
    extracted: list[str] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)


def extract(
    manifest: ExtractionManifest,
    out_path,
    pretrained: bool = True,
    seed: int = 0,
) -> ExtractionReport:
    """Encode every readable manifest image and write the output file.

    Vector backbones write a version-1 SEMF file; the conv_map backbone
    writes the version-2 conv-map variant. Unreadable images are skipped
    and reported, never written.
    """
    module = build_backbone(manifest.backbone, pretrained=pretrained, seed=seed)
    report = ExtractionReport()
    records: list[tuple[str, np.ndarray]] = []

    conv_shape = None
    with torch.no_grad():
        for image_id, path in manifest.images:
            try:
                batch = preprocess_image(path, manifest.preprocess)
            except (OSError, ValueError) as exc:
                report.skipped.append((image_id, f"{path}: {exc}"))
                continue
            output = module(batch)[0].numpy().astype(np.float32)
            if manifest.backbone == "conv_map":
                conv_shape = output.shape
            else:
                output = output.reshape(-1)
            records.append((image_id, output))
            report.extracted.append(image_id)

    if manifest.backbone == "conv_map":
        if not records:
            raise RuntimeError("no images could be read; nothing to write")
        write_conv_maps(out_path, conv_shape, records)
    else:
        write_vectors(out_path, manifest.dim, records)
    return report
