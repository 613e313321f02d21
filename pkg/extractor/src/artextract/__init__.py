"""CNN feature extraction bridge for the artmatch retrieval engine."""

from .extract import ExtractionReport, build_backbone, extract, preprocess_image
from .manifest import BACKBONE_DIMS, ExtractionManifest, Preprocess, load_manifest

__version__ = "0.1.0"
