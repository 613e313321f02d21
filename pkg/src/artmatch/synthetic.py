"""Synthetic separable corpus for end-to-end smoke tests.

Samples come from a small number of latent classes. Comments mix shared
class-template words with per-sample noise words; image features are the
class centroid plus Gaussian noise. Texts and images from one sample
therefore share their class, while noise words and feature noise make
samples distinguishable within a class.
"""

from __future__ import annotations

import numpy as np

from .corpus import ArtworkTriplet, AttributeSet, Corpus
from .features import FeatureStore

_LETTERS = np.array(list("abcdefghijklmnopqrstuvwxyz"))


def _word(rng: np.random.Generator, length: int = 8) -> str:
    return "".join(rng.choice(_LETTERS, size=length))


def _unique_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    words = []
    while len(words) < count:
        w = _word(rng)
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def make_synthetic_corpus(
    n_samples: int = 256,
    n_classes: int = 8,
    feature_dim: int = 64,
    seed: int = 0,
    class_words: int = 4,
    noise_words: int = 3,
    feature_noise: float = 0.1,
) -> tuple[Corpus, FeatureStore]:
    """Build a class-separable corpus with aligned image features.

    Each comment carries the class template words plus `noise_words`
    fresh words never reused by another sample; each title carries one
    class word plus one fresh word. The sample's type attribute is the
    class name, so attribute-augmented training can target it.
    """
    if n_samples < n_classes:
        raise ValueError("need at least one sample per class")
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    class_names = _unique_words(rng, n_classes, taken)
    templates = [_unique_words(rng, class_words, taken) for _ in range(n_classes)]

    centroids = rng.normal(size=(n_classes, feature_dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)

    samples = []
    store = FeatureStore(dim=feature_dim)
    for k in range(n_samples):
        cls = k % n_classes
        sample_id = f"sample{k:04d}"
        fresh = _unique_words(rng, noise_words + 1, taken)
        comment_tokens = list(templates[cls]) + fresh[:noise_words]
        rng.shuffle(comment_tokens)
        title = f"{templates[cls][0]} {fresh[noise_words]}"
        samples.append(
            ArtworkTriplet(
                id=sample_id,
                image_ref=sample_id,
                comment=" ".join(comment_tokens),
                attributes=AttributeSet(
                    author=f"author{cls % 4}",
                    title=title,
                    date="",
                    technique="oil on canvas",
                    type_=class_names[cls],
                    school=f"school{cls % 3}",
                    timeframe=f"tf{cls % 2}",
                ),
            )
        )
        store.add(sample_id, centroids[cls] + feature_noise * rng.normal(size=feature_dim))
    return Corpus(tuple(samples)), store
