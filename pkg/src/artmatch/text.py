"""Bag-of-words text encoding: vocabularies and tf-idf vectors.

Comments and titles are tokenized into lowercase alphabetic runs and
weighted by tf * ln(N/df), then l2-normalized. The comment and title
encodings are concatenated into the joint textual vector consumed by the
retrieval models.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .corpus import Corpus
from .errors import SchemaError

# Maximal runs of letters; digits, punctuation, and underscores separate.
_TOKEN_RE = re.compile(r"[^\W\d_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercased alphabetic tokens. "Still-Life, 1890!" -> [still, life].

    casefold, not lower: "ß" and "SS" must collide. Tokens that still
    carry non-letter marks after folding are dropped.
    """
    return [t for t in _TOKEN_RE.findall(text.casefold()) if t.isalpha()]


@dataclass(frozen=True)
class Vocabulary:
    """Ordered term list with training-set document frequencies."""

    terms: tuple[str, ...]
    doc_freq: dict[str, int]
    n_docs: int

    def __post_init__(self):
        object.__setattr__(
            self, "index", {term: i for i, term in enumerate(self.terms)}
        )

    def __len__(self) -> int:
        return len(self.terms)

    def idf(self, term: str) -> float:
        return math.log(self.n_docs / self.doc_freq[term])

    def save(self, path) -> None:
        """Plain text: header `#ndocs=<N>`, then `term<TAB>doc_freq` lines."""
        lines = [f"#ndocs={self.n_docs}"]
        lines.extend(f"{term}\t{self.doc_freq[term]}" for term in self.terms)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        raw = Path(path).read_text(encoding="utf-8").splitlines()
        if not raw or not raw[0].startswith("#ndocs="):
            raise SchemaError(f"vocabulary file {path} lacks the #ndocs= header")
        n_docs = int(raw[0].split("=", 1)[1])
        terms: list[str] = []
        doc_freq: dict[str, int] = {}
        for line in raw[1:]:
            if not line:
                continue
            term, _, count = line.partition("\t")
            if not count:
                raise SchemaError(f"vocabulary line {line!r} is not term<TAB>doc_freq")
            terms.append(term)
            doc_freq[term] = int(count)
        return cls(terms=tuple(terms), doc_freq=doc_freq, n_docs=n_docs)


@dataclass(frozen=True)
class SparseTextVector:
    """Sparse nonnegative vector with strictly increasing indices."""

    dim: int
    indices: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must have equal length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("indices must be strictly increasing")
        if self.indices and self.indices[-1] >= self.dim:
            raise ValueError(f"index {self.indices[-1]} out of range for dim {self.dim}")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        if self.indices:
            dense[list(self.indices)] = self.weights
        return dense


def _document_frequencies(documents: list[str]) -> tuple[dict[str, int], int]:
    df: dict[str, int] = {}
    for doc in documents:
        for term in set(tokenize(doc)):
            df[term] = df.get(term, 0) + 1
    return df, len(documents)


def build_comment_vocab(
    train: Corpus, min_count: int = 10, cap: int | None = None
) -> Vocabulary:
    """Vocabulary of comment terms occurring in >= min_count training documents.

    With cap set, only the cap highest-document-frequency terms survive
    (ties broken lexicographically); this is how the 3,000-term comment
    vocabulary is produced on the full dataset.
    """
    if len(train) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    df, n_docs = _document_frequencies(train.comments())
    kept = [t for t, c in df.items() if c >= min_count]
    if cap is not None and len(kept) > cap:
        kept.sort(key=lambda t: (-df[t], t))
        kept = kept[:cap]
    kept.sort()
    return Vocabulary(terms=tuple(kept), doc_freq={t: df[t] for t in kept}, n_docs=n_docs)


def build_title_vocab(train: Corpus) -> Vocabulary:
    """Vocabulary of every alphabetic term in the training titles."""
    if len(train) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    df, n_docs = _document_frequencies(train.titles())
    terms = tuple(sorted(df))
    return Vocabulary(terms=terms, doc_freq=df, n_docs=n_docs)


def tfidf_encode(text: str, vocab: Vocabulary) -> SparseTextVector:
    """tf * ln(N/df) over in-vocabulary tokens, l2-normalized.

    All-OOV text (or text whose every token has zero idf) maps to the zero
    vector of the vocabulary dimension.
    """
    counts: dict[int, int] = {}
    idx = vocab.index
    for token in tokenize(text):
        i = idx.get(token)
        if i is not None:
            counts[i] = counts.get(i, 0) + 1
    entries = []
    for i in sorted(counts):
        weight = counts[i] * vocab.idf(vocab.terms[i])
        if weight > 0.0:
            entries.append((i, weight))
    norm = math.sqrt(sum(w * w for _, w in entries))
    if norm == 0.0:
        return SparseTextVector(dim=len(vocab), indices=(), weights=())
    return SparseTextVector(
        dim=len(vocab),
        indices=tuple(i for i, _ in entries),
        weights=tuple(w / norm for _, w in entries),
    )


def concat_text(c: SparseTextVector, a: SparseTextVector) -> SparseTextVector:
    """Joint textual vector: title entries shifted past the comment block.

    No renormalization; the consumers normalize in their own geometry.
    """
    return SparseTextVector(
        dim=c.dim + a.dim,
        indices=c.indices + tuple(i + c.dim for i in a.indices),
        weights=c.weights + a.weights,
    )


def stack_dense(vectors: list[SparseTextVector]) -> np.ndarray:
    """Materialize sparse vectors as a dense (n, dim) float64 matrix."""
    if not vectors:
        raise ValueError("no vectors to stack")
    dim = vectors[0].dim
    if any(v.dim != dim for v in vectors):
        raise ValueError("all vectors must share one dim")
    out = np.zeros((len(vectors), dim))
    for row, v in enumerate(vectors):
        if v.indices:
            out[row, list(v.indices)] = v.weights
    return out


class TextEncoder(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper: fit vocabularies on a train corpus, transform
    (comment, title) pairs into joint tf-idf rows.

    Parameters
    ----------
    min_count : document-frequency floor for comment terms.
    cap : optional cap on comment vocabulary size (most frequent kept).
    """

    def __init__(self, min_count: int = 10, cap: int | None = None):
        self.min_count = min_count
        self.cap = cap

    def fit(self, corpus: Corpus, y=None):
        self.comment_vocab_ = build_comment_vocab(corpus, self.min_count, self.cap)
        self.title_vocab_ = build_title_vocab(corpus)
        return self

    def encode_sample(self, comment: str, title: str) -> SparseTextVector:
        self._check_fitted()
        return concat_text(
            tfidf_encode(comment, self.comment_vocab_),
            tfidf_encode(title, self.title_vocab_),
        )

    def transform(self, corpus: Corpus) -> np.ndarray:
        self._check_fitted()
        return stack_dense(
            [self.encode_sample(s.comment, s.attributes.title) for s in corpus]
        )

    @property
    def comment_dim_(self) -> int:
        self._check_fitted()
        return len(self.comment_vocab_)

    @property
    def dim_(self) -> int:
        self._check_fitted()
        return len(self.comment_vocab_) + len(self.title_vocab_)

    def _check_fitted(self):
        if not hasattr(self, "comment_vocab_"):
            raise NotFittedError("TextEncoder must be fitted before use")
