"""Triplet collection: metadata parsing, splitting, and label maps.

A sample ties together a painting (by file-stem reference), its free-form
descriptive comment, and seven catalogue attributes. The metadata lives in
a UTF-8 CSV with RFC-4180 quoting and the header columns ID, IMAGE,
COMMENT, AUTHOR, TITLE, DATE, TECHNIQUE, TYPE, SCHOOL, TIMEFRAME in any
order.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DuplicateIdError, SchemaError

REQUIRED_COLUMNS = (
    "ID",
    "IMAGE",
    "COMMENT",
    "AUTHOR",
    "TITLE",
    "DATE",
    "TECHNIQUE",
    "TYPE",
    "SCHOOL",
    "TIMEFRAME",
)

# Attributes with a finite label set, usable as classifier targets.
CATEGORICAL_ATTRIBUTES = ("type", "school", "timeframe", "author")

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class AttributeSet:
    """The seven catalogue fields kept for each painting."""

    author: str
    title: str
    date: str
    technique: str
    type_: str
    school: str
    timeframe: str

    def get(self, attribute: str) -> str:
        if attribute not in CATEGORICAL_ATTRIBUTES:
            raise ValueError(
                f"unknown attribute {attribute!r}; expected one of {CATEGORICAL_ATTRIBUTES}"
            )
        return getattr(self, "type_" if attribute == "type" else attribute)


@dataclass(frozen=True)
class ArtworkTriplet:
    """One sample: image reference, comment text, attributes."""

    id: str
    image_ref: str
    comment: str
    attributes: AttributeSet


@dataclass
class Corpus:
    """An ordered, immutable-by-convention collection of triplets."""

    samples: tuple[ArtworkTriplet, ...]
    split: str = "full"  # "full" before splitting, else train/val/test

    def __post_init__(self):
        self.samples = tuple(self.samples)
        seen: dict[str, int] = {}
        for row, sample in enumerate(self.samples):
            if not sample.id:
                raise SchemaError(f"sample at position {row} has an empty id")
            if not sample.comment:
                raise SchemaError(f"sample {sample.id!r} has an empty comment")
            if not sample.attributes.title:
                raise SchemaError(f"sample {sample.id!r} has an empty title")
            if sample.id in seen:
                raise DuplicateIdError(sample.id, seen[sample.id], row)
            seen[sample.id] = row

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def comments(self) -> list[str]:
        return [s.comment for s in self.samples]

    def titles(self) -> list[str]:
        return [s.attributes.title for s in self.samples]


@dataclass
class ParseDiagnostics:
    """Per-row rejection bookkeeping from parse_metadata."""

    rejected_empty_comment: int = 0
    rejected_empty_title: int = 0
    rejected_rows: list[int] = field(default_factory=list)  # 1-based data rows

    @property
    def rejected(self) -> int:
        return self.rejected_empty_comment + self.rejected_empty_title


def parse_metadata(data: bytes | str) -> tuple[Corpus, ParseDiagnostics]:
    """Parse metadata CSV into a Corpus.

    Rows with an empty COMMENT or TITLE are dropped and counted in the
    returned diagnostics. A missing required column raises SchemaError;
    a repeated ID raises DuplicateIdError naming both rows.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.DictReader(io.StringIO(data))
    if reader.fieldnames is None:
        raise SchemaError("metadata CSV is empty (no header row)")
    header = [name.strip() for name in reader.fieldnames]
    missing = [col for col in REQUIRED_COLUMNS if col not in header]
    if missing:
        raise SchemaError(f"metadata CSV is missing required column(s): {', '.join(missing)}")

    samples: list[ArtworkTriplet] = []
    diagnostics = ParseDiagnostics()
    first_row_of: dict[str, int] = {}
    for row_number, row in enumerate(reader, start=1):
        # Field content is kept verbatim; only emptiness tests ignore whitespace.
        get = lambda col: row.get(col) or ""
        comment = get("COMMENT")
        title = get("TITLE")
        if not comment.strip():
            diagnostics.rejected_empty_comment += 1
            diagnostics.rejected_rows.append(row_number)
            continue
        if not title.strip():
            diagnostics.rejected_empty_title += 1
            diagnostics.rejected_rows.append(row_number)
            continue
        sample_id = get("ID").strip()
        if not sample_id:
            raise SchemaError(f"row {row_number}: empty ID")
        if sample_id in first_row_of:
            raise DuplicateIdError(sample_id, first_row_of[sample_id], row_number)
        first_row_of[sample_id] = row_number
        samples.append(
            ArtworkTriplet(
                id=sample_id,
                image_ref=get("IMAGE"),
                comment=comment,
                attributes=AttributeSet(
                    author=get("AUTHOR"),
                    title=title,
                    date=get("DATE"),
                    technique=get("TECHNIQUE"),
                    type_=get("TYPE"),
                    school=get("SCHOOL"),
                    timeframe=get("TIMEFRAME"),
                ),
            )
        )
    return Corpus(tuple(samples)), diagnostics


def write_metadata(corpus: Corpus) -> bytes:
    """Serialize a Corpus back to the metadata CSV schema (round-trip safe)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS)
    for s in corpus:
        a = s.attributes
        writer.writerow(
            [s.id, s.image_ref, s.comment, a.author, a.title, a.date,
             a.technique, a.type_, a.school, a.timeframe]
        )
    return out.getvalue().encode("utf-8")


def split_corpus(
    corpus: Corpus,
    seed: int,
    fractions: tuple[float, float, float] = (0.9, 0.05, 0.05),
) -> tuple[Corpus, Corpus, Corpus]:
    """Randomly partition a corpus into train/val/test.

    Sizes are floor(N * fraction) for val and test, with the remainder going
    to train. Deterministic for a fixed seed.
    """
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    if any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be nonnegative, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions} (sum {sum(fractions)})")

    n = len(corpus)
    n_val = int(n * fractions[1])
    n_test = int(n * fractions[2])
    n_train = n - n_val - n_test

    order = np.random.default_rng(seed).permutation(n)
    buckets = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    parts = []
    for name, idx in zip(SPLIT_NAMES, buckets):
        chosen = sorted(int(i) for i in idx)  # keep original sample order inside each split
        parts.append(Corpus(tuple(corpus.samples[i] for i in chosen), split=name))
    return tuple(parts)


def build_label_maps(corpus: Corpus, attribute: str) -> dict[str, int]:
    """Map each distinct value of a categorical attribute to a stable index.

    Indices follow lexicographic value order, 0..C-1.
    """
    values = sorted({s.attributes.get(attribute) for s in corpus})
    return {value: index for index, value in enumerate(values)}


def attribute_labels(corpus: Corpus, attribute: str, label_map: dict[str, int]) -> np.ndarray:
    """Integer label per sample under a previously built map."""
    try:
        return np.array([label_map[s.attributes.get(attribute)] for s in corpus], dtype=np.int64)
    except KeyError as exc:
        raise KeyError(
            f"attribute {attribute!r} value {exc.args[0]!r} missing from label map; "
            "build the map on a corpus that covers it"
        ) from None


def write_split_manifests(splits: dict[str, Corpus], directory) -> None:
    """One plain-text file per split, one sample id per line."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, part in splits.items():
        (directory / f"{name}.txt").write_text(
            "".join(f"{sid}\n" for sid in part.ids()), encoding="utf-8"
        )


def read_split_manifests(corpus: Corpus, directory) -> dict[str, Corpus]:
    """Resolve manifest files back onto a full corpus."""
    from pathlib import Path

    directory = Path(directory)
    by_id = {s.id: s for s in corpus}
    splits: dict[str, Corpus] = {}
    for name in SPLIT_NAMES:
        path = directory / f"{name}.txt"
        if not path.exists():
            raise FileNotFoundError(f"missing split manifest: {path}")
        ids = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        unknown = [i for i in ids if i not in by_id]
        if unknown:
            raise SchemaError(f"split {name!r} references unknown id(s): {unknown[:5]}")
        splits[name] = Corpus(tuple(by_id[i] for i in ids), split=name)
    return splits
