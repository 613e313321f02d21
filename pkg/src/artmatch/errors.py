"""Exception types shared across the package."""


class ArtmatchError(Exception):
    """Base class for all artmatch-specific failures."""


class SchemaError(ArtmatchError):
    """Input data does not match the declared schema (missing column, wrong dim)."""


class DuplicateIdError(SchemaError):
    """The same sample id appears more than once."""

    def __init__(self, sample_id: str, first_row: int, second_row: int):
        super().__init__(
            f"duplicate id {sample_id!r}: rows {first_row} and {second_row}"
        )
        self.sample_id = sample_id
        self.first_row = first_row
        self.second_row = second_row


class FormatError(ArtmatchError):
    """A binary file does not carry the expected magic/version."""


class CorruptFileError(FormatError):
    """A binary file ended or broke mid-record."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateInputError(ArtmatchError):
    """An input is numerically degenerate (e.g. zero vector where a direction is needed)."""
