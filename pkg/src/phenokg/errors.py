"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class PhenoKGError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PhenoKGError):
    """Bad configuration or malformed input; maps to CLI exit code 1."""


class StageError(PhenoKGError):
    """A pipeline stage failed; maps to CLI exit code 2."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ingest
class MissingColumn(ValidationError):
    pass


class TypeMismatch(ValidationError):
    def __init__(self, row: int, col: str, value: object) -> None:
        super().__init__(f"row {row}, column {col!r}: cannot parse {value!r} as a number")
        self.row = row
        self.col = col


class EmptyDataset(ValidationError):
    pass


class UnknownCategory(ValidationError):
    pass


# embed
class DimensionMismatch(PhenoKGError):
    pass


# phenotype
class TooFewStates(PhenoKGError):
    pass


class ZeroSignature(ValidationError):
    pass


# causal
class NonFinite(PhenoKGError):
    pass


class DegenerateInput(PhenoKGError):
    pass


# evidence / backends
class BackendUnavailable(PhenoKGError):
    pass


class NetworkError(BackendUnavailable):
    pass


class ParseError(PhenoKGError):
    pass


class SchemaViolation(PhenoKGError):
    pass


# kgraph
class DanglingReference(PhenoKGError):
    pass


class CorruptFile(PhenoKGError):
    pass


class VersionSkew(PhenoKGError):
    pass


# online
class ZeroVector(PhenoKGError):
    pass


# cli / report
class MissingArtifact(StageError):
    def __init__(self, path: str, stage: str = "report") -> None:
        super().__init__(stage, f"missing artifact {path}")
        self.path = path
