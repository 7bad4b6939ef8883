"""Exception hierarchy shared across the toolkit.

``InputError`` subclasses are problems with user-supplied data, files, or
configuration and map to CLI exit code 4; everything else is an internal
failure (exit code 1).
"""


class FairgateError(Exception):
    """Base class for all toolkit errors."""


class InputError(FairgateError):
    """Bad user input: files, schemas, configuration, or argument values."""


# -- tabular ---------------------------------------------------------------

class MissingColumn(InputError):
    def __init__(self, name: str):
        super().__init__(f"column {name!r} not found in CSV header")
        self.name = name


class UnparsableCell(InputError):
    def __init__(self, row: int, col: str, raw: str, detail: str = ""):
        msg = f"row {row}, column {col!r}: cannot parse {raw!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.row = row
        self.col = col
        self.raw = raw


class EmptyFile(InputError):
    pass


class AllMissingColumn(InputError):
    def __init__(self, col: str):
        super().__init__(f"numeric column {col!r} has no non-missing training values")
        self.col = col


class SchemaMismatch(InputError):
    pass


class StratumTooSmall(InputError):
    def __init__(self, z: int, size: int):
        super().__init__(
            f"stratum z={z} has only {size} rows; need at least 3 to split"
        )
        self.z = z
        self.size = size


# -- models ----------------------------------------------------------------

class WidthMismatch(InputError):
    pass


class NonfiniteLoss(FairgateError):
    pass


class SingleClassAUC(FairgateError):
    pass


# -- fairness --------------------------------------------------------------

class EmptyGroup(InputError):
    def __init__(self, group: int):
        super().__init__(f"sensitive group {group} is empty")
        self.group = group


# -- explain ---------------------------------------------------------------

class MissingCover(FairgateError):
    pass


class DegenerateDesign(FairgateError):
    pass


class NonNumericFeature(InputError):
    pass


class EmptyGrid(InputError):
    pass


# -- drift -----------------------------------------------------------------

class EmptySample(InputError):
    pass


class FeatureMismatch(InputError):
    pass


class EmptyWindow(InputError):
    pass


# -- utility ---------------------------------------------------------------

class ThresholdOutOfRange(InputError):
    pass


class GridMismatch(InputError):
    pass


# -- governance ------------------------------------------------------------

class MalformedPolicy(InputError):
    def __init__(self, key: str, detail: str = ""):
        msg = f"policy key {key!r} is malformed"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.key = key


class InvalidThreshold(InputError):
    def __init__(self, key: str, detail: str = ""):
        msg = f"policy threshold {key!r} is invalid"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.key = key


class IncompatibleReport(InputError):
    pass


class HashCollision(FairgateError):
    pass


class PartialWrite(FairgateError):
    pass


class StageViolation(FairgateError):
    pass


class MissingArtifact(FairgateError):
    def __init__(self, kind: str):
        super().__init__(f"required artifact missing: {kind}")
        self.kind = kind


class NoDeployedModel(FairgateError):
    pass
