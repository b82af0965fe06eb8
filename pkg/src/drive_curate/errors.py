"""Exception hierarchy shared across the package.

Every error carries a ``category`` (the class name) so the CLI can print a
single machine-parseable line on failure.
"""


class DriveCurateError(Exception):
    @property
    def category(self) -> str:
        return type(self).__name__


# geometry
class PoleDegenerate(DriveCurateError):
    pass


class CoincidentCenters(DriveCurateError):
    pass


class NumericallySingular(DriveCurateError):
    def __init__(self, message, homography=None):
        super().__init__(message)
        self.homography = homography


class InvalidPose(DriveCurateError, ValueError):
    pass


# imaging
class SingularHomography(DriveCurateError):
    pass


class DegenerateBox(DriveCurateError):
    pass


class ShapeMismatch(DriveCurateError, ValueError):
    pass


# occlusion
class EmptyForeground(DriveCurateError):
    pass


# curation
class ParseError(DriveCurateError):
    pass


class MissingAsset(DriveCurateError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing assets: " + ", ".join(str(p) for p in self.missing))


class InconsistentTrack(DriveCurateError):
    pass


class NoUsableFrames(DriveCurateError):
    pass


class BatchTooSmall(DriveCurateError):
    pass


class VersionMismatch(DriveCurateError):
    pass


class DatasetIOError(DriveCurateError, OSError):
    pass


# toydiff
class DivergedLoss(DriveCurateError):
    pass


# evalmetrics
class EmptyValidRegion(DriveCurateError):
    pass


# cli
class ConfigError(DriveCurateError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
