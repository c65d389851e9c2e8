"""Exception and warning types shared across the package."""


class ClothfoldError(Exception):
    """Base class for all package errors."""

    code = "error"

    def record(self) -> str:
        """One-line machine-parsable error record (used by the CLI)."""
        return f"error code={self.code} detail={self}"


class InvalidArgumentError(ClothfoldError):
    code = "invalid-argument"


class SimulationDivergedError(ClothfoldError):
    code = "simulation-diverged"

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class GraspMissError(ClothfoldError):
    """No particle within grasp radius: a wasted action, not a crash."""

    code = "grasp-miss"


class OutOfWorkspaceError(ClothfoldError):
    code = "out-of-workspace"


class EmptyInputError(ClothfoldError):
    code = "empty-input"


class NumericalFailureError(ClothfoldError):
    code = "numerical-failure"


class TrainingFailedError(ClothfoldError):
    code = "training-failed"


class NoClothVisibleError(ClothfoldError):
    code = "no-cloth-visible"


class DegenerateActionError(ClothfoldError):
    code = "degenerate-action"


class VerticalGraspError(ClothfoldError):
    code = "vertical-grasp-unsupported"


class MalformedStreamError(ClothfoldError):
    code = "malformed-stream"


class UncorrectableEventError(ClothfoldError):
    code = "uncorrectable-event"


class AlignmentFailureError(ClothfoldError):
    code = "alignment-failure"


class InvalidReferenceError(ClothfoldError):
    code = "invalid-reference"


class DatasetError(ClothfoldError):
    code = "dataset-invalid"


class TruncatedGraspWarning(UserWarning):
    """A keypoint stream ended while a grasp was still open; the event is dropped."""
