"""Exception hierarchy shared by the solvers, pipelines, frame I/O and the CLI."""

from typing import Optional, Sequence


class WlrError(Exception):
    """Base class for every error raised by the wlr package."""


class ParameterError(WlrError, ValueError):
    """Invalid argument: bad shape, out-of-range rank or weight, negative tau."""


class DegeneracyError(WlrError):
    """A matrix that must have full column rank does not."""

    def __init__(self, message: str, numerical_rank: int):
        super().__init__(message)
        self.numerical_rank = numerical_rank


class SvdConvergenceError(WlrError):
    """The SVD failed to converge with every available LAPACK driver."""

    def __init__(self, shape: Sequence[int]):
        self.shape = tuple(shape)
        super().__init__(f"SVD did not converge for a {self.shape[0]}x{self.shape[1]} matrix")


class DivergenceError(WlrError):
    """An iterate of the WLR solver became non-finite."""

    def __init__(self, iteration: int, block: str):
        self.iteration = iteration
        self.block = block
        super().__init__(f"non-finite values in {block} at iteration {iteration}")


class PipelineError(WlrError):
    """A solver failure inside a background pipeline, tagged with its batch."""

    def __init__(self, batch: int, cause: Exception):
        self.batch = batch
        self.cause = cause
        super().__init__(f"batch {batch} failed: {cause}")


class FrameFormatError(WlrError):
    """A frame file is missing, malformed or inconsistent with its siblings."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SpecError(WlrError):
    """A synthetic video spec describes impossible geometry."""


class UsageError(WlrError):
    """Bad command-line usage: unknown flag, missing input, invalid value."""
