"""Exception types shared across the package."""


class CrowdcastError(Exception):
    """Base class for all crowdcast errors."""


class ShapeMismatchError(CrowdcastError, ValueError):
    """A tensor argument has the wrong extent along a named axis."""

    def __init__(self, axis: str, expected, actual):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        super().__init__(f"axis '{axis}': expected {expected}, got {actual}")


class FileFormatError(CrowdcastError, ValueError):
    """A serialized file is malformed (bad magic, truncation, bad header)."""


class AnnotationBoundsError(CrowdcastError, ValueError):
    """An annotation coordinate falls outside the declared map."""

    def __init__(self, frame: int, person_id: int, x: float, y: float, width: int, height: int):
        self.frame = frame
        self.person_id = person_id
        super().__init__(
            f"annotation out of bounds at frame={frame} id={person_id}: "
            f"({x}, {y}) not in [0, {width}) x [0, {height})"
        )


class TrainingDivergedError(CrowdcastError, RuntimeError):
    """Loss became NaN/Inf during training."""

    def __init__(self, iteration: int, batch_indices):
        self.iteration = iteration
        self.batch_indices = list(batch_indices)
        super().__init__(
            f"non-finite loss at iteration {iteration} (batch indices {self.batch_indices})"
        )
