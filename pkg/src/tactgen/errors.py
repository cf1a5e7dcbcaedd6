"""Exception types shared across the package."""


class TactgenError(Exception):
    """Base class for all package-specific errors."""


class DatasetError(TactgenError):
    """Manifest or image data failed to load or validate."""


class EmptyDatasetError(DatasetError):
    """An operation that needs at least one record got none."""


class ManifestFormatError(DatasetError):
    """Manifest file does not follow the documented format."""


class CalibrationError(TactgenError, ValueError):
    """A force component lies outside its calibration range."""

    def __init__(self, axis, value, lo, hi):
        self.axis = axis
        self.value = value
        super().__init__(
            f"force component {axis}={value!r} outside calibration range [{lo}, {hi}]"
        )


class ImageShapeError(TactgenError, ValueError):
    """Image array has the wrong shape or channel count."""


class DomainError(TactgenError, ValueError):
    """Pixel values outside the expected storage/model domain."""


class ParameterError(TactgenError, ValueError):
    """Invalid numeric parameter (schedule bounds, step index, ...)."""


class TrainingDivergedError(TactgenError):
    """Loss became non-finite or exploded; last good checkpoint is retained."""

    def __init__(self, step, loss, checkpoint_path=None):
        self.step = step
        self.loss = loss
        self.checkpoint_path = checkpoint_path
        msg = f"training diverged at step {step} (loss={loss})"
        if checkpoint_path is not None:
            msg += f"; last checkpoint retained at {checkpoint_path}"
        super().__init__(msg)


class CheckpointError(TactgenError):
    """Checkpoint file missing fields or failed to round-trip."""


class CompatibilityError(CheckpointError):
    """Checkpoint metadata disagrees with the requested configuration."""


class MarkerDetectionError(TactgenError):
    """Marker detection did not return the expected grid."""

    def __init__(self, expected, found, detail=""):
        self.expected = expected
        self.found = found
        msg = f"expected {expected} markers, detected {found}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ZeroMarkersError(MarkerDetectionError):
    """No marker candidates at all (e.g. blank image)."""

    def __init__(self, expected):
        super().__init__(expected, 0, "no marker candidates found")


class CorrespondenceError(TactgenError, ValueError):
    """Marker sets cannot be put into correspondence."""


class ConfigError(TactgenError, ValueError):
    """Experiment config failed fail-closed validation."""
