"""Exception taxonomy. Every error surfaced over the gateway maps to one code."""


class SceneFuseError(Exception):
    """Base class; `code` is the symbolic identifier used on the wire."""

    code = "internal"

    def __init__(self, message=""):
        super().__init__(message)
        self.message = message


class ConfigError(SceneFuseError):
    code = "bad_config"


class DepthRangeError(SceneFuseError):
    code = "bad_depth"


class BehindCameraError(SceneFuseError):
    code = "behind_camera"


class DimensionMismatchError(SceneFuseError):
    code = "dimension_mismatch"


class AlignmentFailure(SceneFuseError):
    """Least-squares returned a non-positive disparity scale."""

    code = "alignment_failure"


class InpaintAnchorError(SceneFuseError):
    """Depth hole fill has no known pixels to anchor the solution."""

    code = "inpaint_no_anchor"


class BackendError(SceneFuseError):
    code = "backend_error"


class TransportError(BackendError):
    code = "backend_unreachable"


class GenerationError(BackendError):
    code = "generation_failed"


class PendingPreviewExists(SceneFuseError):
    code = "pending_exists"


class NoPendingPreview(SceneFuseError):
    code = "no_pending"


class NothingToUndo(SceneFuseError):
    code = "nothing_to_undo"
