"""Exception hierarchy shared by all poseforest modules."""


class PoseForestError(Exception):
    """Base class for all errors raised by this package."""


class BehindCamera(PoseForestError):
    """Point has non-positive depth and cannot be projected."""


class NonPositiveDepth(PoseForestError):
    """Backprojection requires depth > 0."""


class EmptyMesh(PoseForestError):
    """Operation needs a mesh with at least one vertex/triangle."""


class NothingVisible(PoseForestError):
    """No triangle of the mesh projects inside the frame."""


class InsufficientSamples(PoseForestError):
    """Forest training needs at least two samples."""


class CorruptModel(PoseForestError):
    """Model bytes fail magic/version/length validation."""


class ModelMismatch(PoseForestError):
    """Frame or intrinsics do not match the model's training metadata."""


class EmptyTrainingSet(PoseForestError):
    """Detector training produced no samples."""


class InvalidRange(PoseForestError):
    """Perturbation or radius range is not positive."""


class DegenerateView(PoseForestError):
    """Too few tracker sample points land on valid pixels."""


class TooFewFrames(PoseForestError):
    """Sequence operation needs more frames/poses than were given."""
