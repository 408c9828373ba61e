"""Error types shared by all pipeline stages.

Every error carries a machine-parseable ``category`` (its class name); the
CLI prints ``<category>: <message>`` on stderr and exits nonzero, and the
HTTP service maps categories to 4xx responses.
"""


class PipelineError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def category(self) -> str:
        return type(self).__name__


# --- preprocessing ---

class DegenerateInput(PipelineError):
    """Background/foreground fit is impossible (e.g. all samples identical)."""


class InsufficientForeground(PipelineError):
    """Too few masked pixels to compute color statistics."""


class DegenerateStats(PipelineError):
    """Channel statistics make the color transfer scale undefined."""


# --- features ---

class DimensionMismatch(PipelineError):
    """Feature dimension does not match the fitted model."""


class RankDeficientWarning(UserWarning):
    """Fewer informative directions than requested; output padded."""


# --- clustering ---

class InvalidK(PipelineError):
    """Requested cluster count is outside the valid range."""


class SingleCluster(PipelineError):
    """Silhouette is undefined with fewer than two populated clusters."""


class EmptyCluster(PipelineError):
    """A cluster has no members where members are required."""


# --- classification ---

class UnknownCluster(PipelineError):
    """A label references a cluster index outside the model."""


class InvalidLabel(PipelineError):
    """A label value is not positive/negative/unlabeled."""


class SlideMismatch(PipelineError):
    """Regions and annotations belong to different slides."""


class KeyMismatch(PipelineError):
    """Two per-region maps do not cover the same region set."""


class EmptyEvaluation(PipelineError):
    """No labeled regions to evaluate."""


class OutOfExtent(PipelineError):
    """A region center falls outside the declared slide bounds."""


# --- pipeline / service ---

class MissingStage(PipelineError):
    """A required upstream stage has not produced its outputs."""


class RunLocked(PipelineError):
    """The run directory is owned by another process."""


class NoRun(PipelineError):
    """The run directory holds no usable run."""


class UnknownSlide(PipelineError):
    """No slide with the given id exists in the run."""


class UnknownRegion(PipelineError):
    """No region with the given id exists in the run."""


class NoGroundTruth(PipelineError):
    """Metrics requested but no region-of-interest file was loaded."""
