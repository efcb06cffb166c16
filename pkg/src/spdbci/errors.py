"""Typed errors shared across the pipeline.

Every error carries a stable machine-readable ``code`` so the CLI can emit
structured JSON on stderr. Library code raises these; nothing here prints.
"""


class PipelineError(Exception):
    """Base class for all pipeline errors."""

    code = "pipeline_error"

    def payload(self):
        """Extra key/value context for the CLI error report."""
        return {}


class ShapeError(PipelineError, ValueError):
    """Array has the wrong shape, dtype, or dimensionality."""

    code = "bad_shape"


class NumericDomainError(PipelineError, ValueError):
    """Input violates a numeric-domain requirement (not SPD, not finite, ...)."""

    code = "numeric_domain"


class BadArgumentError(PipelineError, ValueError):
    """A scalar argument is outside its documented range."""

    code = "bad_argument"


class ConvergenceError(PipelineError):
    """Iterative solver failed to reach tolerance within its iteration budget."""

    code = "no_convergence"

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual

    def payload(self):
        return {"residual": None if self.residual is None else float(self.residual)}


class DegenerateWindowError(PipelineError):
    """A raw signal window carries essentially no energy (trace below floor)."""

    code = "degenerate_window"


class ReferenceUnavailableError(PipelineError):
    """Recentering reference cannot be produced (too few windows, no fallback)."""

    code = "reference_unavailable"


class ClassStarvationError(PipelineError):
    """A class has no (or too few) labeled samples to fit on."""

    code = "class_starvation"


class ThresholdInfeasibleError(PipelineError):
    """No threshold satisfies the latency constraint; carries the fallback."""

    code = "threshold_infeasible"

    def __init__(self, message, fallback=None, fallback_j=None):
        super().__init__(message)
        self.fallback = fallback
        self.fallback_j = fallback_j

    def payload(self):
        return {
            "fallback": None if self.fallback is None else float(self.fallback),
            "fallback_j": None if self.fallback_j is None else float(self.fallback_j),
        }


class UndefinedMetricError(PipelineError):
    """Metric is undefined for the given inputs (single-class AUC, all-zero diffs)."""

    code = "undefined_metric"


class ProtocolError(PipelineError):
    """Event stream violates protocol ordering (non-monotone clock, bad phases)."""

    code = "protocol_error"


class FormatError(PipelineError):
    """A file does not conform to its declared on-disk format."""

    code = "bad_format"


class EmptySessionError(PipelineError):
    """A session contains no trials or no usable windows."""

    code = "empty_session"


class ConfigError(PipelineError):
    """Configuration file or override cannot be parsed or validated."""

    code = "bad_config"
