"""Exception types shared across the toolkit."""


class RobustmapError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RobustmapError):
    """A network spec, layer shape, or run configuration is inconsistent."""


class UnsupportedLossError(RobustmapError):
    """The requested loss needs more classes than the model provides."""


class DegenerateLogitsError(RobustmapError):
    """A DLR denominator vanished (top-1 logit equals the relevant lower logit)."""


class TrainingDivergedError(RobustmapError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


class BandwidthSearchError(RobustmapError):
    """Perplexity calibration did not converge within the bisection budget."""


class GradientNonFiniteError(RobustmapError):
    """An embedding gradient became non-finite."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite embedding gradient at iteration {iteration}")
        self.iteration = iteration


class MetricInputError(RobustmapError):
    """Overlap-metric inputs violate the multi-class requirement."""
