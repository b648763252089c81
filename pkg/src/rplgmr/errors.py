"""Exception types raised by the pipeline."""


class RPLGMRError(Exception):
    """Base class for all pipeline errors."""

    code = "pipeline_error"


class InputError(RPLGMRError):
    code = "input_error"


class AllInvalid(InputError):
    """No valid depth pixel in the image."""


class DegenerateDepth(InputError):
    """Inverse depth has zero range, so no scale factor exists."""


class InvalidScene(InputError):
    pass


class UnreadableInput(InputError):
    pass


class SingularCovariance(RPLGMRError):
    pass


class EmptyKeptSet(RPLGMRError):
    pass


class TooFewSamples(RPLGMRError):
    pass


class AllComponentsEmpty(RPLGMRError):
    pass


class DegenerateScatter(RPLGMRError):
    pass


class DimensionMismatch(RPLGMRError):
    pass


class EmptyList(RPLGMRError):
    pass


class CannotRestoreMonotonicity(RPLGMRError):
    """Extra trimming hit its floor before the log-likelihood recovered.

    Carries the numbers needed to diagnose the failed iteration.
    """

    def __init__(self, message, *, prev_ll=None, ll=None, kept=None, floor=None):
        super().__init__(message)
        self.prev_ll = prev_ll
        self.ll = ll
        self.kept = kept
        self.floor = floor
