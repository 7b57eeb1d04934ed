"""Error taxonomy.

Three failure families, each mapped to a process exit code by the CLI:
invalid input or configuration exits 2, numerical failures exit 3, and
separability failures exit 4. Library callers can catch the family base
classes instead of individual leaf types.
"""


class HingeflowError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(HingeflowError):
    """Invalid input, argument, or configuration."""

    exit_code = 2


class NumericalError(HingeflowError):
    """A computation left its valid numerical regime."""

    exit_code = 3


class SeparabilityError(HingeflowError):
    """The data does not admit, or appears not to admit, a separator."""

    exit_code = 4


class DimensionMismatch(ConfigError):
    """Ragged points, wrong vector length, or mismatched array shapes."""


class ShapeMismatch(DimensionMismatch):
    """Network parameters and batch arrays disagree on shape."""


class DuplicatePoints(ConfigError):
    """Two training points coincide; every x_i must be distinct."""


class InvalidHyperparameter(ConfigError):
    """A hyperparameter is outside its legal range."""


class LabelOutOfRange(ConfigError):
    """A label is not in {-1,+1} (binary) or {0..K-1} (multiclass)."""


class ZeroVector(ConfigError):
    """An operation that needs a nonzero vector received the zero vector."""


class UnknownName(ConfigError):
    """No builtin dataset is registered under the requested name."""


class MissingCertificate(ConfigError):
    """An operation that needs a max-margin certificate ran without one."""


class InsufficientUpdates(ConfigError):
    """Fewer than two threshold updates were recorded; no gaps exist."""


class InvalidWindow(ConfigError):
    """A fit window selects too few recorded points."""


class NonPositiveValues(ConfigError):
    """Log-log fitting requires strictly positive values in the window."""


class DegenerateSupport(NumericalError):
    """No support subset spans the expected space; upstream bug."""


class ZeroGradient(NumericalError):
    """The gradient has zero norm and cannot be normalized."""


class NonFinite(NumericalError):
    """An iterate overflowed or became NaN; step sizes are misconfigured."""


class ParallelDirection(NumericalError):
    """The travel direction is parallel to the target hyperplane."""


class NoCrossing(NumericalError):
    """No hyperplane crossing was found within the event budget."""


class NoPositiveCrossing(NoCrossing):
    """Every candidate crossing lies behind the current point."""


class NotSeparable(SeparabilityError):
    """No feasible separator exists; the data is not linearly separable."""


class NotSeparableSuspected(SeparabilityError):
    """Training stopped making threshold progress; data may be inseparable."""


class GenerationFailed(SeparabilityError):
    """Random dataset generation exhausted its retries."""
