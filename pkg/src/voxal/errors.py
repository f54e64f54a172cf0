"""Exception types shared across the package."""


class VoxalError(Exception):
    """Base class for all package-specific errors."""


class FormatError(VoxalError):
    """A file does not conform to its binary layout."""


class DataError(VoxalError):
    """A value inside an otherwise well-formed input is invalid."""


class ConsistencyError(VoxalError):
    """Companion inputs (cloud, labels, features, logits) disagree in length."""


class DegenerateInputError(VoxalError):
    """The requested quantity is undefined for this input (e.g. empty grid)."""


class ModelError(VoxalError):
    """The classifier cannot run, e.g. no class prototype has been fitted."""


class BudgetExhaustedError(VoxalError):
    """The annotation budget cannot cover a mandatory labeling step."""
