"""Exception hierarchy shared across the package.

The CLI maps these to stable exit codes: config/usage problems exit 2,
data problems exit 3, numerical divergence exits 4.
"""


class IcmvcError(Exception):
    """Base class for all package errors."""


class ShapeError(IcmvcError):
    """Operands have incompatible dimensions."""


class ConfigError(IcmvcError):
    """A hyperparameter or option is out of its legal range."""


class ContractError(IcmvcError):
    """An input violates an operation's precondition."""


class DataError(IcmvcError):
    """Dataset content is invalid (e.g. an instance missing in every view)."""


class FormatError(DataError):
    """A dataset file has the wrong structure."""


class ParseError(FormatError):
    """A dataset file contains an unparseable cell."""


class DegenerateGraphError(DataError):
    """Graph construction produced an isolated node or empty graph."""


class GenerationError(IcmvcError):
    """Synthetic data generation could not satisfy its constraints."""


class DivergenceError(IcmvcError):
    """Training hit a non-finite loss; carries the offending epoch."""

    def __init__(self, epoch: int, breakdown=None):
        self.epoch = epoch
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at epoch {epoch}: {breakdown}")
