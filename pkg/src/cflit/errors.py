"""Exception hierarchy shared by every cflit module."""


class CFLITError(Exception):
    """Base class for all errors raised by cflit."""


class InvalidConfigError(CFLITError, ValueError):
    """A configuration value (dimension, power, rate, ...) is out of range."""


class InvalidInputError(CFLITError, ValueError):
    """An argument has the wrong shape, sign, or is empty."""


class DomainError(CFLITError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class DegenerateChannelError(CFLITError, ValueError):
    """A channel coefficient is exactly zero, so the transceiver is undefined."""


class InfeasibleError(CFLITError):
    """FL needs more resource blocks than the horizon provides.

    Attributes:
        required: resource blocks needed for FL (d * T).
        available: resource blocks in the horizon (M * S).
        min_symbols: smallest S that would make the run feasible.
    """

    def __init__(self, required: int, available: int, min_symbols: int | None = None):
        self.required = int(required)
        self.available = int(available)
        self.deficit = self.required - self.available
        self.min_symbols = min_symbols
        msg = (
            f"FL requires {self.required} resource blocks but only {self.available} "
            f"are available (deficit {self.deficit})"
        )
        if min_symbols is not None:
            msg += f"; at least S={min_symbols} symbols are needed"
        super().__init__(msg)


class ConvergenceError(CFLITError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, *, iterations: int, grad_norm: float):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(f"{message} (iterations={iterations}, |grad|={grad_norm:.3e})")


class TruncatedStreamError(CFLITError, ValueError):
    """A gain stream ended before all M*S resource blocks were decided."""


class NumericalError(CFLITError, ArithmeticError):
    """A computed quantity is NaN or infinite where a finite value is required."""
