"""Exception types raised by crowdamp."""


class CrowdAmpError(Exception):
    """Base class for all crowdamp errors."""


class ChannelOverflow(CrowdAmpError):
    """A sampled (reliability, label) pair drives the answer channel out of [0, 1]."""


class DomainError(CrowdAmpError):
    """A channel evaluation was requested outside its domain."""


class DegreeTooLarge(CrowdAmpError):
    """Requested per-worker degree exceeds the number of tasks."""


class DegenerateChannel(CrowdAmpError):
    """The channel carries no information ((1 - rho) * nu == 0), so the
    effective noise is infinite."""


class NonFiniteIterate(CrowdAmpError):
    """An iterative solver produced NaN or Inf."""

    def __init__(self, iteration: int, what: str = "iterate"):
        self.iteration = iteration
        super().__init__(f"non-finite {what} at iteration {iteration}")


class NonZeroMeanPrior(CrowdAmpError):
    """An operation that requires zero-mean priors received a biased one."""


class BracketTooNarrow(CrowdAmpError):
    """A threshold search bracket does not contain the full transition region."""


class UnsupportedBias(CrowdAmpError):
    """The closed-form mixture recursion is only stated for unbiased labels."""
