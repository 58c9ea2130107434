class SdmError(Exception):
    """Base class for errors raised by sdmpdf."""


class ConsistencyError(SdmError):
    """A quantity that must be real/Hermitian came out otherwise."""


class PositivityError(SdmError):
    """An SDM left the positive definite cone (Cholesky failure or lambda_min too small)."""

    def __init__(self, msg, t=None, state=None):
        super().__init__(msg)
        self.t = t
        self.state = state


class IllConditionedError(SdmError):
    pass


class StabilityError(SdmError):
    """Time step violates the explicit-scheme stability bound."""


class NegativeDensityError(SdmError):
    def __init__(self, msg, t=None, minimum=None):
        super().__init__(msg)
        self.t = t
        self.minimum = minimum
