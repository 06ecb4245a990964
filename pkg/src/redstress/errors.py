"""Exception hierarchy shared by all modules."""


class RedStressError(Exception):
    """Base class."""


class DomainError(RedStressError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InvalidDenominatorError(DomainError):
    pass


class ConstraintViolationError(DomainError):
    pass


class NormalizationError(DomainError):
    pass


class EmptySampleError(DomainError):
    pass


class ParameterError(DomainError):
    pass


class InfeasibleMomentsError(DomainError):
    def __init__(self, msg, mu=None, sigma=None):
        super().__init__(msg)
        self.mu = mu
        self.sigma = sigma


class InfeasibleCorrelationError(DomainError):
    pass


class UnfittableError(RedStressError):
    def __init__(self, msg, p_hat=None):
        super().__init__(msg)
        self.p_hat = p_hat


class NumericalError(RedStressError, ArithmeticError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class SingularDesignError(NumericalError):
    pass


class OrderingError(DomainError):
    pass


class UnboundedReturnTimeError(DomainError):
    pass


class NonStationaryError(DomainError):
    pass


class IngestError(RedStressError):
    def __init__(self, msg, row_errors=None):
        super().__init__(msg)
        self.row_errors = row_errors or []
