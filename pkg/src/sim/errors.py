class SoilXError(Exception):
    """Base class for every error raised by the simulator."""


class DomainError(SoilXError, ValueError):
    """Input outside the mathematical domain of an operation."""


class RangeError(DomainError):
    """A soil component lies outside its closed range."""


class ConfigurationError(SoilXError):
    pass


class EpsilonOutOfRange(DomainError):
    def __init__(self, epsilon, message=None):
        self.epsilon = epsilon
        super().__init__(message or f'recovered permittivity {epsilon!r} is below 1')


class NoCandidate(SoilXError):
    pass


class ScheduleError(ConfigurationError):
    pass


class StructuralError(SoilXError):
    """Training data lacks the reference sample or a component group."""


class DegenerateModelError(SoilXError):
    pass


class DivergenceError(SoilXError):
    def __init__(self, epoch, message=None, mode=None):
        self.epoch = epoch
        self.mode = mode
        text = message or f'loss became non-finite at epoch {epoch}'
        if mode:
            text = f'[{mode}] {text}'
        super().__init__(text)


class FormatError(SoilXError):
    pass


class ParseError(FormatError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f'line {line}: {message}')
