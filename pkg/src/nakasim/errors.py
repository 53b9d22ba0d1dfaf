class NakasimError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(NakasimError, ValueError):
    pass


class InvalidScheduleError(NakasimError, ValueError):
    pass


class ScheduleIncompleteError(InvalidScheduleError):
    pass


class InvalidIntervalError(NakasimError, ValueError):
    pass


class InvalidQueryError(NakasimError, ValueError):
    pass


class InvalidInputError(NakasimError, ValueError):
    pass


class InsufficientDataError(NakasimError, ValueError):
    pass


class SegmentTooShortError(NakasimError, ValueError):
    """The punctured segment length B is too small for the requested epsilon."""


class ConfigError(NakasimError, ValueError):
    pass
