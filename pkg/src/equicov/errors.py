"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid model, window or estimator parameter."""


class NoServerError(ParameterError):
    """Association requested on an empty base-station pattern."""


class SceneSamplingError(RuntimeError):
    """Scene sampling gave up after the retry limit."""


class ConfigError(ValueError):
    """Malformed experiment configuration; carries the offending line."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        elif path is not None:
            where = f"{path}: "
        super().__init__(where + message)
