"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration values."""


class DataError(ValueError):
    """Input data cannot produce a usable association matrix."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class UndefinedSimilarityError(ValueError):
    """Similarity of two all-zero vectors was requested."""


class UndefinedKeyError(ValueError):
    """An LSH key cannot be assigned to some entity."""


class EvaluationError(ValueError):
    """A quality measure cannot be evaluated on the given model."""


class ThresholdError(ValueError):
    """A trajectory never reaches the requested quality threshold."""
