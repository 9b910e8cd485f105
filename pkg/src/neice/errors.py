"""Exception hierarchy. Each family maps onto a CLI exit code."""


class NeiceError(Exception):
    exit_code = 2


class ConfigError(NeiceError):
    exit_code = 1


class DataError(NeiceError):
    exit_code = 2


class CorpusError(DataError):
    pass


class AnnotationError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmbeddingError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(NeiceError):
    exit_code = 3
