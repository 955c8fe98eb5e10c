"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class OpenSetDAError(Exception):
    exit_code = 1


class ConfigError(OpenSetDAError):
    exit_code = 1


class ProtocolError(ConfigError):
    """Inconsistent split ranges or an evaluation protocol misuse."""


class SamplingError(ConfigError):
    pass


class DatasetError(OpenSetDAError):
    exit_code = 2


class FormatError(DatasetError):
    pass


class DataError(DatasetError):
    pass


class LabelError(DatasetError):
    pass


class CoverageError(DatasetError):
    """A catalog class has no source samples."""


class DimensionError(DatasetError):
    pass


class InfeasibleError(OpenSetDAError):
    exit_code = 3


class NumericalError(OpenSetDAError):
    exit_code = 4
