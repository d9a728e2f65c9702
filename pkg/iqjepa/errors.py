class IQJepaError(Exception):
    exit_code = 1


class ConfigError(IQJepaError):
    exit_code = 2


class DataError(IQJepaError):
    exit_code = 3


class NumericalError(IQJepaError):
    exit_code = 4
