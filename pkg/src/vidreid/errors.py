"""Exception types shared across the package.

Each category maps to a CLI exit code so scripts can tell a bad config from
a broken dataset or a diverged run.
"""


class ReidError(Exception):
    exit_code = 1


class ConfigError(ReidError, ValueError):
    exit_code = 2


class DataError(ReidError, ValueError):
    exit_code = 3


class NumericError(ReidError, FloatingPointError):
    exit_code = 4


class ShapeError(ReidError, ValueError):
    exit_code = 5
