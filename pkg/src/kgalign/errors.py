"""Exception hierarchy mapped to CLI exit codes (0 ok, 2 config, 3 data, 4 numeric)."""


class KgalignError(Exception):
    exit_code = 1


class ConfigError(KgalignError):
    exit_code = 2


class DataError(KgalignError):
    exit_code = 3


class NumericError(KgalignError):
    exit_code = 4
