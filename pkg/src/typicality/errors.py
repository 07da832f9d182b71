"""Exception hierarchy.  Every error carries a stable ``code`` for the CLI."""


class TypicalityError(Exception):
    code = "error"
    exit_code = 1


class ConfigError(TypicalityError, ValueError):
    code = "config"
    exit_code = 2


class DimensionError(TypicalityError, ValueError):
    code = "dimension"


class CapacityError(TypicalityError, MemoryError):
    code = "capacity"


class SolverError(TypicalityError, RuntimeError):
    code = "solver"


class SpectrumFileError(TypicalityError, ValueError):
    code = "spectrum_file"


class UnsupportedVersionError(SpectrumFileError):
    code = "unsupported_version"


class ParamsMismatchError(SpectrumFileError):
    code = "params_mismatch"


class UnfoldingError(TypicalityError, ValueError):
    code = "unfolding"


class FitError(TypicalityError, RuntimeError):
    code = "fit"


class DomainError(TypicalityError, ValueError):
    code = "domain"
