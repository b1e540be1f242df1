"""Exception types shared across the package."""


class GraspError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GraspError):
    """Malformed or inconsistent input data (CSV contents, schemas, group maps)."""


class NumericalError(GraspError):
    """Numerical failure: non-finite objective, dead line search, degenerate resampling."""
