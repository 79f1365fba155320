"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """Malformed input file. ``row`` is the 1-based line number, if known."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class KernelError(ValueError):
    """A kernel field could not be evaluated at some point (e.g. not SPD)."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class IsolatedPointError(ValueError):
    """A row or column of a kernel matrix sums to zero."""

    def __init__(self, message, index):
        self.index = index
        super().__init__(message)


class RankDeficiencyError(ValueError):
    """A least-squares problem does not have full rank."""

    def __init__(self, message, columns=None, index=None):
        self.columns = columns
        self.index = index
        super().__init__(message)


class EigensolverError(RuntimeError):
    """Eigensolver did not converge or returned an unusable spectrum."""
