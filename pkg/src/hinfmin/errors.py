"""Exception hierarchy shared by all solver modules."""


class HinfminError(Exception):
    """Base class for solver errors."""


class SingularPencil(HinfminError):
    """The pencil ``s E(mu) - A(mu)`` is (numerically) singular at the requested point."""

    def __init__(self, message, mu=None, omega=None):
        super().__init__(message)
        self.mu = mu
        self.omega = omega


class NonSimple(HinfminError):
    """Derivatives requested where the largest singular value is not simple."""


class IrregularPencil(HinfminError):
    """A reduced pencil ``s E_r - A_r`` is singular for (almost) all ``s``.

    Reduced models may lose regularity even when the full pencil is regular.
    No regularization is attempted; callers receive this error with a
    diagnostic instead.
    """


class EigFailure(HinfminError):
    """The dense generalized eigenvalue solver did not converge."""


class MaxIterExceeded(HinfminError):
    """An iterative method exhausted its iteration budget."""


class ConfigError(HinfminError):
    """A problem configuration or data file is invalid.

    ``problems`` carries every validation failure found, not only the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class MatrixMarketError(ConfigError):
    """Malformed Matrix Market file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line
