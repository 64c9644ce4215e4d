"""Exception hierarchy."""


class ThermnetError(Exception):
    """Base class for all package errors."""


class ModelError(ThermnetError):
    """Invalid model file or model object.

    ``path`` is the JSON location of the offending field when known,
    ``line``/``column`` are set for syntax errors.
    """

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        elif path:
            message = f"{path}: {message}"
        super().__init__(message)


class SolverError(ThermnetError):
    """Solver failure.

    ``state`` carries the best-so-far temperatures (node id -> K) and
    ``history`` the residual or step history, whichever applies.
    """

    def __init__(self, message, state=None, history=None):
        super().__init__(message)
        self.state = state
        self.history = history if history is not None else []
