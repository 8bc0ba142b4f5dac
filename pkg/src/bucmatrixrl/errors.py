"""Exception types raised across the package."""


class BucMatrixRLError(Exception):
    """Base class for all package errors."""


class InvalidModel(BucMatrixRLError, ValueError):
    """Features and core do not induce a valid transition kernel."""


class SingularKPsi(BucMatrixRLError, ValueError):
    """The next-state Gram matrix K_psi is not invertible."""


class InvalidFamily(BucMatrixRLError, ValueError):
    pass


class DimensionMismatch(BucMatrixRLError, ValueError):
    pass


class InvalidDelta(BucMatrixRLError, ValueError):
    pass


class EmptyHistory(BucMatrixRLError, ValueError):
    """A bias estimator was queried before it saw any data."""


class IncompleteLog(BucMatrixRLError, ValueError):
    pass


class ConfigError(BucMatrixRLError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class IncompatibleRuns(BucMatrixRLError, ValueError):
    pass


class ScenarioFailed(BucMatrixRLError, RuntimeError):
    """Some (seed, estimator) jobs failed; partial records were still written."""

    def __init__(self, out_dir, failures):
        detail = "; ".join(f"seed {s} {e}: {msg}" for s, e, msg in failures)
        super().__init__(f"{len(failures)} job(s) failed, partial results in {out_dir}: {detail}")
        self.out_dir = out_dir
        self.failures = failures
