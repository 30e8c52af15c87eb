"""Exception hierarchy; each class maps to a CLI exit code."""

from __future__ import annotations


class FuYauError(Exception):
    exit_code = 1


class ConfigError(FuYauError):
    exit_code = 2


class GeometryError(FuYauError):
    """Invalid metric or data (non-positive metric, astheno defect too large)."""

    exit_code = 2

    def __init__(self, message: str, max_eps: float | None = None, worst_index=None):
        super().__init__(message)
        self.max_eps = max_eps
        self.worst_index = worst_index


class ConeError(FuYauError):
    """A (1,1)-form left the Gamma_2 cone."""

    exit_code = 3

    def __init__(self, message: str, margins: tuple[float, float] | None = None):
        super().__init__(message)
        self.margins = margins


class NewtonError(FuYauError):
    """Newton failure; ``kind`` is one of 'stagnation', 'cone', 'krylov', 'maxiter'."""

    exit_code = 4

    def __init__(self, message: str, kind: str, state=None):
        super().__init__(message)
        self.kind = kind
        self.state = state


class ContinuationError(FuYauError):
    """Step-size underflow; carries the partial trace and last accepted state."""

    exit_code = 5

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace

    @property
    def last_t(self) -> float:
        if self.trace is None or not self.trace.states:
            return float("nan")
        return self.trace.states[-1].t


class KernelError(FuYauError):
    """Kernel extraction failed (no small eigenvalue, ambiguous dimension, sign change)."""

    exit_code = 6
