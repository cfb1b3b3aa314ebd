"""Exception types raised by guards throughout the package."""

from __future__ import annotations


class GuardError(ValueError):
    """A precondition or resolution guard was violated.

    Parameters
    ----------
    guard : str
        Dotted identifier ``module.name`` of the violated guard, e.g.
        ``"oracle.cfl"``.
    message : str
        Human readable explanation.
    """

    def __init__(self, guard: str, message: str):
        super().__init__(f"[{guard}] {message}")
        self.guard = guard
        self.module = guard.split(".")[0]
        self.detail = message


class NumericalFailure(RuntimeError):
    """Integration produced invalid values (non-finite, singular matrices)."""
