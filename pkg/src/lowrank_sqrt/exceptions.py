"""Exception types raised by the library."""

import numpy as np


class SingularOperatorError(np.linalg.LinAlgError):
    """A Woodbury inner matrix is singular, or the perturbed operator is indefinite."""


class NotPSDError(ValueError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class NoPSDSolutionError(ValueError):
    """The quadratic matrix equation has no positive semidefinite solution."""


class InfeasibleDowndateError(ValueError):
    """``A - Z Z^T`` is not positive definite.

    Attributes
    ----------
    min_eig : float
        Smallest eigenvalue of ``I - Z^T A^{-1} Z``.
    """

    def __init__(self, min_eig, message=None):
        self.min_eig = float(min_eig)
        if message is None:
            message = f"downdate infeasible: min eigenvalue of I - Z^T A^-1 Z is {self.min_eig:.3e}"
        super().__init__(message)


class SolverConfigError(ValueError):
    """The requested solver configuration cannot run with the supplied operator."""
