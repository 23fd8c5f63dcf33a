"""Exception hierarchy shared by all modules."""


class BDFError(Exception):
    """Base class for domain errors raised by this package."""


class LatticeMismatch(BDFError, ValueError):
    """Two objects living on different lattices were combined."""


class GapCollapse(BDFError):
    """The mean-field operator has an eigenvalue closer to zero than allowed.

    Attributes
    ----------
    min_abs_eig : float
        Smallest eigenvalue modulus that triggered the error.
    """

    def __init__(self, min_abs_eig, gap_tol):
        self.min_abs_eig = float(min_abs_eig)
        self.gap_tol = float(gap_tol)
        super().__init__(
            f"spectral gap collapsed: min |eig| = {self.min_abs_eig:.3e} < {self.gap_tol:.3e}"
        )


class Diverged(BDFError):
    """Increments grew for too many consecutive iterations."""


class MaxIterExceeded(BDFError):
    """The iteration budget ran out before the tolerance was met."""


class QuadratureError(BDFError):
    """A quadrature failed to stabilise under refinement.

    Attributes
    ----------
    error_estimate : float
        Last observed change between successive refinements.
    """

    def __init__(self, message, error_estimate):
        self.error_estimate = float(error_estimate)
        super().__init__(f"{message} (error estimate {self.error_estimate:.3e})")

