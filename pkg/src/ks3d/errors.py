"""Exception hierarchy for ks3d.

Every error raised on purpose by this package derives from KS3DError so
callers (and the CLI) can map failures to exit codes without matching on
builtin exception types.
"""


class KS3DError(Exception):
    """Base class for all ks3d errors."""


class NonConforming(KS3DError):
    """Mesh violates conformity (hanging vertex or bad cell incidence)."""


class InvertedCell(KS3DError):
    """A cell has non-positive signed volume."""


class UnclassifiedBoundaryFace(KS3DError):
    """A boundary face received no Dirichlet/Neumann label."""


class UnsupportedDegree(KS3DError):
    """Requested quadrature degree is not in the supported set."""


class QuadratureDegreeTooLow(KS3DError):
    """An assembly routine was handed a rule too weak for its integrand."""


class ShapeMismatch(KS3DError):
    """Matrix/vector dimensions do not match."""


class NotConverged(KS3DError):
    """An iterative solver or eigensolver exhausted its iteration budget."""


class Indefinite(KS3DError):
    """A matrix assumed positive definite showed negative curvature."""


class SingularSaddle(KS3DError):
    """Schur-complement breakdown: the saddle-point system is singular.

    This is the expected outcome when driving a velocity/pressure pairing
    whose inf-sup constant vanishes.
    """


class InconsistentLifting(KS3DError):
    """A Dirichlet lifting carries a nonzero value at a free DOF."""


class AssertionFailed(KS3DError):
    """A counterexample verification assertion did not hold."""


class EvaluationAtCorner(KS3DError):
    """Attempted evaluation of the singular solution at the reentrant edge."""


class UnknownCase(KS3DError):
    """Unknown manufactured-solution case name."""


class UnknownSpace(KS3DError):
    """Unknown velocity space name."""


class TooFewLevels(KS3DError):
    """Plotting requires at least two refinement levels."""
