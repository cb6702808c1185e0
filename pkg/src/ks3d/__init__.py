"""Low-order nonconforming finite elements for the 3D Stokes problem.

The package provides two velocity discretizations built from conforming P1,
conforming P2 / face-bubble enrichments, and the nonconforming (face-mean
continuous) P1 element, together with piecewise-constant pressure:

* ``ks-p2``:     P1-conforming x P2-conforming x P1-nonconforming
* ``ks-bubble``: P1-conforming x (P1-conforming + face bubbles) x P1-nonconforming

plus the conforming Bernardi-Raugel element (``br``) for comparison.  On top
of the solver sit numerical stability diagnostics (discrete Korn and inf-sup
constants), two small meshes on which the naive pairings provably degenerate,
and manufactured-solution convergence studies.
"""

from .errors import (
    KS3DError,
    NonConforming,
    InvertedCell,
    UnclassifiedBoundaryFace,
    UnsupportedDegree,
    QuadratureDegreeTooLow,
    ShapeMismatch,
    NotConverged,
    Indefinite,
    SingularSaddle,
    InconsistentLifting,
    AssertionFailed,
    EvaluationAtCorner,
    UnknownCase,
    UnknownSpace,
    TooFewLevels,
)

__version__ = "0.1.0"

__all__ = [
    "KS3DError",
    "NonConforming",
    "InvertedCell",
    "UnclassifiedBoundaryFace",
    "UnsupportedDegree",
    "QuadratureDegreeTooLow",
    "ShapeMismatch",
    "NotConverged",
    "Indefinite",
    "SingularSaddle",
    "InconsistentLifting",
    "AssertionFailed",
    "EvaluationAtCorner",
    "UnknownCase",
    "UnknownSpace",
    "TooFewLevels",
    "__version__",
]
