"""Exception hierarchy shared by all modules."""


class MorError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(MorError):
    """Operands have inconsistent shapes."""


class NonStableMatrix(MorError):
    """A matrix required to be Hurwitz has an eigenvalue with Re >= 0."""


class NonStableSystem(MorError):
    """A state-space system required to be stable is not."""


class SingularOperator(MorError):
    """A linear matrix equation has no unique solution."""


class SizeLimitExceeded(MorError):
    """Problem size exceeds a hard limit of a dense brute-force routine."""


class DefectiveMatrix(MorError):
    """Eigenvector matrix is numerically singular (repeated/defective eigenvalues)."""


class RankDeficient(MorError):
    """Subspace bases are numerically rank deficient or cannot be biorthogonalized."""


class PoleHit(MorError):
    """Evaluation point coincides with a system pole."""


class InfiniteNorm(MorError):
    """Requested norm is infinite (nonzero feedthrough where none is allowed)."""


class NotInWeightedH2(MorError):
    """System fails a weighted-H2 membership requirement."""


class NonConvergedQuadrature(MorError):
    """Frequency quadrature failed to converge within the refinement budget."""


class UnstableReducedModel(MorError):
    """Final reduced model is unstable and stability repair was disabled."""


class ParseError(MorError):
    """Malformed manifest or matrix file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
            if line is not None:
                loc += f"{line}:"
            loc += " "
        super().__init__(loc + message)
        self.path = path
        self.line = line
