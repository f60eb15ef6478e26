from abc import ABC
from typing import Self


class Mistake(Exception, ABC):
    """
    Class representing an error raised by the cross-validation toolkit.

    Validation mistakes are problems with the inputs that the user can fix.<br/>
    Numerical mistakes signal that a computation broke down for the given inputs.
    """

    message: str
    exit_code: int
    culprit_fold: int | None = None

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    @property
    def name(self) -> str:
        return type(self).__name__

    def with_fold(self, fold_id: int) -> Self:
        """Tag the mistake with the fold being processed when it was raised"""
        if self.culprit_fold is None:
            self.culprit_fold = fold_id
            self.message = f"{self.message} (fold {fold_id})"
            self.args = (self.message,)
        return self


class ValidationMistake(Mistake, ABC):
    """Base class for mistakes caused by invalid inputs"""

    exit_code = 1


class NumericalMistake(Mistake, ABC):
    """Base class for mistakes caused by a numerical breakdown"""

    exit_code = 2


# --- Validation mistakes


class DimensionMismatch(ValidationMistake):
    """Mistake raised when array dimensions are inconsistent"""


class NoInterceptSpan(ValidationMistake):
    """Mistake raised when the ones vector is not in the span of the fixed-effect design"""

    def __init__(self, residual: float):
        super().__init__(
            f"Ones vector is not in the span of X1 (normalized residual {residual:.3g})"
        )
        self.residual = residual


class MissingLabels(ValidationMistake):
    """Mistake raised when cluster labels are required but absent"""

    def __init__(self):
        super().__init__("Cluster labels are required for leave-cluster-out folds")


class BadK(ValidationMistake):
    """Mistake raised when the number of K-fold folds is out of range"""

    def __init__(self, k: int | None, n: int):
        super().__init__(f"K-fold needs 2 <= k <= N, got k={k} for N={n}")


class EmptyFold(ValidationMistake):
    """Mistake raised when a fold holds out no observation"""

    def __init__(self):
        super().__init__("Fold is empty")


class EmptyTrainingSet(ValidationMistake):
    """Mistake raised when removing a fold leaves no training observation"""

    def __init__(self):
        super().__init__("Removing the fold leaves an empty training set")


class HeterogeneousFoldRows(ValidationMistake):
    """Mistake raised when a fold's design rows (or variances) are not identical"""

    def __init__(self):
        super().__init__("Fold rows of X are not identical")


class BadPriors(ValidationMistake):
    """Mistake raised when the sampler configuration is invalid"""


class RoleError(ValidationMistake):
    """Mistake raised when dataset column roles are missing or inconsistent"""


class ParseError(ValidationMistake):
    """Mistake raised when an input file cannot be parsed"""

    line: int | None

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ManifestMismatch(ValidationMistake):
    """Mistake raised when a draws file disagrees with its manifest"""


class InvalidStructure(ValidationMistake):
    """Mistake raised when covariance structure parameters are invalid"""


class SyntheticConfigError(ValidationMistake):
    """Mistake raised when a synthetic dataset configuration is invalid"""


class UnknownMethod(ValidationMistake):
    """Mistake raised when the user asks for an unknown method"""

    def __init__(self, method: str, valid: list[str]):
        super().__init__(
            f"Unknown method '{method}', valid methods are: {', '.join(valid)}"
        )


class InvalidOutputPath(ValidationMistake):
    """Mistake raised when the output directory is invalid or not writable"""


class SlowMethodRefused(ValidationMistake):
    """Mistake raised when a method would exceed the run time budget"""


class MissingPseudoResponse(ValidationMistake):
    """Mistake raised when a non-gaussian model is used without a pseudo-response"""

    def __init__(self):
        super().__init__(
            "Poisson-log models need a pseudo-response before running estimators"
        )


class UsageMistake(ValidationMistake):
    """Mistake raised when the command line cannot be parsed"""


# --- Numerical mistakes


class NotPositiveDefinite(NumericalMistake):
    """Mistake raised when a matrix expected to be positive-definite fails Cholesky"""

    culprit_draw: int | None

    def __init__(self, what: str, culprit_draw: int | None = None):
        suffix = "" if culprit_draw is None else f" at draw {culprit_draw}"
        super().__init__(f"{what} is not positive-definite{suffix}")
        self.culprit_draw = culprit_draw


class SingularDowndate(NumericalMistake):
    """Mistake raised when removing a fold destroys identifiability"""

    def __init__(self, denominator: float):
        super().__init__(
            f"Fold removal is singular (downdate denominator {denominator:.3g})"
        )
        self.denominator = denominator


class NonpositiveRate(NumericalMistake):
    """Mistake raised when a fitted Poisson rate is not strictly positive"""

    def __init__(self, culprit_index: int):
        super().__init__(f"Fitted rate is not positive at observation {culprit_index}")
        self.culprit_index = culprit_index


class DegenerateWeights(NumericalMistake):
    """Mistake raised when importance weights collapse onto too few draws"""

    def __init__(self, ess: float):
        super().__init__(f"Importance weights are degenerate (ESS {ess:.3g} < 2)")
        self.ess = ess


class NonFiniteLogDensity(NumericalMistake):
    """Mistake raised when a log-density used for weighting is not finite"""

    def __init__(self, culprit_draw: int):
        super().__init__(f"Log-density is not finite at draw {culprit_draw}")
        self.culprit_draw = culprit_draw


class TailFitFailure(NumericalMistake):
    """Mistake raised when the generalized Pareto tail cannot be fitted"""


class ZeroDenominator(NumericalMistake):
    """Mistake raised when a ground-truth prediction exactly equals its observation"""

    def __init__(self, culprit_index: int):
        super().__init__(
            f"MCV prediction equals the observation at row {culprit_index}"
        )
        self.culprit_index = culprit_index
