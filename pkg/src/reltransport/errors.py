"""Exception hierarchy shared by every module.

Each class carries a stable machine-readable ``code`` that the command line
surface reports on failure.
"""


class TransportError(Exception):
    """Base class for all package errors."""

    code = "ERROR"
    module = "reltransport"


class DatasetError(TransportError, ValueError):
    """Structural problem with an input table or dataset."""

    code = "DATASET_INVALID"
    module = "datamodel"

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class ConditionViolation(TransportError):
    """A dataset violates an identifiability condition required by an estimator."""

    module = "datamodel"

    def __init__(self, message, code="CONDITION_VIOLATED"):
        super().__init__(message)
        self.code = code


class GLMError(TransportError):
    code = "GLM_FAILED"
    module = "glm"


class SingularDesignError(GLMError):
    code = "SINGULAR_DESIGN"


class ConvergenceError(GLMError):
    """IRLS did not converge; ``coefficients`` holds the last iterate."""

    code = "NOT_CONVERGED"

    def __init__(self, message, coefficients=None, iterations=0):
        super().__init__(message)
        self.coefficients = coefficients
        self.iterations = iterations


class BoundaryError(ConvergenceError):
    """Fitted means ran into the edge of the valid range (separation, log-binomial)."""

    code = "BOUNDARY_NOT_CONVERGED"


class ModelDocumentError(TransportError, ValueError):
    code = "MODEL_DOCUMENT_INVALID"
    module = "nuisance"


class RatioEvaluationError(TransportError):
    """The control-arm mean fell below the floor at some covariate value."""

    code = "RATIO_UNDEFINED"
    module = "nuisance"

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class EstimationError(TransportError):
    code = "ESTIMATION_FAILED"
    module = "estimators"


class BootstrapError(EstimationError):
    code = "BOOTSTRAP_FAILED"

    def __init__(self, message, failed=0, total=0):
        super().__init__(message)
        self.failed = failed
        self.total = total


class ScenarioError(TransportError, ValueError):
    code = "SCENARIO_INVALID"
    module = "simulate"
