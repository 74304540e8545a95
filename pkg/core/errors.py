"""
Exception hierarchy for denguecast.
Each error carries the process exit code the CLI reports for it.
"""


class DengueCastError(Exception):
    """Base class for all expected failures"""

    exit_code = 1


class BadInputError(DengueCastError):
    """Invalid or unreadable input: files, panels, configs"""

    exit_code = 2


class InvalidLagError(BadInputError):
    """A lag or window outside the usable range of the panel"""


class SpecError(BadInputError):
    """A model specification that violates its own rules"""


class PlanValidationError(BadInputError):
    """A cross-validation plan with broken split integrity"""


class TooFewStationsError(BadInputError):
    """Not enough stations reporting to fit or krige"""


class MissingCovariateError(BadInputError):
    """A covariate cell needed for a forecast is unavailable"""

    def __init__(self, district: str, month: str, feature: str):
        self.district = district
        self.month = month
        self.feature = feature
        super().__init__(f"Missing covariate '{feature}' for district {district} at {month}")


class MissingArtifactError(DengueCastError):
    """A command ran before the artifact it depends on exists"""

    exit_code = 3


class ModelFitError(DengueCastError):
    """Model fitting failed"""


class ConvergenceError(ModelFitError):
    """Optimizer stopped without meeting the gradient tolerance"""


class SingularSystemError(ModelFitError):
    """A linear system stayed singular after regularized retries"""


class WeightsFrozenError(DengueCastError):
    """Ensemble weights may not be recomputed during evaluation"""
