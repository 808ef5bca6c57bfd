"""Target-population causal mean ratios and treatment effects under transportability
of conditional relative effect measures from a randomized trial."""

__version__ = "0.1.0"

from .datamodel import (  # noqa: E402
    AnalysisDataset,
    ColumnSchema,
    ObservationRow,
    ValidationReport,
    load_dataset,
    load_trial_target,
    validate_dataset,
    write_dataset,
)
from .diagnostics import (  # noqa: E402
    CompatReport,
    StratumMeans,
    check_restriction,
    compat_check,
    positivity_report,
)
from .errors import *  # noqa: E402,F401,F403
from .estimators import (  # noqa: E402
    Estimate,
    Interval,
    Pipeline,
    bootstrap_ci,
    estimate_ate,
    estimate_chi,
    estimate_phi,
    estimate_psi,
)
from .glm import FittedModel, ModelSpec, fit_glm, predict_mean  # noqa: E402
from .nuisance import (  # noqa: E402
    ConstantRatio,
    NuisanceSet,
    RatioModel,
    fit_g,
    fit_h,
    fit_iterated,
    fit_m,
    fit_ratio,
    import_external_model,
)
from .simulate import ScenarioSpec, TrueValues, generate, true_estimands, worked_example  # noqa: E402
