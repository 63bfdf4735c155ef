"""Residual-prediction tests for high-dimensional generalized linear models.

Provides a goodness-of-fit test (sample splitting, a residual-predicting
regression forest, and a near-orthogonalized projection direction) and a
group-significance test (nodewise directions with a multiplier
bootstrap), together with the penalized solvers they are built on.

Numerical kernels run on a compiled extension when available, with a
pure-Python fallback selected at import; see :func:`backend_name` and
:func:`set_backend`.
"""

from ._backend import backend_name, set_backend
from .families import (Dataset, Family, get_family, pearson_residuals,
                       weight_diag)
from .forest import (ForestConfig, RegressionForest, forest_fit,
                     forest_predict, make_predictor, predictor_names,
                     register_predictor)
from .gof import GofConfig, GofResult, gof_test, normal_sf
from .group import (GroupTestConfig, GroupTestResult, bootstrap_quantile,
                    group_test)
from .simulate import (McReport, McScenario, Misspec, SCENARIOS,
                       emit_report, gen_glm_response, gen_toeplitz_design,
                       get_scenario, run_mc, scenario_names)
from .solvers import (CvResult, DegenerateDirection, LassoFit, SqrtLassoFit,
                      default_lambda_sq, direction_from_sqrt_lasso,
                      glm_lasso, glm_lasso_cv, nodewise_sqrt_lasso,
                      sqrt_lasso)

__version__ = "0.1.0"

__all__ = [
    "backend_name", "set_backend",
    "Dataset", "Family", "get_family", "pearson_residuals", "weight_diag",
    "ForestConfig", "RegressionForest", "forest_fit", "forest_predict",
    "make_predictor", "predictor_names", "register_predictor",
    "GofConfig", "GofResult", "gof_test", "normal_sf",
    "GroupTestConfig", "GroupTestResult", "bootstrap_quantile",
    "group_test",
    "McReport", "McScenario", "Misspec", "SCENARIOS", "emit_report",
    "gen_glm_response", "gen_toeplitz_design", "get_scenario", "run_mc",
    "scenario_names",
    "CvResult", "DegenerateDirection", "LassoFit", "SqrtLassoFit",
    "default_lambda_sq", "direction_from_sqrt_lasso", "glm_lasso",
    "glm_lasso_cv", "nodewise_sqrt_lasso", "sqrt_lasso",
    "__version__",
]
