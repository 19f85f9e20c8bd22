"""ERGMs for samples of many small networks.

Specify models over samples of small labeled graphs, simulate them exactly or
by MCMC, fit by pseudolikelihood, exact likelihood, or MC likelihood, run
Wald tests and multicollinearity diagnostics, check fit with simulation-based
residuals, and size studies with Monte-Carlo power curves.
"""

from .errors import (
    CollinearityError,
    DataError,
    DegeneracyError,
    EnumerationBoundError,
    ManynetsError,
    ModelValidationError,
    NonconvergenceError,
    SeparationError,
)
from .networks import (
    HOUSEHOLD_GROUPS,
    MAX_NODES,
    Network,
    NetworkAttributes,
    NetworkSample,
    NodeAttributes,
    build_network,
    toggle_edge,
)
from .io import load_fit, load_sample, save_fit, save_sample
from .model import (
    Modifier,
    ModelSpec,
    ModelTerm,
    Offset,
    StatTerm,
    load_model,
    model_spec,
    save_model,
    term,
)
from .stats import (
    change_stat,
    change_vector,
    design_vector,
    eval_stat,
    modifier_value,
    offset_change,
    offset_value,
    sample_statistic,
    validate_model,
)
from .sampling import (
    Constraint,
    ExactMoments,
    FREE,
    SimConfig,
    enumerate_graphs,
    exact_moments,
    exact_sample,
    mh_sample,
    simulate_sample,
)
from .estimation import FitResult, exact_mle, loglik, mcmc_mle, mple
from .inference import (
    CoefRow,
    Contrast,
    EffectCurve,
    TestResult,
    VifResult,
    VifRow,
    coef_table,
    contrast_test,
    cor_matrix,
    format_pvalue,
    omnibus_wald,
    size_effect_curve,
    stars,
    to_effects_parametrization,
    vif,
)
from .power import (
    AttributeRule,
    FisherInfo,
    PowerCurve,
    PowerPoint,
    PowerScenario,
    empirical_power,
    fisher_info,
    fit_model_for,
    power_scenario,
    scaling_regime_offsets,
)
from .diagnostics import (
    GofRow,
    ResidualRow,
    ResidualTable,
    gof_summary,
    residual_regression,
    simulated_residuals,
)
from .rng import substream

__version__ = "0.1.0"
