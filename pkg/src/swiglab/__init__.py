"""Single-world intervention graphs, discrete structural models with exact
oracles, and plug-in estimators for trial-to-population transport."""

from .errors import (
    DesignError,
    EmptyDataset,
    InvalidEstimand,
    InvalidSpec,
    MismatchedEstimands,
    NoNonParticipants,
    NonfiniteWeight,
    NoParticipants,
    PositivityViolation,
    SwiglabError,
)
from .estimators import (
    EstimateReport,
    Estimator,
    NuisanceTables,
    contrast,
    estimate,
    fit_nuisances,
    gformula_subset,
    gformula_target,
    ipw_subset,
    ipw_target,
    positivity_report,
    trial_population,
)
from .fixtures import ScenarioId, UnknownScenario, graph_variant, independence_table, scenario_graph
from .graph import (
    CausalGraph,
    DSepQuery,
    GraphError,
    build_graph,
    d_separated,
    format_graph,
    open_paths,
    parse_graph,
    restrict_to_context,
    split_intervene,
    to_dot,
)
from .scm import (
    Dataset,
    Estimand,
    Population,
    ScenarioSpec,
    asymptotic_bias,
    consistency_check,
    default_spec,
    enumerate_joint,
    functional_truth,
    oracle_truth,
    sample_interventional,
    sample_non_nested,
    sample_observational,
)

__version__ = "0.1.0"
