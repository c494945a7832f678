"""Generalized Wasserstein distances for finitely supported measures.

Computes the distance ``W_p^{a,b}`` between measures of possibly unequal
mass (removal/creation priced by ``a``, transport by ``b``), the flat
(bounded-Lipschitz) metric and its duality with ``W_1^{1,1}``, flow
estimates for measures pushed along Lipschitz vector fields, and the
dynamic formulation of the distance for transport with source.
"""

from .measures import (
    DiscreteMeasure,
    SignedDiscreteMeasure,
    parse_measure,
    serialize_measure,
    push_forward,
    sub_measure_check,
    total_mass,
    tv_norm,
)
from .exact_ot import (
    TransferencePlan,
    UnequalMassError,
    InvalidParameterError,
    WassersteinResult,
    check_split_identity,
    kr_dual,
    restrict_plan,
    wasserstein,
)
from .genwass import (
    GenWassParams,
    GenWassSolution,
    PartialCostCurve,
    generalized_distance,
    integral_bound_check,
    metric_axiom_suite,
    partial_cost_curve,
)
from .flat_dual import PotentialSolution, flat_metric, tv_dual, verify_flat_equals_genwass
from .flows import (
    FlowMap,
    IntegrationError,
    ScalarFunctionSpec,
    VectorFieldSpec,
    flow_push,
    integrate_flow,
    verify_flow_estimates,
)
from .dynamics import (
    SampleAndHoldRun,
    SourceSpec,
    SourcedTrajectory,
    action_functional,
    constructive_geodesic,
    random_feasible_path,
    sample_and_hold,
    solve_transport_with_source,
    verify_gbb,
    verify_sample_and_hold_convergence,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
