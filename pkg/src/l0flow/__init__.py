"""Cost geometry along exact model Ricci flows.

Library layout: model flows and closed forms (``flows``), the generic
curve machinery (``solver``), transport (``transport``), the coupled walk
(``coupling``), statistical verification (``otverify``), a property suite
(``checks``), and the command-line harness (``cli``).
"""

from .geometry import (
    ConfigError,
    FlowBounds,
    L0FlowError,
    MetricFamily,
    MultiplicityError,
    Point,
    SolverError,
    TangentVec,
    dist,
    exp_map,
    grad_scalar_curvature,
    metric_inner,
    ricci,
    scalar_curvature,
)
from .flows import (
    SphereFlow,
    SphereL0Oracle,
    TorusFlow,
    make_flow,
    sphere_l0_distance,
    torus_l0_distance,
)
from .curves import L0GeodesicResult, SpaceTimeCurve
from .solver import (
    SolverOptions,
    l0_action,
    l0_distance,
    l0_exp,
    l0_geodesic_ivp,
    l0_spatial_gradients,
    l0_time_partials,
    nonpos_hessian_probe,
)
from .transport import TransportMap, spacetime_transport, transport_matrix
from .coupling import (
    CouplingPath,
    RngStream,
    TimeSchedule,
    coupling_step,
    run_coupling,
    run_ensemble,
    sample_ball,
)
from .otverify import (
    PhiSpec,
    TransportPlan,
    l0_cost_matrix,
    monotonicity_experiment,
    optimal_assignment,
    supermartingale_test,
)

__version__ = "0.1.0"
