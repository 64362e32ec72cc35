"""Discrete-time optimal control on embedded manifolds.

Defines control problems on closed embedded submanifolds with state,
control-set, and DFT frequency-support constraints, verifies the discrete
first-order necessary conditions as numeric residuals, recovers the
associated multipliers, and solves small instances directly and by indirect
shooting.
"""

from .errors import (
    DynamicsLeftManifold,
    GeoPMPError,
    InfeasibleError,
    InfeasiblePointError,
    JacobianError,
    MembershipError,
    NonConvergence,
    NotInSetError,
    ParseError,
    SingularStationarity,
    TentUnavailable,
)
from .frequency import (
    FrequencyConstraintMatrices,
    FrequencySpec,
    build_freq_matrices,
    dft,
    freq_residual,
    kernel_projector,
    support,
)
from .manifolds import (
    Covector,
    Euclidean,
    Manifold,
    ManifoldPoint,
    Product,
    SmoothMap,
    SpecialOrthogonal3,
    Sphere,
    TangentVector,
    check_jacobians,
    cotangent_pullback,
    covectors_close,
    differential,
    retract,
    tangent_projector,
)
from .ocp import (
    AffineSubspace,
    Box,
    ControlProblem,
    ControlSet,
    FeasibilityReport,
    FullSpace,
    Polytope,
    SmoothIneq,
    Trajectory,
    feasibility_report,
    map_trajectory_affine,
    reembed_affine,
    rollout,
    total_cost,
)
from .pmp import (
    PMPCertificate,
    PMPReport,
    RecoveryResult,
    backward_adjoint,
    complementarity_residual,
    recover_multipliers,
    stationarity_residual,
    stationarity_vector,
    verify,
)
from .problem_io import (
    certificate_from_dict,
    certificate_to_dict,
    parse_problem,
    parse_problem_dict,
    read_trajectory_csv,
    serialize_problem,
    trajectory_to_csv,
    write_trajectory_csv,
)
from .solvers import (
    SolveOptions,
    SolveResult,
    objective_gradient,
    solve,
    solve_direct,
    solve_shooting,
)
from .tents import (
    ActiveSet,
    ConeH,
    ConeV,
    active_set,
    dual_cone,
    is_regular,
    local_tent,
)

__version__ = "0.1.0"
