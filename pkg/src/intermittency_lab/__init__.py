"""Numerics for an intermittent interval map with a neutral fixed point.

Subpackages:
  map_core    map arithmetic and the first-return structure of Y = (1/2, 1]
  measure     invariant density (Ulam discretization + Birkhoff cross-check)
  renewal_ops first-return operators, renewal identity, correlation decay
  bc_harness  interval schedules and Borel-Cantelli hit statistics
  cli         command-line front end
"""

__version__ = "0.1.0"

from .map_core import (  # noqa: F401
    DomainError,
    FirstReturnStructure,
    Interval,
    MapParams,
    NumericError,
    apply_map,
    build_return_structure,
    derivative,
    first_return_time,
    inverse_branch,
    iterate_orbit,
    left_inverse,
)
from .measure import (  # noqa: F401
    GradedMesh,
    InvariantDensity,
    birkhoff_histogram,
    build_ulam,
    default_grading,
    measure_of_interval,
    stationary_density,
)
from .renewal_ops import (  # noqa: F401
    CorrelationEngine,
    RenewalDiagnostics,
    ReturnOperators,
    StepFunction,
    compositions,
    kac_check,
    projector_P,
    renewal_identity_check,
    uniform_y_mesh,
    var_norm,
)
from .bc_harness import (  # noqa: F401
    HitReport,
    CriterionReport,
    IntervalSchedule,
    criterion_ratios,
    make_schedule,
    pullback,
    run_experiment,
)
