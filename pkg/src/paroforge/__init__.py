"""Two-stage adaptive robust linear optimization with Pareto refinement."""

from .lp import LpProblem, LpSolution, LpStatus, solve_lp, solve_milp
from .model import (
    Evaluation,
    StructureReport,
    TwoStageProblem,
    UncertaintySet,
    ValidationReport,
    detect_structure,
    evaluate,
    parse_problem,
    serialize_problem,
    validate,
)
from .geometry import enumerate_vertices, interior_point, is_simplex, sample_uniform, vertices_of
from .fme import eliminate, filter_redundant, reconstruct_recourse
from .robust import (
    BackSubstitutionRule,
    LinearDecisionRule,
    LinearRule,
    OptimalRecourseRule,
    StaticRule,
    optimal_recourse,
    solve_aro_vertices,
    solve_static_ldr,
    worst_case,
)
from .pareto import (
    ValueLedger,
    algorithm1,
    certify_unique,
    check_extension,
    dr_paro,
    improvement,
    max_difference_scenario,
    pro_ldr,
    refine_d0,
)
from .bench import FacilityLocationConfig, gen_facility_location, rt_example, run_benchmark, run_comparison

__version__ = "0.1.0"
