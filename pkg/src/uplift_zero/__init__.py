"""Dispatch, pricing, uplift, and uplift-eliminating revenue amendments
for small non-convex electricity markets.

The pipeline: solve the centralized dispatch problem, price it (convex-hull
or marginal), measure each producer's uplift, then build per-unit revenue
amendments generated by redundant constraints so that the dispatched
schedule maximizes every producer's amended profit at the market price,
with the profit maxima and the Lagrangian duality gap unchanged.
"""

from .amendments import (
    AggregateConstraint,
    AmendmentBundle,
    FAMILIES,
    aggregate_constraint,
    build_constant_profit,
    build_convex_hull_amendment,
    build_family,
    build_general_form,
    build_linear_unit,
    build_status_delta,
    build_status_profile,
    build_uplift_delta,
    bundles_from_json,
    bundles_to_json,
    check_zero_total_uplift,
    profit_expr,
    verify_conditions,
)
from .dispatch import DispatchResult, economic_dispatch, solve_centralized, verify_price_equilibrium
from .errors import (
    EnumerationLimitError,
    InfeasibleError,
    PreconditionError,
    UpliftZeroError,
    ValidationError,
)
from .expr import (
    Abs,
    Add,
    Const,
    Delta,
    Expr,
    Max,
    Min,
    Mul,
    Output,
    Status,
    Step,
    Sub,
    add,
    delta_of,
    expr_from_dict,
    expr_loads,
    expr_dumps,
    expr_to_text,
    neg,
    scale,
    status_delta_of,
)
from .model import (
    Formulation,
    MarketInstance,
    Schedule,
    ToleranceConfig,
    UnitParams,
    UnitSchedule,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    save_instance,
    scarf_instance,
)
from .pricing import (
    PriceResult,
    convex_hull_price,
    dual_function,
    marginal_price,
    price_for_method,
    standard_profit,
    unit_profit_max,
)
from .redundant import (
    ConstraintClass,
    box_structure,
    classify_constraint,
    constraint_cap,
    mu_max,
    multiplier_optimality,
    repair,
    strong_duality_scan,
    zero_uplift_necessary,
)
from .uplift import (
    MinUpliftResult,
    UnitUplift,
    UpliftReport,
    amended_uplift,
    in_m_plus,
    min_uplift,
    uplift_report,
)

__version__ = "0.1.0"

__all__ = [
    "Abs",
    "Add",
    "add",
    "delta_of",
    "neg",
    "scale",
    "status_delta_of",
    "AggregateConstraint",
    "AmendmentBundle",
    "Const",
    "Delta",
    "DispatchResult",
    "EnumerationLimitError",
    "Expr",
    "FAMILIES",
    "Formulation",
    "InfeasibleError",
    "MarketInstance",
    "Max",
    "Min",
    "Mul",
    "Output",
    "PreconditionError",
    "PriceResult",
    "Schedule",
    "Status",
    "Step",
    "Sub",
    "ToleranceConfig",
    "UnitParams",
    "UnitSchedule",
    "UnitUplift",
    "UpliftReport",
    "UpliftZeroError",
    "ValidationError",
    "ConstraintClass",
    "MinUpliftResult",
    "aggregate_constraint",
    "amended_uplift",
    "box_structure",
    "build_constant_profit",
    "build_convex_hull_amendment",
    "build_family",
    "build_general_form",
    "build_linear_unit",
    "build_status_delta",
    "build_status_profile",
    "build_uplift_delta",
    "bundles_from_json",
    "bundles_to_json",
    "check_zero_total_uplift",
    "classify_constraint",
    "constraint_cap",
    "convex_hull_price",
    "in_m_plus",
    "dual_function",
    "economic_dispatch",
    "expr_dumps",
    "expr_from_dict",
    "expr_loads",
    "expr_to_text",
    "instance_from_dict",
    "instance_to_dict",
    "load_instance",
    "marginal_price",
    "min_uplift",
    "mu_max",
    "multiplier_optimality",
    "price_for_method",
    "profit_expr",
    "repair",
    "save_instance",
    "scarf_instance",
    "solve_centralized",
    "standard_profit",
    "strong_duality_scan",
    "unit_profit_max",
    "uplift_report",
    "verify_conditions",
    "verify_price_equilibrium",
    "zero_uplift_necessary",
]
