"""Plan search: exact branch and bound, binary search on T, multi-model and replanning."""

from .api import (ReplanDelta, binary_search_on_T, clip_to_availability, feasibility_check,
                  makespan_bounds, replan, solve, solve_exact, solve_multi_model, warm_start)
from .plan import InfeasibleError, Plan, SolverOptions, check_plan, plan_makespan
from .problem import Problem, build_problem, inner_assign, proportional_assign

__all__ = [
    "InfeasibleError", "Plan", "Problem", "ReplanDelta", "SolverOptions", "binary_search_on_T",
    "build_problem", "check_plan", "clip_to_availability", "feasibility_check", "inner_assign",
    "makespan_bounds", "plan_makespan", "proportional_assign", "replan", "solve", "solve_exact",
    "solve_multi_model", "warm_start",
]
