"""Unconstrained solvers and the reductions that feed them."""
from .belief import BeliefStep, initial, obs_probs, update
from .exact import ExactSolution, solve_exact, truncation_depth
from .goal import GoalLagrangian, build_goal_lagrangian
from .pbvi import PbviConfig, PbviResult, solve_pbvi
from .policy import AlphaPolicy, TreePolicy, best_alpha, geometry_hash
from .scalarize import (
    GOAL_GAMMA, ScalarizedPomdp, fixed_lagrangian, goal_surrogate, lagrangian_problem, multipliers, objective_problem, scalarize,
)

__all__ = [
    "AlphaPolicy", "BeliefStep", "GOAL_GAMMA", "ExactSolution", "GoalLagrangian", "PbviConfig", "PbviResult",
    "ScalarizedPomdp", "TreePolicy", "best_alpha", "build_goal_lagrangian", "fixed_lagrangian",
    "geometry_hash", "goal_surrogate", "initial", "lagrangian_problem", "multipliers", "obs_probs", "objective_problem",
    "scalarize", "solve_exact", "solve_pbvi", "truncation_depth", "update",
]
