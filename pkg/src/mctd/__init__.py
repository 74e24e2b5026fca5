"""Monte Carlo tree diffusion planners (sequential, parallel, sparse, fast) over grid mazes."""

from .cost import CostInputs, empirical_cost, predicted_cost_mctd, predicted_cost_smctd
from .maze import GridMaze, MazeParseError, load_fixture, load_maze, read_maze, recursive_division
from .planner import (
    DEFAULT_GUIDANCE_SET,
    PlannerConfig,
    PlanResult,
    fast_mctd_plan,
    mctd_plan,
    parse_config,
    replan_loop,
    run_variant,
    sparse_plan,
    variant_config,
)
from .sampler import (
    CompletionRequest,
    SamplerBudget,
    SamplerRequest,
    Subplan,
    SubplanSampler,
    SurrogateDenoiser,
    derive_seed,
)
from .trajectory import (
    LiftFailure,
    PlanningProblem,
    coarsen_trajectory,
    guidance_cost,
    is_plausible,
    lift_plan,
    trajectory_reward,
)
from .tree import Tree

__all__ = [
    "CompletionRequest",
    "CostInputs",
    "DEFAULT_GUIDANCE_SET",
    "GridMaze",
    "LiftFailure",
    "MazeParseError",
    "PlanResult",
    "PlannerConfig",
    "PlanningProblem",
    "SamplerBudget",
    "SamplerRequest",
    "Subplan",
    "SubplanSampler",
    "SurrogateDenoiser",
    "Tree",
    "coarsen_trajectory",
    "derive_seed",
    "empirical_cost",
    "fast_mctd_plan",
    "guidance_cost",
    "is_plausible",
    "lift_plan",
    "load_fixture",
    "load_maze",
    "mctd_plan",
    "parse_config",
    "predicted_cost_mctd",
    "predicted_cost_smctd",
    "read_maze",
    "recursive_division",
    "replan_loop",
    "run_variant",
    "sparse_plan",
    "trajectory_reward",
    "variant_config",
]
