"""Maximin Q-learning for constrained MDPs posed as Markov-Bandit games."""

__version__ = "0.1.0"

from markovbandit.average import AverageLearner, f_mean, run_average  # noqa: E402
from markovbandit.core import TabularModel, check_connectivity, validate_model  # noqa: E402
from markovbandit.discounted import DiscountedLearner, maximin_policy, run_discounted  # noqa: E402
from markovbandit.environments import (  # noqa: E402
    ConstrainedProblem,
    assemble_game,
    build_queue,
    build_static_example,
    preset,
    shift_rewards,
)
from markovbandit.evaluation import (  # noqa: E402
    Verdict,
    bisect_delta,
    feasibility_verdict,
    mc_constraint_values,
)
from markovbandit.matrix_game import solve_maximin  # noqa: E402
from markovbandit.oracle import (  # noqa: E402
    apply_T_average,
    apply_T_discounted,
    cmdp_lp_discounted,
    feasibility_value,
    fixed_point_discounted,
    rvi_average,
)

__all__ = [
    "AverageLearner", "ConstrainedProblem", "DiscountedLearner", "TabularModel", "Verdict",
    "apply_T_average", "apply_T_discounted", "assemble_game", "bisect_delta", "build_queue",
    "build_static_example", "check_connectivity", "cmdp_lp_discounted", "f_mean",
    "feasibility_value", "feasibility_verdict", "fixed_point_discounted", "maximin_policy",
    "mc_constraint_values", "preset", "run_average", "run_discounted", "rvi_average",
    "shift_rewards", "solve_maximin", "validate_model",
]
