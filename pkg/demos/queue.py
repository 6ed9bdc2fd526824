"""A single-server queue with service and flow constraints.

The objective is to keep the queue short. Costs are written as rewards,
so the question is the largest delta for which "objective value >= delta"
can hold together with both constraints. The occupancy LP answers that
exactly. The learner is then run on the shifted game at two thresholds, and
its final policy is audited with 10^4 Monte Carlo trajectories.

The learner runs take a minute or two each.
"""

import sys

from markovbandit import (
    Verdict,
    assemble_game,
    bisect_delta,
    build_queue,
    cmdp_lp_discounted,
    feasibility_verdict,
    mc_constraint_values,
    run_discounted,
    shift_rewards,
)
from markovbandit.oracle import lp_feasible_at

queue = build_queue()
print(f"LP optimum of the objective: {cmdp_lp_discounted(queue).value:.4f}")

delta_star, history = bisect_delta(
    lambda d: Verdict.FEASIBLE if lp_feasible_at(queue, d) else Verdict.INFEASIBLE, 9.0, 10.0)
print(f"LP bisection on [9, 10]: delta* = {delta_star:.4f} after {len(history)} solves")

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
for delta in (9.5, 9.7):
    problem = shift_rewards(queue, delta)
    trace = run_discounted(assemble_game(problem), steps, seed=0, record_steps=False)
    estimates = mc_constraint_values(problem, trace.final_policy, n_traj=10_000, seed=1)
    means = ", ".join(f"{e.mean:+.3f}" for e in estimates)
    print(f"delta={delta}: constraint means {means} -> {feasibility_verdict(estimates).value}")
