"""Two actions, two constraints that pull in opposite directions.

The constraints r1 = (1, -1) and r2 = (-1, 1) can only both be met (with
equality) by playing each action half the time. As a game against an opponent
who picks the constraint, that is matching pennies, and the learner's Q table
should approach [[1, -1], [-1, 1]].
"""

import numpy as np

from markovbandit import assemble_game, build_static_example, fixed_point_discounted, run_discounted

game = assemble_game(build_static_example("example1"))
Q_star, policy = fixed_point_discounted(game)
print("fixed point Q*:\n", Q_star[0])
print("maximin policy:", policy[0])

trace = run_discounted(game, 5000, seed=1, snapshot_every=500, record_steps=False)
for step, Q, pi in zip(trace.snapshot_steps, trace.q_snapshots, trace.policies):
    err = np.abs(Q[0] - Q_star[0]).max()
    print(f"step {step:5d}  Q11={Q[0, 0, 0]:+.3f}  sup error {err:.3f}  policy {pi[0].round(3)}")
