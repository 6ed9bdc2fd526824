"""Three actions, three constraints, one feasible mixed strategy.

Action j earns 1/2 for constraint j only, and each constraint asks for a
discounted value of at least 1/3. The only way to satisfy all three is the
uniform strategy. Ten seeds are run and the worst l1 distance to uniform
is tracked over the first thousand steps.
"""

import numpy as np

from markovbandit import assemble_game, build_static_example, feasibility_value, run_discounted

game = assemble_game(build_static_example("example2"))
print(f"game value {feasibility_value(game):+.2e} (zero: the targets are met exactly)")
tight = assemble_game(build_static_example("example2", target=0.4))
print(f"with targets of 0.4 the value is {feasibility_value(tight):+.4f}, so no policy works")

traces = [run_discounted(game, 1000, seed=s, snapshot_every=100, record_steps=False)
          for s in range(10)]
for i, step in enumerate(traces[0].snapshot_steps):
    worst = max(np.abs(t.policies[i][0] - 1 / 3).sum() for t in traces)
    print(f"step {step:4d}  worst l1 error {worst:.3f}")
