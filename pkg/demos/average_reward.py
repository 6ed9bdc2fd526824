"""Average-reward learning on a small two-state model.

With no discount the learner subtracts the mean of its own Q table from every
target, and that mean becomes the estimate of the long-run gain. The result is
compared with relative value iteration on the known model.
"""

import numpy as np

from markovbandit import TabularModel, run_average, rvi_average
from markovbandit.oracle import span

P = np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.7, 0.3]]])
R = np.array([[[1.0], [0.0]], [[0.3], [2.0]]])
model = TabularModel(P, R)

exact = rvi_average(model)
print(f"gain from relative value iteration: {exact.v_star[0]:.4f}")

trace = run_average(model, 50_000, eps=0.2, eps_floor=0.2, seed=0, snapshot_every=10_000,
                    record_steps=False)
for step, Q, gain in zip(trace.snapshot_steps, trace.q_snapshots, trace.gains):
    print(f"step {step:6d}  f(Q)={gain:.4f}  span distance to Q* {span(Q - exact.Q_star):.4f}")
