"""Deterministic learners leak their tie-breaking into the group gap.

Four equal quarters: each expert is wrong on exactly one quarter per group,
so both experts average loss 1/2 on each group. A deterministic learner
that depends only on cumulative loss differences revisits the same
distribution whenever the difference history repeats, and the quarter
order exploits that: group A sees the learner while it is right, group B
while it is wrong.
"""

import numpy as np

from fair_experts import GROUP_A, GROUP_B, expert_group_metric, group_metric, run

T = 100000
for learner in ({"kind": "single_mw", "eta": 0.1},
                {"kind": "fpl", "eta": 0.1}):
    trace = run(learner, {"kind": "t4"}, T, seed=0)
    eer_a = group_metric(trace, GROUP_A, "eer")
    eer_b = group_metric(trace, GROUP_B, "eer")
    print(f"{learner['kind']:>10}: EER(A)={eer_a:.4f} EER(B)={eer_b:.4f} "
          f"gap={eer_b - eer_a:.4f}")

# both experts really are interchangeable per group
trace = run({"kind": "single_mw", "eta": 0.1}, {"kind": "t4"}, T, seed=0)
for f in (0, 1):
    per_group = [expert_group_metric(trace, f, g, "eer") for g in (GROUP_A, GROUP_B)]
    print(f"expert {f}: per-group EER {np.round(per_group, 4)}")
