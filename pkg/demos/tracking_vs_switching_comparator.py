"""Tracking learners trade the group gap for shifting regret.

Fixed-share keeps every expert's weight alive so it can follow the best
switching sequence of experts. The adaptive stream spends the first half
penalizing whichever expert the learner currently favors (group A), then
replays the same penalty counts against group B, where a two-switch
comparator scores zero.
"""

from fair_experts import (
    GROUP_A,
    GROUP_B,
    best_shifting_comparator,
    get_preset,
    group_metric,
    run_experiment,
)

cfg = get_preset("theorem5", keep_traces=True)
res = run_experiment(cfg)
trace = res.traces[0]
info = trace.scenario_info

print(f"T={cfg.T}, phase lengths: I={info['phase1_rounds']} "
      f"II={info['phase2_rounds']} III={info['phase3_rounds']}")
print(f"EER(A) = {group_metric(trace, GROUP_A, 'eer'):.4f}   "
      f"EER(B) = {group_metric(trace, GROUP_B, 'eer'):.4f}")

# on B's subsequence alone, two switches suffice for zero loss
path = best_shifting_comparator(trace, 2, group=GROUP_B)
print(f"best <=2-switch comparator on group B: loss={path.loss} "
      f"switches={path.switches}")

shift = res.reports[0].shifting
print(f"learner shifting approximate regret (K={shift['K']}): "
      f"{shift['approx_regret']:.1f} vs comparator loss {shift['comparator_loss']:.1f}")
