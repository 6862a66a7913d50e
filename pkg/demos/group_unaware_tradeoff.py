"""A group-blind no-regret learner forced into unequal false negative rates.

Both experts have equal FNR on each group taken alone. The outcome sequence
watches how much probability the learner spends on the erring expert during
the first half and then picks the continuation that hurts group B. The gap
does not shrink as T grows.
"""

from fair_experts import GROUP_A, GROUP_B, build_report, run

for T in (20000, 50000, 100000, 200000):
    trace = run({"kind": "single_mw", "eta": 0.01},
                {"kind": "t1", "epsilon": 0.01}, T, seed=7, retain="summary")
    rep = build_report(trace, epsilon=0.01).to_dict()
    fnr = rep["learner_metrics"]["fnr"]
    print(f"T={T:>6}  world={trace.scenario_info['world']}  "
          f"FNR(A)={fnr['A']:.4f}  FNR(B)={fnr['B']:.4f}  "
          f"gap={fnr['A'] - fnr['B']:.4f}")

print()
print("each expert on its own has identical FNR across groups:")
trace = run({"kind": "single_mw", "eta": 0.01},
            {"kind": "t1", "epsilon": 0.01}, 200000, seed=7, retain="summary")
rep = build_report(trace, epsilon=0.01).to_dict()
for f, vals in enumerate(rep["expert_metrics"]):
    print(f"  expert {f}: FNR(A)={vals['fnr']['A']:.4f} FNR(B)={vals['fnr']['B']:.4f}")
