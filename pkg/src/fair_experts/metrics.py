"""Fairness metrics, regret measures, and the shifting-comparator DP.

Learner metrics average the per-round expected loss over a group's
qualifying subpopulation: positive rounds for the false-negative rate
("fnr"), negative rounds for the false-positive rate ("fpr"), every round
of the group for the overall error rate ("eer"). Rounds without labels only
count toward "eer". A metric over an empty subpopulation is undefined and
reported as None; gaps are taken over the defined groups only.

Regret compares the learner's total expected loss to the best single
expert in hindsight; the epsilon-approximate variant charges the comparator
a (1 + epsilon) factor, and the shifting variant lets the comparator switch
experts a bounded number of times, computed exactly by dynamic programming.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .types import (
    ConfigError,
    ContractError,
    EmptySubpopulationError,
    GroupId,
    InsufficientGroupsError,
    Trace,
    _BIN_NEG,
    _BIN_POS,
    group_label,
    max_pairwise_gap,
)

METRICS = ("fnr", "fpr", "eer")


def _metric_bins(metric: str) -> list[int]:
    if metric == "fnr":
        return [_BIN_POS]
    if metric == "fpr":
        return [_BIN_NEG]
    if metric == "eer":
        return [0, 1, 2]
    raise ConfigError(f"metric must be one of {METRICS}, got {metric!r}")


def subpopulation_size(trace: Trace, group: GroupId, metric: str) -> int:
    """Number of rounds of the group that qualify for the metric."""
    bins = _metric_bins(metric)
    if not 0 <= group < trace.num_groups:
        raise ValueError(f"group {group} outside 0..{trace.num_groups - 1}")
    return int(trace.accumulators.counts[group, bins].sum())


def group_metric(trace: Trace, group: GroupId, metric: str) -> float | None:
    """The learner's mean expected loss over the group's subpopulation,
    or None when the subpopulation is empty."""
    bins = _metric_bins(metric)
    if not 0 <= group < trace.num_groups:
        raise ValueError(f"group {group} outside 0..{trace.num_groups - 1}")
    acc = trace.accumulators
    n = int(acc.counts[group, bins].sum())
    if n == 0:
        return None
    return float(acc.learner_loss[group, bins].sum()) / n


def learner_group_values(trace: Trace, metric: str) -> dict[int, float | None]:
    return {g: group_metric(trace, g, metric) for g in range(trace.num_groups)}


def composition_gap(values: Mapping[int, float | None]) -> tuple[float, tuple[int, int]]:
    """Largest pairwise difference among defined per-group values, with the
    attaining pair (lowest indices on ties). Needs two defined groups."""
    return max_pairwise_gap(values)


def learner_total_loss(trace: Trace) -> float:
    return float(trace.accumulators.learner_loss.sum())


def expert_total_losses(trace: Trace) -> np.ndarray:
    return trace.accumulators.expert_loss.sum(axis=(0, 1))


def regret(trace: Trace) -> float:
    """Learner's total expected loss minus the best fixed expert's total."""
    if len(trace) == 0:
        return 0.0
    return learner_total_loss(trace) - float(expert_total_losses(trace).min())


def approx_regret(trace: Trace, epsilon: float, expert: int | None = None):
    """Total expected loss minus (1 + epsilon) times an expert's total.

    With expert=None, returns the array over all experts.
    """
    if epsilon < 0.0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon!r}")
    totals = expert_total_losses(trace)
    learner = learner_total_loss(trace)
    values = learner - (1.0 + epsilon) * totals
    if expert is None:
        return values
    if not 0 <= expert < trace.d:
        raise ValueError(f"expert index {expert} outside 0..{trace.d - 1}")
    return float(values[expert])


@dataclass(frozen=True)
class ComparatorPath:
    """An expert sequence with a bounded number of switches, and its loss."""

    experts: np.ndarray
    loss: float
    switches: int

    def __len__(self) -> int:
        return int(self.experts.shape[0])


def switch_count(experts: Sequence[int]) -> int:
    arr = np.asarray(experts)
    if arr.shape[0] < 2:
        return 0
    return int((arr[1:] != arr[:-1]).sum())


def best_shifting_comparator(
    trace_or_losses, K: int, group: GroupId | None = None
) -> ComparatorPath:
    """Minimum-loss expert sequence using at most K switches.

    Accepts a full trace (optionally restricted to one group's rounds) or a
    raw (n, d) loss matrix. Exact dynamic programming over (round, switches
    used, current expert); on equal loss the reconstruction keeps the
    current expert rather than switching, switch sources and the final
    expert take the lowest index, and at equal loss and expert the path
    with fewer switches wins.
    """
    if K < 0:
        raise ConfigError(f"switch budget K must be >= 0, got {K}")
    if isinstance(trace_or_losses, Trace):
        trace = trace_or_losses
        if not trace.is_full:
            raise ContractError("shifting comparator needs per-round losses (full trace)")
        if group is None:
            losses = trace.losses
        else:
            if not 0 <= group < trace.num_groups:
                raise ValueError(f"group {group} outside 0..{trace.num_groups - 1}")
            losses = trace.losses[trace.groups == group]
    else:
        if group is not None:
            raise ValueError("group restriction applies to traces only")
        losses = np.asarray(trace_or_losses, dtype=np.float64)
    if losses.ndim != 2:
        raise ValueError(f"loss matrix must be (rounds, experts), got shape {losses.shape}")
    n, d = losses.shape
    if n == 0:
        return ComparatorPath(np.zeros(0, dtype=np.int64), 0.0, 0)
    levels = K + 1
    dp = np.tile(losses[0], (levels, 1))
    stayed = np.ones((n, levels, d), dtype=bool)
    source = np.tile(np.arange(d, dtype=np.int32), (n, levels, 1))
    arange_d = np.arange(d, dtype=np.int32)
    for t in range(1, n):
        prev_min = dp.min(axis=1)
        prev_arg = dp.argmin(axis=1).astype(np.int32)
        new = np.empty_like(dp)
        new[0] = dp[0]
        for k in range(1, levels):
            switch_val = prev_min[k - 1]
            use_stay = dp[k] <= switch_val
            new[k] = np.where(use_stay, dp[k], switch_val)
            stayed[t, k] = use_stay
            source[t, k] = np.where(use_stay, arange_d, prev_arg[k - 1])
        dp = new + losses[t]
    # Final cell: smallest loss, then lowest expert, then fewest switches.
    best = None
    for f in range(d):
        for k in range(levels):
            cand = (dp[k, f], f, k)
            if best is None or cand < best:
                best = cand
    loss, f, k = best
    path = np.empty(n, dtype=np.int64)
    for t in range(n - 1, 0, -1):
        path[t] = f
        if not stayed[t, k, f]:
            f = int(source[t, k, f])
            k -= 1
        # else both f and k carry over
    path[0] = f
    return ComparatorPath(path, float(loss), switch_count(path))


def shifting_approx_regret(trace: Trace, epsilon: float, K: int) -> dict:
    """Learner total versus (1 + epsilon) times the best K-switch comparator."""
    path = best_shifting_comparator(trace, K)
    return {
        "K": K,
        "comparator_loss": path.loss,
        "switches": path.switches,
        "approx_regret": learner_total_loss(trace) - (1.0 + epsilon) * path.loss,
    }


@dataclass
class MetricReport:
    """Everything measured on one trace, JSON-ready via to_dict()."""

    scenario_id: str
    learner_id: str
    T: int
    seed: int | None
    learner: dict
    sizes: dict
    gaps: dict
    experts: list
    regret: float
    approx_regret: list
    min_approx_regret: float | None
    best_expert: int | None
    shifting: dict | None
    scenario_info: dict

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_id,
            "learner": self.learner_id,
            "T": self.T,
            "seed": self.seed,
            "learner_metrics": self.learner,
            "subpopulation_sizes": self.sizes,
            "gaps": self.gaps,
            "expert_metrics": self.experts,
            "regret": self.regret,
            "approx_regret": self.approx_regret,
            "min_approx_regret": self.min_approx_regret,
            "best_expert": self.best_expert,
            "shifting": self.shifting,
            "scenario_info": self.scenario_info,
        }


def build_report(
    trace: Trace,
    epsilon: float,
    shifting_K: int | None = None,
) -> MetricReport:
    """Measure one trace: per-group learner and expert metrics, gaps, and
    the regret family."""
    G = trace.num_groups
    labels = [group_label(g) for g in range(G)]
    counts = trace.accumulators.counts
    if int(counts.sum()) != len(trace):
        raise ContractError("accumulator counts disagree with the trace length")

    learner: dict = {}
    gaps: dict = {}
    sizes: dict = {}
    for metric in METRICS:
        values = learner_group_values(trace, metric)
        learner[metric] = {labels[g]: values[g] for g in range(G)}
        sizes[metric] = {labels[g]: subpopulation_size(trace, g, metric) for g in range(G)}
        defined = sum(v is not None for v in values.values())
        if defined >= 2:
            gap, pair = max_pairwise_gap(values)
            gaps[metric] = {"gap": gap, "pair": [labels[pair[0]], labels[pair[1]]]}
        else:
            gaps[metric] = {"gap": None, "pair": None}

    experts: list = []
    acc = trace.accumulators
    for f in range(trace.d):
        per_metric: dict = {}
        for metric in METRICS:
            bins = _metric_bins(metric)
            row: dict = {}
            for g in range(G):
                n = int(counts[g, bins].sum())
                row[labels[g]] = (
                    None if n == 0 else float(acc.expert_loss[g, bins, f].sum()) / n
                )
            per_metric[metric] = row
        experts.append(per_metric)

    if len(trace):
        apx = approx_regret(trace, epsilon)
        totals = expert_total_losses(trace)
        best = int(totals.argmin())
        report_regret = regret(trace)
        apx_list = [float(x) for x in apx]
        min_apx = float(apx.min())
    else:
        report_regret = 0.0
        apx_list = []
        min_apx = None
        best = None

    shifting = None
    if shifting_K is not None and len(trace):
        shifting = shifting_approx_regret(trace, epsilon, shifting_K)

    return MetricReport(
        scenario_id=trace.scenario_id,
        learner_id=trace.learner_id,
        T=len(trace),
        seed=trace.rng_seed,
        learner=learner,
        sizes=sizes,
        gaps=gaps,
        experts=experts,
        regret=report_regret,
        approx_regret=apx_list,
        min_approx_regret=min_apx,
        best_expert=best,
        shifting=shifting,
        scenario_info=dict(trace.scenario_info),
    )


def _mean_se(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    out = {"mean": float(arr.mean()), "n": int(arr.size)}
    if arr.size >= 2:
        out["se"] = float(arr.std(ddof=1) / np.sqrt(arr.size))
    else:
        out["se"] = None
    return out


def aggregate_reports(reports: Sequence[MetricReport]) -> dict:
    """Combine per-run reports: mean and standard error of each rate, gaps
    of the mean rates (and the mean of per-run gaps alongside), regret
    summaries, and a tally of scenario worlds when present."""
    if not reports:
        return {"runs": 0}
    G_labels = list(reports[0].learner["eer"].keys())
    agg: dict = {"runs": len(reports)}
    learner: dict = {}
    gaps: dict = {}
    for metric in METRICS:
        per_group: dict = {}
        mean_rates: dict = {}
        for label in G_labels:
            vals = [r.learner[metric][label] for r in reports]
            defined = [v for v in vals if v is not None]
            if defined:
                stats = _mean_se(defined)
                stats["defined_runs"] = len(defined)
                per_group[label] = stats
                mean_rates[label] = stats["mean"]
            else:
                per_group[label] = {"mean": None, "se": None, "n": 0, "defined_runs": 0}
                mean_rates[label] = None
        learner[metric] = per_group
        defined_means = {i: v for i, v in enumerate(mean_rates.values())}
        run_gaps = [r.gaps[metric]["gap"] for r in reports if r.gaps[metric]["gap"] is not None]
        entry: dict = {
            "gap_of_mean_rates": None,
            "pair": None,
            "mean_run_gap": _mean_se(run_gaps) if run_gaps else None,
        }
        if sum(v is not None for v in defined_means.values()) >= 2:
            gap, pair = max_pairwise_gap(defined_means)
            entry["gap_of_mean_rates"] = gap
            entry["pair"] = [G_labels[pair[0]], G_labels[pair[1]]]
        gaps[metric] = entry
    agg["learner_metrics"] = learner
    agg["gaps"] = gaps
    agg["regret"] = _mean_se([r.regret for r in reports])
    min_apx = [r.min_approx_regret for r in reports if r.min_approx_regret is not None]
    agg["min_approx_regret"] = _mean_se(min_apx) if min_apx else None
    shifting = [r.shifting["approx_regret"] for r in reports if r.shifting is not None]
    if shifting:
        agg["shifting_approx_regret"] = _mean_se(shifting)
    worlds: dict = {}
    for r in reports:
        w = r.scenario_info.get("world")
        if w is not None:
            worlds[w] = worlds.get(w, 0) + 1
    if worlds:
        agg["worlds"] = worlds
    return agg
