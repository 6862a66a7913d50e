"""Expert models and the per-expert fairness audit.

An expert maps a round (index, group, outcome) to a score in [0, 1]. The
kinds here are deliberately simple decision rules: constant scores, an
outcome-reading rule that is wrong with a fixed rate, and a scripted table.
The outcome-reading rule is the interesting one for fairness audits: its
loss equals its error rate on every round regardless of the label, so it is
exactly fair in isolation under any metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .types import (
    EmptySubpopulationError,
    GroupId,
    HorizonMismatchError,
    Outcome,
    POSITIVE_CODE,
    Trace,
    _BIN_NEG,
    _BIN_POS,
    losses_from_scores,
    max_pairwise_gap,
)

EXPERT_KINDS = ("always_negative", "always_positive", "unbiased", "fixed_score", "scripted")

METRICS = ("fnr", "fpr", "eer")


@dataclass(frozen=True)
class ExpertModel:
    """A fixed prediction rule, declared by kind plus parameters.

    kind:
      always_negative  score 0 on every round
      always_positive  score 1 on every round
      unbiased         score beta on negatives and 1 - beta on positives,
                       so its loss is beta everywhere; with bernoulli=True it
                       instead emits a hard 0/1 prediction that is wrong with
                       probability beta (needs an rng at predict time)
      fixed_score      constant score s
      scripted         score table indexed by round, error past the horizon
    """

    kind: str
    beta: float | None = None
    score: float | None = None
    table: tuple[float, ...] | None = None
    bernoulli: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind not in EXPERT_KINDS:
            raise ValueError(f"unknown expert kind {self.kind!r}")
        if self.kind == "unbiased":
            if self.beta is None or not 0.0 <= self.beta <= 1.0:
                raise ValueError(f"unbiased expert needs beta in [0, 1], got {self.beta!r}")
        if self.kind == "fixed_score":
            if self.score is None or not 0.0 <= self.score <= 1.0:
                raise ValueError(f"fixed_score expert needs score in [0, 1], got {self.score!r}")
        if self.kind == "scripted":
            if not self.table:
                raise ValueError("scripted expert needs a non-empty score table")
            if any(not 0.0 <= s <= 1.0 for s in self.table):
                raise ValueError("scripted table entries must lie in [0, 1]")
        if self.bernoulli and self.kind != "unbiased":
            raise ValueError("bernoulli mode applies to the unbiased kind only")

    @property
    def name(self) -> str:
        return self.label or self.kind

    def predict(
        self,
        t: int,
        group: GroupId,
        outcome: Outcome | None,
        rng: np.random.Generator | None = None,
    ) -> float:
        """Score for round t. Outcome-reading kinds require a labeled round."""
        if self.kind == "always_negative":
            return 0.0
        if self.kind == "always_positive":
            return 1.0
        if self.kind == "fixed_score":
            return float(self.score)
        if self.kind == "scripted":
            if not 1 <= t <= len(self.table):
                raise HorizonMismatchError(
                    f"scripted expert has {len(self.table)} rounds, asked for t={t}"
                )
            return float(self.table[t - 1])
        # unbiased
        if outcome is None:
            raise ValueError("unbiased expert needs a labeled round")
        if self.bernoulli:
            if rng is None:
                raise ValueError("bernoulli mode needs an rng")
            wrong = rng.random() < self.beta
            correct_score = 1.0 if outcome is Outcome.POSITIVE else 0.0
            return 1.0 - correct_score if wrong else correct_score
        return float(self.beta) if outcome is Outcome.NEGATIVE else 1.0 - float(self.beta)

    def scores(
        self,
        t: np.ndarray,
        groups: np.ndarray,
        outcome_codes: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        """Vectorized predict over aligned round arrays."""
        n = len(t)
        if self.kind == "always_negative":
            return np.zeros(n)
        if self.kind == "always_positive":
            return np.ones(n)
        if self.kind == "fixed_score":
            return np.full(n, float(self.score))
        if self.kind == "scripted":
            t = np.asarray(t)
            if n and (t.min() < 1 or t.max() > len(self.table)):
                raise HorizonMismatchError(
                    f"scripted expert has {len(self.table)} rounds, asked for t in "
                    f"[{t.min()}, {t.max()}]"
                )
            return np.asarray(self.table, dtype=np.float64)[t - 1]
        codes = np.asarray(outcome_codes)
        if np.any(codes < 0):
            raise ValueError("unbiased expert needs labeled rounds")
        if self.bernoulli:
            if rng is None:
                raise ValueError("bernoulli mode needs an rng")
            wrong = rng.random(n) < self.beta
            correct = (codes == POSITIVE_CODE).astype(np.float64)
            return np.where(wrong, 1.0 - correct, correct)
        return np.where(codes == POSITIVE_CODE, 1.0 - float(self.beta), float(self.beta))

    def losses(
        self,
        t: np.ndarray,
        groups: np.ndarray,
        outcome_codes: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        return losses_from_scores(self.scores(t, groups, outcome_codes, rng), outcome_codes)

    def to_config(self) -> dict:
        cfg: dict = {"kind": self.kind}
        if self.beta is not None:
            cfg["beta"] = self.beta
        if self.score is not None:
            cfg["score"] = self.score
        if self.table is not None:
            cfg["table"] = list(self.table)
        if self.bernoulli:
            cfg["bernoulli"] = True
        if self.label:
            cfg["label"] = self.label
        return cfg


def make_expert(config: Mapping) -> ExpertModel:
    """Build an expert from its config mapping, e.g. {"kind": "unbiased", "beta": 0.3}."""
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind is None:
        raise ValueError("expert config needs a 'kind' entry")
    table = cfg.pop("table", None)
    if table is not None:
        cfg["table"] = tuple(float(x) for x in table)
    try:
        return ExpertModel(kind=kind, **cfg)
    except TypeError as exc:
        raise ValueError(f"bad expert config {dict(config)!r}: {exc}") from exc


@dataclass(frozen=True)
class AuditResult:
    """Per-group metric values for one expert, plus the worst pairwise gap.

    Groups whose subpopulation is empty are reported as undefined and
    excluded from the gap. ``passed`` is None when fewer than two groups have
    defined values, otherwise gap <= tolerance.
    """

    expert: int
    metric: str
    per_group: dict
    gap: float | None
    gap_pair: tuple[int, int] | None
    undefined_groups: tuple[int, ...]
    tolerance: float
    passed: bool | None


def _metric_bins(metric: str) -> list[int]:
    if metric == "fnr":
        return [_BIN_POS]
    if metric == "fpr":
        return [_BIN_NEG]
    if metric == "eer":
        return [0, 1, 2]
    raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")


def expert_group_metric(trace: Trace, expert: int, group: GroupId, metric: str) -> float | None:
    """Mean loss of one expert over one group's subpopulation, None if empty."""
    bins = _metric_bins(metric)
    if not 0 <= expert < trace.d:
        raise ValueError(f"expert index {expert} outside 0..{trace.d - 1}")
    if not 0 <= group < trace.num_groups:
        raise ValueError(f"group {group} outside 0..{trace.num_groups - 1}")
    acc = trace.accumulators
    n = int(acc.counts[group, bins].sum())
    if n == 0:
        return None
    return float(acc.expert_loss[group, bins, expert].sum()) / n


def audit_fair_in_isolation(
    trace: Trace,
    expert: int,
    metric: str = "eer",
    tolerance: float = 0.0,
) -> AuditResult:
    """Check whether one expert's metric is (near) equal across groups.

    Raises EmptySubpopulationError when no group has any qualifying round.
    """
    per_group: dict[int, float | None] = {}
    undefined: list[int] = []
    for g in range(trace.num_groups):
        value = expert_group_metric(trace, expert, g, metric)
        per_group[g] = value
        if value is None:
            undefined.append(g)
    defined_count = trace.num_groups - len(undefined)
    if defined_count == 0:
        raise EmptySubpopulationError(
            f"metric {metric!r} is undefined for every group on this trace"
        )
    gap: float | None = None
    pair: tuple[int, int] | None = None
    passed: bool | None = None
    if defined_count >= 2:
        gap, pair = max_pairwise_gap(per_group)
        passed = gap <= tolerance
    return AuditResult(
        expert=expert,
        metric=metric,
        per_group=per_group,
        gap=gap,
        gap_pair=pair,
        undefined_groups=tuple(undefined),
        tolerance=tolerance,
        passed=passed,
    )
