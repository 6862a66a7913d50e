"""Adversarial instance generators.

Each scenario fixes an expert set (or emits losses directly), a group
arrival process, and a labeling rule, and knows how to unroll itself into
protocol segments. Two of them (t1, t2) stage a bait-and-switch: a first
phase that rewards concentrating on one expert, a branch on the realized
play ("world" a or b), and a second phase that turns that concentration
into a false-negative-rate gap between groups. The rest are direct-loss
streams: a calibrated synthetic stream with per-expert error rates
(t3_synthetic), a four-quarter alternation that defeats group-unaware
deterministic rules (t4), an adaptive penalize-the-leader stream that
punishes shared state across groups (t5), and an i.i.d. baseline
(random_iid).

Scenario randomness is drawn from three child streams of the run seed
(group draws, label draws, everything else), so group draws never depend on
how many other random decisions a scenario makes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Iterator, Mapping

import numpy as np

from .experts import ExpertModel, make_expert
from .protocol import AdaptiveBlock, BlockResult, ObliviousBlock
from .types import (
    ConfigError,
    NEGATIVE_CODE,
    POSITIVE_CODE,
    UNLABELED_CODE,
    Outcome,
    loss_of,
)

SCENARIO_KINDS = ("t1", "t2", "t3_synthetic", "t4", "t5", "random_iid")

GROUP_A = 0
GROUP_B = 1


class ScenarioRun:
    """Per-run unrolling state: seeded streams plus a free-form info dict."""

    def __init__(self, scenario, T: int, seed_seq: np.random.SeedSequence) -> None:
        self.scenario = scenario
        self.T = int(T)
        groups_ss, labels_ss, extra_ss = seed_seq.spawn(3)
        self.rng_groups = np.random.default_rng(groups_ss)
        self.rng_labels = np.random.default_rng(labels_ss)
        self.rng_extra = np.random.default_rng(extra_ss)
        self.info: dict = {}

    def segments(self) -> Iterator:
        raise NotImplementedError


class Scenario:
    """Config-level scenario; ``start`` binds it to a horizon and a seed."""

    kind: ClassVar[str] = "base"

    @property
    def id(self) -> str:
        return self.kind

    @property
    def experts(self) -> tuple[ExpertModel, ...] | None:
        return None

    def config(self) -> dict:
        raise NotImplementedError

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> ScenarioRun:
        raise NotImplementedError


def _expert_loss_block(
    experts: tuple[ExpertModel, ...],
    t_start: int,
    groups: np.ndarray,
    codes: np.ndarray,
    rng: np.random.Generator,
) -> ObliviousBlock:
    """Score every expert on labeled rounds and assemble the loss matrix."""
    n = groups.shape[0]
    t = np.arange(t_start, t_start + n, dtype=np.int64)
    losses = np.empty((n, len(experts)), dtype=np.float64)
    for f, ex in enumerate(experts):
        losses[:, f] = ex.losses(t, groups, codes, rng)
    return ObliviousBlock(groups, codes, losses)


def _constant_loss_rows(
    experts: tuple[ExpertModel, ...], rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Loss rows on a negative and on a positive round, for experts whose
    scores do not depend on t or group."""
    neg = np.array(
        [loss_of(ex.predict(1, GROUP_A, Outcome.NEGATIVE, rng), Outcome.NEGATIVE) for ex in experts]
    )
    pos = np.array(
        [loss_of(ex.predict(1, GROUP_A, Outcome.POSITIVE, rng), Outcome.POSITIVE) for ex in experts]
    )
    return neg, pos


# ---------------------------------------------------------------------------
# t1: stochastic groups, group-unaware learners forced into an FNR gap


@dataclass(frozen=True)
class T1Scenario(Scenario):
    """Fair-coin groups; one half of harmless labels, then a switch.

    Experts: index 0 always predicts negative, index 1 errs at the fixed
    rate beta = 1/4 + sqrt(epsilon) regardless of the label, so both are
    exactly fair in isolation. While t <= T/2, group B rounds are negative
    and group A rounds get fair-coin labels. The continuation depends on the
    realized probability mass the learner spent on expert 1 in that half:
    above sqrt(epsilon) * T the environment turns all-negative (world "a"),
    otherwise group B turns all-positive while group A keeps fair coins
    (world "b"). A learner that ignores groups and has vanishing regret
    concentrates on expert 0 early, lands in world "b", and pays most of its
    false negatives on group A.
    """

    epsilon: float
    forced_world: str | None = None
    bernoulli_experts: bool = False

    kind: ClassVar[str] = "t1"
    d: ClassVar[int] = 2
    num_groups: ClassVar[int] = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.beta > 1.0:
            raise ConfigError(
                f"epsilon={self.epsilon!r} puts the error rate 1/4 + sqrt(epsilon) above 1"
            )
        if self.forced_world not in (None, "a", "b"):
            raise ConfigError(f"forced_world must be 'a' or 'b', got {self.forced_world!r}")

    @property
    def beta(self) -> float:
        return 0.25 + math.sqrt(self.epsilon)

    @property
    def experts(self) -> tuple[ExpertModel, ...]:
        return (
            ExpertModel(kind="always_negative", label="h_neg"),
            ExpertModel(
                kind="unbiased", beta=self.beta, bernoulli=self.bernoulli_experts, label="h_err"
            ),
        )

    def config(self) -> dict:
        cfg: dict = {"kind": self.kind, "epsilon": self.epsilon}
        if self.forced_world is not None:
            cfg["forced_world"] = self.forced_world
        if self.bernoulli_experts:
            cfg["bernoulli_experts"] = True
        cfg["experts"] = [ex.to_config() for ex in self.experts]
        return cfg

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> "_T1Run":
        return _T1Run(self, T, seed_seq)


class _T1Run(ScenarioRun):
    def segments(self) -> Iterator:
        sc: T1Scenario = self.scenario
        T = self.T
        if T == 0:
            return
        experts = sc.experts
        groups = self.rng_groups.integers(0, 2, size=T).astype(np.int8)
        coins = self.rng_labels.integers(0, 2, size=T).astype(np.int8)
        half = T // 2
        sqrt_eps = math.sqrt(sc.epsilon)
        self.info.update(
            beta=sc.beta,
            phase1_rounds=half,
            world_threshold=sqrt_eps * T,
            asymptote_fnr_gap=0.375,
            asymptote_fnr_a=0.625 - sqrt_eps,
            asymptote_fnr_b_limit=0.25 + 33.0 * sqrt_eps,
        )
        hu_mass = 0.0
        if half:
            codes1 = np.where(groups[:half] == GROUP_B, NEGATIVE_CODE, coins[:half]).astype(np.int8)
            result: BlockResult = yield _expert_loss_block(
                experts, 1, groups[:half], codes1, self.rng_extra
            )
            hu_mass = float(result.distributions[:, 1].sum())
        world = sc.forced_world or ("a" if hu_mass > sqrt_eps * T else "b")
        self.info.update(hu_probability_mass=hu_mass, world=world)
        rest = groups[half:]
        if world == "a":
            codes2 = np.full(T - half, NEGATIVE_CODE, dtype=np.int8)
        else:
            codes2 = np.where(rest == GROUP_B, POSITIVE_CODE, coins[half:]).astype(np.int8)
        yield _expert_loss_block(experts, half + 1, rest, codes2, self.rng_extra)


# ---------------------------------------------------------------------------
# t2: minority group, group-aware learners forced into an FNR gap


@dataclass(frozen=True)
class T2Scenario(Scenario):
    """Minority group A (arrival probability b), threshold-baited labels.

    Experts: index 0 always predicts negative, index 1 always positive.
    While t <= T/101, group B rounds are negative, and a group A round is
    positive exactly when the learner currently puts probability at least
    gamma = (99 - 2 epsilon)/100 on the negative expert; those rounds are
    the only positive group A examples the whole run, and the learner books
    a near-maximal loss on every one of them. The continuation branches on
    the realized count of those baited rounds against b * T / 101^2: below
    the threshold everything turns negative (world "a"), otherwise group B
    turns all-positive and group A all-negative (world "b"), which rewards
    the bait. Any learner with vanishing approximate regret takes it,
    group-aware or not.
    """

    b: float
    epsilon: float
    forced_world: str | None = None

    kind: ClassVar[str] = "t2"
    d: ClassVar[int] = 2
    num_groups: ClassVar[int] = 2

    C: ClassVar[float] = 1.0 / (101.0 * 101.0)
    THETA: ClassVar[float] = 1.0 / 101.0

    def __post_init__(self) -> None:
        if not 0.0 < self.b < 0.49:
            raise ConfigError(f"b must lie in (0, 0.49), got {self.b!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.forced_world not in (None, "a", "b"):
            raise ConfigError(f"forced_world must be 'a' or 'b', got {self.forced_world!r}")

    @property
    def gamma(self) -> float:
        return (99.0 - 2.0 * self.epsilon) / 100.0

    @property
    def experts(self) -> tuple[ExpertModel, ...]:
        return (
            ExpertModel(kind="always_negative", label="h_neg"),
            ExpertModel(kind="always_positive", label="h_pos"),
        )

    def config(self) -> dict:
        cfg: dict = {"kind": self.kind, "b": self.b, "epsilon": self.epsilon}
        if self.forced_world is not None:
            cfg["forced_world"] = self.forced_world
        cfg["experts"] = [ex.to_config() for ex in self.experts]
        return cfg

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> "_T2Run":
        return _T2Run(self, T, seed_seq)


class _T2Run(ScenarioRun):
    def segments(self) -> Iterator:
        sc: T2Scenario = self.scenario
        T = self.T
        if T == 0:
            return
        groups = np.where(self.rng_groups.random(T) < sc.b, GROUP_A, GROUP_B).astype(np.int8)
        phase1 = T // 101  # floor(THETA * T) exactly, since THETA = 1/101
        gamma = sc.gamma
        count_threshold = sc.C * sc.b * T
        neg_row, pos_row = _constant_loss_rows(sc.experts, self.rng_extra)
        self.info.update(
            gamma=gamma,
            phase1_rounds=phase1,
            world_threshold=count_threshold,
            asymptote_fnr_a=0.99 - 0.02 * sc.epsilon,
            fnr_b_limit=(0.5 + sc.epsilon) / (1.0 - sc.b),
            asymptote_fnr_gap=(0.49 - 0.99 * sc.b) / (1.0 - sc.b),
        )
        qualifying = 0

        def step(i: int, g: int, p: np.ndarray) -> tuple[int, np.ndarray]:
            nonlocal qualifying
            if g == GROUP_A and p[0] >= gamma:
                qualifying += 1
                return POSITIVE_CODE, pos_row
            return NEGATIVE_CODE, neg_row

        if phase1:
            yield AdaptiveBlock(groups[:phase1], step)
        world = sc.forced_world or ("a" if qualifying < count_threshold else "b")
        self.info.update(qualifying_rounds=qualifying, world=world)
        rest = groups[phase1:]
        n = rest.shape[0]
        if world == "a":
            codes = np.full(n, NEGATIVE_CODE, dtype=np.int8)
        else:
            codes = np.where(rest == GROUP_B, POSITIVE_CODE, NEGATIVE_CODE).astype(np.int8)
        losses = np.where((codes == POSITIVE_CODE)[:, None], pos_row[None, :], neg_row[None, :])
        if n:
            yield ObliviousBlock(rest, codes, losses)


# ---------------------------------------------------------------------------
# t3_synthetic: calibrated per-expert error rates, adversarial group order


@dataclass(frozen=True)
class T3Synthetic(Scenario):
    """Direct-loss stream with prescribed per-expert error rates.

    Expert f's losses on each group's rounds form an evenly spread 0/1
    pattern averaging rates[f] to within 1/(rounds of the group), with a
    per-group phase offset so the groups' streams are not identical copies.
    kappa > 0 additionally perturbs each (expert, group) rate upward by at
    most kappa (seeded draw). The group order is adversarial-but-fixed:
    contiguous blocks by default, or round-robin with schedule
    "alternating".
    """

    rates: tuple[float, ...]
    groups: int = 2
    schedule: str = "blocks"
    kappa: float = 0.0

    kind: ClassVar[str] = "t3_synthetic"

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if not rates:
            raise ConfigError("t3_synthetic needs at least one expert rate")
        for r in rates:
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"infeasible error rate {r!r}, must lie in [0, 1]")
        if self.groups < 1:
            raise ConfigError(f"need at least one group, got {self.groups}")
        if self.schedule not in ("blocks", "alternating"):
            raise ConfigError(f"schedule must be 'blocks' or 'alternating', got {self.schedule!r}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ConfigError(f"kappa must lie in [0, 1], got {self.kappa!r}")

    @property
    def d(self) -> int:
        return len(self.rates)

    @property
    def num_groups(self) -> int:
        return self.groups

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "rates": list(self.rates),
            "groups": self.groups,
            "schedule": self.schedule,
            "kappa": self.kappa,
        }

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> "_T3Run":
        return _T3Run(self, T, seed_seq)


def _spread_pattern(n: int, rate: float, phase: float) -> np.ndarray:
    """0/1 sequence of length n whose mean is within 1/n of rate."""
    k = np.arange(n, dtype=np.float64)
    return np.floor((k + 1.0) * rate + phase) - np.floor(k * rate + phase)


class _T3Run(ScenarioRun):
    def segments(self) -> Iterator:
        sc: T3Synthetic = self.scenario
        T = self.T
        if T == 0:
            return
        G, d = sc.num_groups, sc.d
        if sc.schedule == "blocks":
            base, extra = divmod(T, G)
            counts = [base + (1 if g < extra else 0) for g in range(G)]
            groups = np.repeat(np.arange(G, dtype=np.int8), counts)
        else:
            groups = (np.arange(T) % G).astype(np.int8)
            counts = [int((groups == g).sum()) for g in range(G)]
        if sc.kappa > 0.0:
            delta = self.rng_extra.random((G, d)) * sc.kappa
        else:
            delta = np.zeros((G, d))
        target = np.clip(np.asarray(sc.rates)[None, :] + delta, 0.0, 1.0)
        losses = np.empty((T, d), dtype=np.float64)
        for g in range(G):
            idx = np.flatnonzero(groups == g)
            for f in range(d):
                losses[idx, f] = _spread_pattern(counts[g], float(target[g, f]), g / G)
        self.info.update(
            group_rounds=counts,
            target_rates=[[float(x) for x in row] for row in target],
        )
        codes = np.full(T, UNLABELED_CODE, dtype=np.int8)
        yield ObliviousBlock(groups, codes, losses)


# ---------------------------------------------------------------------------
# t4: four-quarter alternation against group-unaware deterministic rules


@dataclass(frozen=True)
class T4Scenario(Scenario):
    """Oblivious stream with per-group 50% error rates for both experts.

    Quarters: group A with losses (0, 1), group B with (1, 0), group A with
    (1, 0), group B with (0, 1). Each expert errs on exactly half of each
    group's rounds, yet any learner whose play is a deterministic function
    of the cumulative loss difference sees group B only while its favored
    expert is the wrong one: low regret then forces the error rates apart.
    """

    kind: ClassVar[str] = "t4"
    d: ClassVar[int] = 2
    num_groups: ClassVar[int] = 2

    def config(self) -> dict:
        return {"kind": self.kind}

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> "_T4Run":
        return _T4Run(self, T, seed_seq)


T4_QUARTERS = (
    (GROUP_A, (0.0, 1.0)),
    (GROUP_B, (1.0, 0.0)),
    (GROUP_A, (1.0, 0.0)),
    (GROUP_B, (0.0, 1.0)),
)


class _T4Run(ScenarioRun):
    def segments(self) -> Iterator:
        T = self.T
        if T == 0:
            return
        q = T // 4
        lengths = [q, q, q, T - 3 * q]
        self.info.update(quarter_rounds=lengths)
        groups = np.empty(T, dtype=np.int8)
        losses = np.empty((T, 2), dtype=np.float64)
        start = 0
        for (g, row), length in zip(T4_QUARTERS, lengths):
            groups[start : start + length] = g
            losses[start : start + length] = row
            start += length
        codes = np.full(T, UNLABELED_CODE, dtype=np.int8)
        yield ObliviousBlock(groups, codes, losses)


# ---------------------------------------------------------------------------
# t5: adaptive penalize-the-leader, then a regime shift on the other group


@dataclass(frozen=True)
class T5Scenario(Scenario):
    """Punishes shared state: leader-penalties on A, then two regimes on B.

    Phase one (t <= T/2, group A): loss 1 to the expert the learner favors
    (ties to index 0), 0 to the other, so the learner pays at least 1/2 per
    round. Phase two (group B) repeats losses (1, 0) for as many rounds as
    expert 0 was penalized in phase one; phase three (group B) repeats
    (0, 1) for as many rounds as expert 1 was penalized. The two B-phases
    therefore cover exactly T/2 rounds, and playing expert 1 then expert 0
    is a zero-loss comparator on B with a single switch.
    """

    kind: ClassVar[str] = "t5"
    d: ClassVar[int] = 2
    num_groups: ClassVar[int] = 2

    def config(self) -> dict:
        return {"kind": self.kind}

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> "_T5Run":
        return _T5Run(self, T, seed_seq)


_T5_ROWS = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))


class _T5Run(ScenarioRun):
    def segments(self) -> Iterator:
        T = self.T
        if T == 0:
            return
        half = T // 2
        penalties = [0, 0]

        def step(i: int, g: int, p: np.ndarray) -> tuple[int, np.ndarray]:
            leader = 0 if p[0] >= p[1] else 1
            penalties[leader] += 1
            return UNLABELED_CODE, _T5_ROWS[leader]

        if half:
            yield AdaptiveBlock(np.zeros(half, dtype=np.int8), step)
        len2 = penalties[0]
        len3 = penalties[1] + (T - half - penalties[0] - penalties[1])
        self.info.update(
            phase1_rounds=half,
            phase2_rounds=len2,
            phase3_rounds=len3,
            penalties=list(penalties),
        )
        if len2:
            yield ObliviousBlock(
                np.ones(len2, dtype=np.int8),
                np.full(len2, UNLABELED_CODE, dtype=np.int8),
                np.tile(_T5_ROWS[0], (len2, 1)),
            )
        if len3:
            yield ObliviousBlock(
                np.ones(len3, dtype=np.int8),
                np.full(len3, UNLABELED_CODE, dtype=np.int8),
                np.tile(_T5_ROWS[1], (len3, 1)),
            )


# ---------------------------------------------------------------------------
# random_iid: stochastic baseline


@dataclass(frozen=True)
class RandomIID(Scenario):
    """Groups i.i.d. from fixed probabilities, losses i.i.d. uniform [0, 1]."""

    d: int = 2
    groups: int = 2
    group_probs: tuple[float, ...] | None = None

    kind: ClassVar[str] = "random_iid"

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ConfigError(f"need at least one expert, got d={self.d}")
        if self.groups < 1:
            raise ConfigError(f"need at least one group, got {self.groups}")
        if self.group_probs is not None:
            probs = tuple(float(x) for x in self.group_probs)
            object.__setattr__(self, "group_probs", probs)
            if len(probs) != self.groups:
                raise ConfigError(
                    f"group_probs has {len(probs)} entries for {self.groups} groups"
                )
            if any(x < 0.0 for x in probs) or abs(sum(probs) - 1.0) > 1e-9:
                raise ConfigError("group_probs must be a probability vector")

    @property
    def num_groups(self) -> int:
        return self.groups

    def config(self) -> dict:
        cfg: dict = {"kind": self.kind, "d": self.d, "groups": self.groups}
        if self.group_probs is not None:
            cfg["group_probs"] = list(self.group_probs)
        return cfg

    def start(self, T: int, seed_seq: np.random.SeedSequence) -> "_RandomIIDRun":
        return _RandomIIDRun(self, T, seed_seq)


class _RandomIIDRun(ScenarioRun):
    def segments(self) -> Iterator:
        sc: RandomIID = self.scenario
        T = self.T
        if T == 0:
            return
        probs = sc.group_probs
        if probs is None:
            groups = self.rng_groups.integers(0, sc.groups, size=T).astype(np.int8)
        else:
            groups = self.rng_groups.choice(sc.groups, size=T, p=probs).astype(np.int8)
        losses = self.rng_extra.random((T, sc.d))
        codes = np.full(T, UNLABELED_CODE, dtype=np.int8)
        yield ObliviousBlock(groups, codes, losses)


# ---------------------------------------------------------------------------


def make_scenario(config: Mapping) -> Scenario:
    """Build a scenario from its config mapping (the 'scenario' block of an
    experiment config)."""
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    cfg.pop("experts", None)  # echo-only
    if kind == "t1":
        if "epsilon" not in cfg:
            raise ConfigError("t1 needs epsilon")
        try:
            return T1Scenario(**cfg)
        except TypeError as exc:
            raise ConfigError(f"bad t1 config: {exc}") from exc
    if kind == "t2":
        if "b" not in cfg or "epsilon" not in cfg:
            raise ConfigError("t2 needs b and epsilon")
        try:
            return T2Scenario(**cfg)
        except TypeError as exc:
            raise ConfigError(f"bad t2 config: {exc}") from exc
    if kind == "t3_synthetic":
        if "rates" not in cfg:
            raise ConfigError("t3_synthetic needs rates")
        cfg["rates"] = tuple(float(r) for r in cfg["rates"])
        try:
            return T3Synthetic(**cfg)
        except TypeError as exc:
            raise ConfigError(f"bad t3_synthetic config: {exc}") from exc
    if kind == "t4":
        if cfg:
            raise ConfigError(f"t4 takes no parameters, got {sorted(cfg)}")
        return T4Scenario()
    if kind == "t5":
        if cfg:
            raise ConfigError(f"t5 takes no parameters, got {sorted(cfg)}")
        return T5Scenario()
    if kind == "random_iid":
        if "group_probs" in cfg and cfg["group_probs"] is not None:
            cfg["group_probs"] = tuple(float(x) for x in cfg["group_probs"])
        try:
            return RandomIID(**cfg)
        except TypeError as exc:
            raise ConfigError(f"bad random_iid config: {exc}") from exc
    raise ConfigError(f"scenario kind must be one of {SCENARIO_KINDS}, got {kind!r}")
