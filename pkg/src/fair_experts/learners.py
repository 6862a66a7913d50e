"""Learners: online algorithms choosing distributions over experts.

Every learner follows the same contract: ``start(d, num_groups)`` resets
state, ``next_distribution(group)`` returns the current play without side
effects, ``observe(group, losses)`` folds in one round's loss vector. Kinds
whose distributions are closed-form functions of cumulative losses also
implement ``run_block`` so oblivious stretches can be executed vectorized;
the block path and the sequential path are the same algorithm and agree to
floating-point noise.

Group handling is the one axis of variation: single-table kinds ignore the
group argument entirely, per-group kinds keep one independent table per
group and only the arriving group's table is read or updated.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .types import ConfigError, ContractError, GroupId

LEARNER_KINDS = (
    "single_mw",
    "per_group_mw",
    "fpl",
    "fixed_share",
    "per_group_fixed_share",
)

# Layout seed for the perturbation grid. Part of the algorithm definition:
# every instance with the same (d, eta, m) gets the same grid, so play is a
# deterministic function of cumulative loss differences.
_FPL_GRID_SEED = 104729

DEFAULT_GRID_M = 1024
DEFAULT_SWITCH_BUDGET = 2


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 < eta < 0.5:
        raise ConfigError(f"eta must lie in (0, 1/2), got {eta!r}")
    return eta


class Learner:
    """Shared contract; subclasses fill in the state and the update."""

    kind = "base"
    supports_blocks = False

    def __init__(self) -> None:
        self.d: int | None = None
        self.num_groups: int | None = None

    @property
    def id(self) -> str:
        return self.kind

    def start(self, d: int, num_groups: int = 1) -> None:
        if d < 1:
            raise ConfigError(f"need at least one expert, got d={d}")
        if num_groups < 1:
            raise ConfigError(f"need at least one group, got {num_groups}")
        self.d = int(d)
        self.num_groups = int(num_groups)
        self._init_state()

    def _init_state(self) -> None:
        raise NotImplementedError

    def _started(self) -> None:
        if self.d is None:
            raise ContractError("learner used before start()")

    def _check_losses(self, losses) -> np.ndarray:
        losses = np.asarray(losses, dtype=np.float64)
        if losses.shape != (self.d,):
            raise ContractError(f"loss vector has shape {losses.shape}, expected ({self.d},)")
        return losses

    def next_distribution(self, group: GroupId) -> np.ndarray:
        raise NotImplementedError

    def observe(self, group: GroupId, losses) -> None:
        raise NotImplementedError

    def run_block(self, groups: np.ndarray, losses: np.ndarray) -> np.ndarray:
        """Distributions for a stretch of rounds known in advance.

        Semantically identical to calling next_distribution/observe round by
        round; only kinds with supports_blocks=True implement it.
        """
        raise ContractError(f"{self.kind} has no vectorized block path")


def _row_softmax(log_w: np.ndarray) -> np.ndarray:
    z = log_w - log_w.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class _MultiplicativeWeights(Learner):
    """Weights w_f = (1 - eta)^(cumulative loss), kept in log space."""

    supports_blocks = True
    per_group = False

    def __init__(self, eta: float) -> None:
        super().__init__()
        self.eta = _check_eta(eta)
        self._log_decay = math.log1p(-self.eta)

    def _tables(self) -> int:
        return self.num_groups if self.per_group else 1

    def _init_state(self) -> None:
        self._log_w = np.zeros((self._tables(), self.d), dtype=np.float64)

    def _table(self, group: GroupId) -> int:
        return group if self.per_group else 0

    def next_distribution(self, group: GroupId) -> np.ndarray:
        self._started()
        lw = self._log_w[self._table(group)]
        z = lw - lw.max()
        e = np.exp(z)
        return e / e.sum()

    def observe(self, group: GroupId, losses) -> None:
        self._started()
        losses = self._check_losses(losses)
        self._log_w[self._table(group)] += self._log_decay * losses

    def run_block(self, groups: np.ndarray, losses: np.ndarray) -> np.ndarray:
        self._started()
        n = losses.shape[0]
        p = np.empty((n, self.d), dtype=np.float64)
        if not self.per_group:
            cum = np.cumsum(losses, axis=0)
            before = np.empty_like(cum)
            before[0] = 0.0
            before[1:] = cum[:-1]
            p[:] = _row_softmax(self._log_w[0] + self._log_decay * before)
            self._log_w[0] += self._log_decay * cum[-1]
        else:
            for g in np.unique(groups):
                idx = np.flatnonzero(groups == g)
                sub = losses[idx]
                cum = np.cumsum(sub, axis=0)
                before = np.empty_like(cum)
                before[0] = 0.0
                before[1:] = cum[:-1]
                p[idx] = _row_softmax(self._log_w[g] + self._log_decay * before)
                self._log_w[g] += self._log_decay * cum[-1]
        return p


class SingleMW(_MultiplicativeWeights):
    """One shared weight table; play is independent of the arriving group."""

    kind = "single_mw"
    per_group = False


class PerGroupMW(_MultiplicativeWeights):
    """Independent weight table per group; only the arriving group updates."""

    kind = "per_group_mw"
    per_group = True


class FollowPerturbedLeader(Learner):
    """Expected-distribution form of the perturbed-leader rule.

    Play weight of expert f is the fraction of a fixed m-point perturbation
    grid under which f has the lowest perturbed cumulative loss (ties to the
    lowest index). Each expert's grid column holds exactly the m mid-quantiles
    of the exponential distribution with rate eta, in a fixed scrambled order,
    so the play depends on the loss history only through pairwise cumulative
    loss differences.
    """

    kind = "fpl"
    supports_blocks = True

    def __init__(self, eta: float, grid_m: int = DEFAULT_GRID_M) -> None:
        super().__init__()
        self.eta = _check_eta(eta)
        self.grid_m = int(grid_m)
        if self.grid_m < 1:
            raise ConfigError(f"grid_m must be >= 1, got {grid_m!r}")

    def _init_state(self) -> None:
        m = self.grid_m
        quantiles = -np.log1p(-(np.arange(m) + 0.5) / m) / self.eta
        rng = np.random.default_rng(_FPL_GRID_SEED)
        grid = np.empty((m, self.d), dtype=np.float64)
        for f in range(self.d):
            grid[:, f] = quantiles[rng.permutation(m)]
        self._grid = grid
        self._cum = np.zeros(self.d, dtype=np.float64)

    def next_distribution(self, group: GroupId) -> np.ndarray:
        self._started()
        leaders = np.argmin(self._cum[None, :] - self._grid, axis=1)
        return np.bincount(leaders, minlength=self.d) / float(self.grid_m)

    def observe(self, group: GroupId, losses) -> None:
        self._started()
        self._cum += self._check_losses(losses)

    def run_block(self, groups: np.ndarray, losses: np.ndarray) -> np.ndarray:
        self._started()
        n = losses.shape[0]
        cum = np.cumsum(losses, axis=0)
        before = np.empty_like(cum)
        before[0] = 0.0
        before[1:] = cum[:-1]
        before += self._cum
        p = np.empty((n, self.d), dtype=np.float64)
        # Chunked so the (rows, m, d) work array stays around 16 MB.
        chunk = max(1, 2_000_000 // (self.grid_m * self.d))
        for s in range(0, n, chunk):
            e = min(n, s + chunk)
            pert = before[s:e, None, :] - self._grid[None, :, :]
            leaders = pert.argmin(axis=2)
            for f in range(self.d):
                p[s:e, f] = (leaders == f).mean(axis=1)
        self._cum += cum[-1]
        return p


class FixedShare(Learner):
    """Multiplicative update followed by mixing rho of the mass uniformly.

    The share step keeps every weight bounded away from zero, which is what
    lets the play re-concentrate quickly after the best expert changes.
    """

    kind = "fixed_share"
    per_group = False

    def __init__(self, eta: float, rho: float) -> None:
        super().__init__()
        self.eta = _check_eta(eta)
        self.rho = float(rho)
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {rho!r}")

    def _init_state(self) -> None:
        tables = self.num_groups if self.per_group else 1
        self._p = np.full((tables, self.d), 1.0 / self.d, dtype=np.float64)

    def _table(self, group: GroupId) -> int:
        return group if self.per_group else 0

    def next_distribution(self, group: GroupId) -> np.ndarray:
        self._started()
        return self._p[self._table(group)].copy()

    def observe(self, group: GroupId, losses) -> None:
        self._started()
        losses = self._check_losses(losses)
        table = self._table(group)
        w = self._p[table] * np.power(1.0 - self.eta, losses)
        w /= w.sum()
        self._p[table] = (1.0 - self.rho) * w + self.rho / self.d


class PerGroupFixedShare(FixedShare):
    """FixedShare with one independent table per group."""

    kind = "per_group_fixed_share"
    per_group = True


def default_eta(kind: str, epsilon: float, alpha: float | None = None) -> float:
    """Learning-rate defaults: min(epsilon, alpha/6) for per-group MW,
    epsilon/2 otherwise, always capped below 1/2."""
    if kind == "per_group_mw":
        if alpha is None:
            raise ConfigError("per_group_mw default eta needs alpha")
        eta = min(epsilon, alpha / 6.0)
    else:
        eta = epsilon / 2.0
    return min(eta, 0.4999)


def make_learner(
    config: Mapping,
    *,
    T: int | None = None,
    epsilon: float | None = None,
    alpha: float | None = None,
) -> Learner:
    """Build a learner from a config mapping, filling tuning defaults.

    eta defaults from (epsilon, alpha) via default_eta; rho for the share
    kinds defaults to (switches + 1) / T with switches = 2.
    """
    cfg = dict(config)
    kind = cfg.pop("kind", None)
    if kind not in LEARNER_KINDS:
        raise ConfigError(f"learner kind must be one of {LEARNER_KINDS}, got {kind!r}")
    eta = cfg.pop("eta", None)
    if eta is None:
        if epsilon is None:
            raise ConfigError(f"learner {kind!r} needs eta (or epsilon to derive it)")
        eta = default_eta(kind, epsilon, alpha)
    if kind == "single_mw" or kind == "per_group_mw":
        extra = set(cfg)
        if extra:
            raise ConfigError(f"unknown keys for {kind!r}: {sorted(extra)}")
        return SingleMW(eta) if kind == "single_mw" else PerGroupMW(eta)
    if kind == "fpl":
        grid_m = cfg.pop("grid_m", DEFAULT_GRID_M)
        if cfg:
            raise ConfigError(f"unknown keys for 'fpl': {sorted(cfg)}")
        return FollowPerturbedLeader(eta, grid_m=grid_m)
    # share kinds
    rho = cfg.pop("rho", None)
    switches = cfg.pop("switches", DEFAULT_SWITCH_BUDGET)
    if cfg:
        raise ConfigError(f"unknown keys for {kind!r}: {sorted(cfg)}")
    if rho is None:
        if not T:
            raise ConfigError(f"learner {kind!r} needs rho (or T to derive it)")
        rho = (switches + 1) / T
    cls = FixedShare if kind == "fixed_share" else PerGroupFixedShare
    return cls(eta, rho)
