import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fair_experts.learners import (
    FixedShare,
    FollowPerturbedLeader,
    PerGroupFixedShare,
    PerGroupMW,
    SingleMW,
    default_eta,
    make_learner,
)
from fair_experts.types import ConfigError, ContractError


class TestEtaDomain:
    @pytest.mark.parametrize("eta", [0.0, -0.1, 0.5, 0.7])
    def test_rejects_out_of_range(self, eta):
        for cls in (SingleMW, PerGroupMW, FollowPerturbedLeader):
            with pytest.raises(ConfigError):
                cls(eta)
        with pytest.raises(ConfigError):
            FixedShare(eta, 0.01)

    def test_defaults(self):
        assert default_eta("single_mw", 0.2) == 0.1
        assert default_eta("per_group_mw", 0.2, alpha=0.3) == pytest.approx(0.05)
        assert default_eta("per_group_mw", 0.01, alpha=0.3) == pytest.approx(0.01)
        with pytest.raises(ConfigError):
            default_eta("per_group_mw", 0.1)

    def test_use_before_start(self):
        lrn = SingleMW(0.1)
        with pytest.raises(ContractError):
            lrn.next_distribution(0)


class TestMultiplicativeWeights:
    def test_single_step_hand_value(self):
        # after losses (1, 0) at eta = 0.5, weights are (0.5, 1)
        lrn = SingleMW(0.5 - 1e-12)
        lrn.start(2)
        np.testing.assert_allclose(lrn.next_distribution(0), [0.5, 0.5], atol=0)
        lrn.observe(0, np.array([1.0, 0.0]))
        np.testing.assert_allclose(lrn.next_distribution(0), [1 / 3, 2 / 3], atol=1e-9)

    def test_two_steps(self):
        lrn = SingleMW(0.25)
        lrn.start(2)
        lrn.observe(0, np.array([1.0, 0.0]))
        lrn.observe(0, np.array([1.0, 0.5]))
        # weights: 0.75^2 vs 0.75^0.5
        w = np.array([0.75**2, 0.75**0.5])
        np.testing.assert_allclose(lrn.next_distribution(0), w / w.sum(), atol=1e-12)

    def test_per_group_isolation(self):
        lrn = PerGroupMW(0.3)
        lrn.start(2, num_groups=2)
        lrn.observe(0, np.array([1.0, 0.0]))
        # group 1 never observed anything, so it still plays uniform
        np.testing.assert_allclose(lrn.next_distribution(1), [0.5, 0.5], atol=0)
        assert lrn.next_distribution(0)[0] < 0.5

    def test_wrong_loss_shape(self):
        lrn = SingleMW(0.1)
        lrn.start(3)
        with pytest.raises(ContractError):
            lrn.observe(0, np.array([0.1, 0.2]))


class TestFixedShare:
    def test_share_step_hand_value(self):
        # eta 0.5, rho 0.5: after loss (0, 1) the mixed weights are
        # (2/3, 1/3), then sharing pulls both a quarter toward uniform
        lrn = FixedShare(0.5 - 1e-12, 0.5)
        lrn.start(2)
        lrn.observe(0, np.array([0.0, 1.0]))
        np.testing.assert_allclose(lrn.next_distribution(0), [7 / 12, 5 / 12], atol=1e-9)

    def test_rho_domain(self):
        FixedShare(0.1, 0.0)
        FixedShare(0.1, 1.0)
        with pytest.raises(ConfigError):
            FixedShare(0.1, -0.01)
        with pytest.raises(ConfigError):
            FixedShare(0.1, 1.01)

    def test_share_keeps_floor(self):
        lrn = FixedShare(0.4, 0.1)
        lrn.start(2)
        for _ in range(200):
            lrn.observe(0, np.array([1.0, 0.0]))
        # sharing guarantees at least rho/d mass on every expert
        assert lrn.next_distribution(0).min() >= 0.1 / 2 - 1e-15

    def test_per_group_variant_isolation(self):
        lrn = PerGroupFixedShare(0.3, 0.05)
        lrn.start(2, num_groups=3)
        lrn.observe(2, np.array([1.0, 0.0]))
        np.testing.assert_allclose(lrn.next_distribution(0), [0.5, 0.5], atol=0)
        assert lrn.next_distribution(2)[0] < 0.5


class TestFollowPerturbedLeader:
    def test_uniform_before_any_loss(self):
        lrn = FollowPerturbedLeader(0.1, grid_m=64)
        lrn.start(2)
        p = lrn.next_distribution(0)
        # the perturbation grid is column-permuted from identical quantiles,
        # so with zero cumulative loss ties split near evenly
        assert abs(p[0] - 0.5) < 0.2
        np.testing.assert_allclose(p.sum(), 1.0, atol=1e-12)

    def test_leader_dominates_after_large_gap(self):
        lrn = FollowPerturbedLeader(0.2, grid_m=128)
        lrn.start(3)
        for _ in range(400):
            lrn.observe(0, np.array([1.0, 1.0, 0.0]))
        p = lrn.next_distribution(0)
        assert p[2] == pytest.approx(1.0, abs=1e-12)

    def test_depends_only_on_loss_differences(self):
        a = FollowPerturbedLeader(0.1)
        b = FollowPerturbedLeader(0.1)
        a.start(2)
        b.start(2)
        rng = np.random.default_rng(5)
        for _ in range(50):
            ell = rng.random(2)
            a.observe(0, ell)
            shift = min(1.0 - ell.max(), 0.3)  # keep losses in range
            b.observe(0, np.clip(ell + shift, 0.0, 1.0))
        np.testing.assert_allclose(
            a.next_distribution(0), b.next_distribution(0), atol=1e-12
        )

    def test_grid_is_deterministic(self):
        a = FollowPerturbedLeader(0.1)
        b = FollowPerturbedLeader(0.1)
        a.start(4)
        b.start(4)
        losses = np.random.default_rng(0).random((20, 4))
        for ell in losses:
            a.observe(0, ell)
            b.observe(0, ell)
        np.testing.assert_array_equal(a.next_distribution(0), b.next_distribution(0))


def _sequential_distributions(learner, groups, losses):
    out = np.empty_like(losses, dtype=np.float64)
    for i, (g, ell) in enumerate(zip(groups, losses)):
        out[i] = learner.next_distribution(int(g))
        learner.observe(int(g), ell)
    return out


@st.composite
def _instances(draw):
    n = draw(st.integers(min_value=1, max_value=60))
    d = draw(st.integers(min_value=2, max_value=5))
    num_groups = draw(st.integers(min_value=1, max_value=3))
    seed = draw(st.integers(min_value=0, max_value=2**32 - 1))
    rng = np.random.default_rng(seed)
    groups = rng.integers(0, num_groups, n).astype(np.int64)
    losses = rng.random((n, d))
    return groups, losses, num_groups


class TestBlockEqualsSequential:
    """The vectorized block path must be a pure refactoring of the loop."""

    @settings(max_examples=40, deadline=None)
    @given(_instances(), st.sampled_from(["single_mw", "per_group_mw"]))
    def test_mw_kinds(self, instance, kind):
        groups, losses, num_groups = instance
        eta = 0.23
        mk = SingleMW if kind == "single_mw" else PerGroupMW
        blk, seq = mk(eta), mk(eta)
        blk.start(losses.shape[1], num_groups)
        seq.start(losses.shape[1], num_groups)
        p_blk = blk.run_block(groups, losses)
        p_seq = _sequential_distributions(seq, groups, losses)
        np.testing.assert_allclose(p_blk, p_seq, atol=1e-12)
        # final states agree too: next round matches
        np.testing.assert_allclose(
            blk.next_distribution(0), seq.next_distribution(0), atol=1e-12
        )

    @settings(max_examples=10, deadline=None)
    @given(_instances())
    def test_fpl(self, instance):
        groups, losses, _ = instance
        blk, seq = FollowPerturbedLeader(0.11, grid_m=64), FollowPerturbedLeader(0.11, grid_m=64)
        blk.start(losses.shape[1])
        seq.start(losses.shape[1])
        p_blk = blk.run_block(groups, losses)
        p_seq = _sequential_distributions(seq, groups, losses)
        np.testing.assert_allclose(p_blk, p_seq, atol=1e-12)


class TestGroupUnawareness:
    def test_single_mw_ignores_group_labels(self):
        rng = np.random.default_rng(11)
        losses = rng.random((80, 3))
        g1 = rng.integers(0, 2, 80).astype(np.int64)
        g2 = (1 - g1).astype(np.int64)  # relabeled groups
        a, b = SingleMW(0.15), SingleMW(0.15)
        a.start(3, 2)
        b.start(3, 2)
        np.testing.assert_array_equal(a.run_block(g1, losses), b.run_block(g2, losses))

    def test_fpl_ignores_group_labels(self):
        rng = np.random.default_rng(12)
        losses = rng.random((40, 2))
        g = rng.integers(0, 2, 40).astype(np.int64)
        a, b = FollowPerturbedLeader(0.1, grid_m=64), FollowPerturbedLeader(0.1, grid_m=64)
        a.start(2, 2)
        b.start(2, 2)
        np.testing.assert_array_equal(a.run_block(g, losses), b.run_block(1 - g, losses))


class TestMakeLearner:
    def test_kinds_and_defaults(self):
        lrn = make_learner({"kind": "single_mw"}, epsilon=0.2)
        assert isinstance(lrn, SingleMW) and lrn.eta == 0.1
        lrn = make_learner({"kind": "per_group_mw"}, epsilon=0.2, alpha=0.3)
        assert isinstance(lrn, PerGroupMW) and lrn.eta == pytest.approx(0.05)
        lrn = make_learner({"kind": "fixed_share", "eta": 0.1}, T=1000)
        assert lrn.rho == pytest.approx(3 / 1000)
        lrn = make_learner({"kind": "per_group_fixed_share", "eta": 0.1, "switches": 4}, T=100)
        assert lrn.rho == pytest.approx(5 / 100)
        lrn = make_learner({"kind": "fpl", "eta": 0.1, "grid_m": 32})
        assert lrn.grid_m == 32

    def test_errors(self):
        with pytest.raises(ConfigError):
            make_learner({"kind": "mystery"})
        with pytest.raises(ConfigError):
            make_learner({"kind": "single_mw"})  # no eta, no epsilon
        with pytest.raises(ConfigError):
            make_learner({"kind": "single_mw", "eta": 0.1, "bogus": 1})
        with pytest.raises(ConfigError):
            make_learner({"kind": "fixed_share", "eta": 0.1})  # no rho, no T
