import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fair_experts.types import (
    Accumulators,
    ConfigError,
    InsufficientGroupsError,
    InvariantViolation,
    Outcome,
    RoundRecord,
    Trace,
    TraceBuilder,
    group_label,
    loss_of,
    losses_from_scores,
    max_pairwise_gap,
    outcome_from_code,
    outcome_from_token,
    uniform_distribution,
    validate_distribution,
    validate_distribution_block,
)


class TestOutcome:
    def test_flip_is_involution(self):
        assert Outcome.POSITIVE.flip() is Outcome.NEGATIVE
        assert Outcome.NEGATIVE.flip() is Outcome.POSITIVE
        for o in Outcome:
            assert o.flip().flip() is o

    def test_codes_and_tokens(self):
        assert Outcome.NEGATIVE.code == 0
        assert Outcome.POSITIVE.code == 1
        assert Outcome.POSITIVE.token == "+"
        assert Outcome.NEGATIVE.token == "-"
        assert outcome_from_code(-1) is None
        assert outcome_from_token("") is None
        assert outcome_from_code(1) is Outcome.POSITIVE
        with pytest.raises(ValueError):
            outcome_from_code(7)
        with pytest.raises(ValueError):
            outcome_from_token("x")


class TestLoss:
    def test_hand_values(self):
        # score 0 = confident negative: wrong only on positives
        assert loss_of(0.0, Outcome.POSITIVE) == 1.0
        assert loss_of(0.0, Outcome.NEGATIVE) == 0.0
        assert loss_of(1.0, Outcome.POSITIVE) == 0.0
        assert loss_of(0.3, Outcome.NEGATIVE) == 0.3
        assert loss_of(0.3, Outcome.POSITIVE) == pytest.approx(0.7, abs=1e-15)

    @given(st.floats(min_value=0.0, max_value=1.0))
    def test_complement_identity(self, score):
        # loss on a label plus loss on the flipped label is exactly 1
        for outcome in Outcome:
            total = loss_of(score, outcome) + loss_of(score, outcome.flip())
            assert math.isclose(total, 1.0, abs_tol=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            loss_of(1.5, Outcome.POSITIVE)
        with pytest.raises(ValueError):
            loss_of(-0.1, Outcome.NEGATIVE)

    def test_vectorized_matches_scalar(self):
        scores = np.array([0.0, 1.0, 0.25, 0.8])
        codes = np.array([1, 1, 0, 1], dtype=np.int8)
        out = losses_from_scores(scores, codes)
        expect = [1.0, 0.0, 0.25, 1 - 0.8]
        np.testing.assert_allclose(out, expect, atol=1e-15)

    def test_vectorized_rejects_unlabeled(self):
        with pytest.raises(ValueError):
            losses_from_scores(np.array([0.5]), np.array([-1], dtype=np.int8))


class TestDistributionValidator:
    def test_accepts_simplex(self):
        validate_distribution(np.array([0.25, 0.75]))
        validate_distribution(uniform_distribution(7))

    def test_rejects_bad_vectors(self):
        with pytest.raises(ValueError):
            validate_distribution(np.array([0.7, 0.7]))
        with pytest.raises(ValueError):
            validate_distribution(np.array([-0.1, 1.1]))
        with pytest.raises(ValueError):
            validate_distribution(np.array([0.5, 0.5]), d=3)
        with pytest.raises(ValueError):
            validate_distribution(np.array([np.nan, 1.0]))

    def test_tolerance_boundary(self):
        validate_distribution(np.array([0.5, 0.5 + 0.9e-9]))
        with pytest.raises(ValueError):
            validate_distribution(np.array([0.5, 0.5 + 1.1e-9]))

    def test_block_variant_raises_invariant_violation(self):
        good = np.array([[0.5, 0.5], [1.0, 0.0]])
        validate_distribution_block(good, 2)
        with pytest.raises(InvariantViolation):
            validate_distribution_block(np.array([[0.6, 0.6]]), 2)

    def test_uniform_needs_experts(self):
        with pytest.raises(ConfigError):
            uniform_distribution(0)


class TestMaxPairwiseGap:
    def test_two_groups(self):
        gap, pair = max_pairwise_gap({0: 0.625, 1: 0.25})
        assert gap == 0.375
        assert pair == (0, 1)

    def test_three_groups_skips_none(self):
        gap, pair = max_pairwise_gap({0: 0.5, 1: 0.2, 2: None, 3: 0.45})
        assert gap == pytest.approx(0.3)
        assert pair == (0, 1)

    def test_all_equal_reports_first_pair(self):
        gap, pair = max_pairwise_gap({2: 0.4, 5: 0.4, 9: 0.4})
        assert gap == 0.0
        assert pair == (2, 5)

    def test_insufficient_groups(self):
        with pytest.raises(InsufficientGroupsError):
            max_pairwise_gap({0: 0.3, 1: None})


def test_group_labels():
    assert [group_label(g) for g in (0, 1, 2)] == ["A", "B", "C"]
    assert group_label(30) == "g30"


class TestRoundRecord:
    def test_compute_fills_expected_loss(self):
        rec = RoundRecord.compute(
            1, 0, Outcome.POSITIVE, np.array([0.25, 0.75]), np.array([1.0, 0.0])
        )
        assert rec.expected_loss == pytest.approx(0.25, abs=1e-15)

    def test_rejects_mismatched_expected_loss(self):
        with pytest.raises(ValueError):
            RoundRecord(
                t=1,
                group=0,
                outcome=Outcome.NEGATIVE,
                distribution=np.array([0.5, 0.5]),
                losses=np.array([0.0, 1.0]),
                expected_loss=0.5 + 2e-9,
            )

    def test_rejects_invalid_fields(self):
        p = np.array([0.5, 0.5])
        ell = np.array([0.0, 1.0])
        with pytest.raises(ValueError):
            RoundRecord(t=0, group=0, outcome=None, distribution=p, losses=ell, expected_loss=0.5)
        with pytest.raises(ValueError):
            RoundRecord(t=1, group=-1, outcome=None, distribution=p, losses=ell, expected_loss=0.5)
        with pytest.raises(ValueError):
            RoundRecord(
                t=1, group=0, outcome=None,
                distribution=p, losses=np.array([0.0, 1.5]), expected_loss=0.75,
            )

    def test_json_round_trip_keeps_unlabeled(self):
        rec = RoundRecord.compute(3, 1, None, np.array([1.0, 0.0]), np.array([0.5, 0.25]))
        obj = json.loads(json.dumps(rec.to_json_obj()))
        back = RoundRecord.from_json_obj(obj)
        assert back.outcome is None
        assert back.t == rec.t and back.group == rec.group
        np.testing.assert_array_equal(back.distribution, rec.distribution)


def _toy_records():
    p = np.array([0.5, 0.5])
    rows = [
        (Outcome.NEGATIVE, 0, np.array([0.0, 1.0])),
        (Outcome.POSITIVE, 1, np.array([1.0, 0.0])),
        (None, 0, np.array([0.25, 0.75])),
        (Outcome.POSITIVE, 1, np.array([1.0, 0.5])),
    ]
    return [
        RoundRecord.compute(k + 1, g, o, p, ell)
        for k, (o, g, ell) in enumerate(rows)
    ]


class TestTrace:
    def test_from_records_accumulates(self):
        tr = Trace.from_records(_toy_records())
        assert tr.T == 4 and tr.d == 2 and tr.num_groups == 2
        # group 0: one negative + one unlabeled; group 1: two positives
        np.testing.assert_array_equal(tr.accumulators.counts[0], [1, 0, 1])
        np.testing.assert_array_equal(tr.accumulators.counts[1], [0, 2, 0])
        assert tr.accumulators.learner_loss[1, 1] == pytest.approx(0.5 + 0.75)
        np.testing.assert_array_equal(tr.group_counts(), [2, 2])

    def test_record_round_trip(self):
        tr = Trace.from_records(_toy_records())
        rec = tr.record(3)
        assert rec.t == 3 and rec.outcome is None
        with pytest.raises(IndexError):
            tr.record(5)
        assert len(list(tr)) == 4

    def test_jsonl_round_trip(self, tmp_path):
        tr = Trace.from_records(_toy_records())
        path = tmp_path / "trace.jsonl"
        tr.to_jsonl(path)
        back = Trace.from_jsonl(path, num_groups=tr.num_groups)
        assert back.T == tr.T
        np.testing.assert_array_equal(back.groups, tr.groups)
        np.testing.assert_array_equal(back.outcome_codes, tr.outcome_codes)
        np.testing.assert_allclose(back.distributions, tr.distributions, atol=0)
        np.testing.assert_allclose(back.expected_loss, tr.expected_loss, atol=0)

    def test_csv_export_shape(self, tmp_path):
        tr = Trace.from_records(_toy_records())
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,group,outcome,expected_loss,p_0,p_1,loss_0,loss_1"
        assert len(lines) == 1 + tr.T
        # unlabeled round has an empty outcome cell
        assert lines[3].split(",")[2] == ""

    def test_summary_mode_blocks_record_access(self):
        builder = TraceBuilder(2, 2, retain="summary")
        recs = _toy_records()
        builder.append_block(
            np.array([r.group for r in recs]),
            np.array([-1 if r.outcome is None else r.outcome.code for r in recs], dtype=np.int8),
            np.stack([r.losses for r in recs]),
            np.stack([r.distribution for r in recs]),
            np.array([r.expected_loss for r in recs]),
        )
        tr = builder.build(rng_seed=0, scenario_id="s", learner_id="l")
        assert not tr.is_full
        assert tr.T == 4
        np.testing.assert_array_equal(tr.accumulators.counts.sum(axis=0), [1, 2, 1])
        with pytest.raises(Exception):
            tr.record(1)
        with pytest.raises(Exception):
            tr.to_jsonl("/dev/null")


class TestTraceBuilder:
    def test_rejects_bad_blocks(self):
        builder = TraceBuilder(2, 2)
        groups = np.array([0])
        codes = np.array([0], dtype=np.int8)
        ok_p = np.array([[0.5, 0.5]])
        with pytest.raises(InvariantViolation):
            builder.append_block(groups, codes, np.array([[0.0, 1.2]]), ok_p, np.array([0.6]))
        with pytest.raises(InvariantViolation):
            builder.append_block(groups, codes, np.array([[0.0, 1.0]]), np.array([[0.7, 0.7]]), np.array([0.7]))
        with pytest.raises(InvariantViolation):
            builder.append_block(np.array([5]), codes, np.array([[0.0, 1.0]]), ok_p, np.array([0.5]))

    def test_empty_build(self):
        tr = TraceBuilder(3, 2).build(rng_seed=1, scenario_id="s", learner_id="l")
        assert tr.T == 0 and tr.d == 3
        assert tr.is_full

    @given(st.integers(min_value=1, max_value=40), st.integers(min_value=0, max_value=10**6))
    def test_accumulators_match_direct_recount(self, n, seed):
        rng = np.random.default_rng(seed)
        groups = rng.integers(0, 3, n)
        codes = rng.integers(-1, 2, n).astype(np.int8)
        losses = rng.random((n, 2))
        p = rng.dirichlet(np.ones(2), size=n)
        expected = (p * losses).sum(axis=1)
        acc = Accumulators.zeros(3, 2)
        acc.add_block(groups, codes, losses, expected)
        for g in range(3):
            for b, code in ((0, 0), (1, 1), (2, -1)):
                mask = (groups == g) & (codes == code)
                assert acc.counts[g, b] == mask.sum()
                assert acc.learner_loss[g, b] == pytest.approx(expected[mask].sum(), abs=1e-12)
                for f in range(2):
                    assert acc.expert_loss[g, b, f] == pytest.approx(
                        losses[mask, f].sum(), abs=1e-12
                    )
