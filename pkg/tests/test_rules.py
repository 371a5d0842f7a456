import numpy as np
import pytest

from protorules.core import (
    FALSE,
    TRUE,
    ActionTerm,
    Formula,
    RelationalError,
    Term,
    Var,
    apply_outcome,
)
from protorules.rules import (
    Example,
    OverlappingOutcomesError,
    OverlappingRulesError,
    Rule,
    RuleSet,
    attribute_outcome,
    explicit_successors,
    outcomes_overlap,
    perturb_state,
)
from tests.conftest import FALL, NO_CHANGE, PICKUP, SUCCESS

X = Var("X")
Y = Var("Y")


def t(symbol, *args):
    return Term(symbol, tuple(args))


ACT = ActionTerm("pickup", ("B-A", "B-B"))
THETA = {X: "B-A", Y: "B-B"}


class TestGoldenSemantics:
    """The two-rule slippery-gripper reference model on the stacked state."""

    def test_dry_rule_selected_with_binding(self, slippery_ruleset,
                                            stacked_state, dry_rule):
        rule, theta = slippery_ruleset.applicable_rule(stacked_state, ACT)
        assert rule == dry_rule
        assert theta == THETA

    def test_wet_rule_selected_when_wet(self, slippery_ruleset, stacked_state,
                                        wet_rule):
        wet_state = stacked_state.updated({t("wet"): TRUE})
        rule, theta = slippery_ruleset.applicable_rule(wet_state, ACT)
        assert rule == wet_rule
        assert theta == THETA

    def test_transition_probs_exact(self, slippery_ruleset, stacked_state):
        rs = slippery_ruleset
        success = apply_outcome(stacked_state, SUCCESS, THETA)
        fall = apply_outcome(stacked_state, FALL, THETA)
        unrelated = stacked_state.updated({t("clear", "B-B"): TRUE,
                                           t("wet"): TRUE})
        assert rs.transition_prob(stacked_state, ACT, success) == 0.7
        assert rs.transition_prob(stacked_state, ACT, fall) == 0.2
        assert rs.transition_prob(stacked_state, ACT, stacked_state) == 0.05
        assert rs.transition_prob(stacked_state, ACT, unrelated) == 0.05 * rs.p_min

    def test_default_rule_when_no_rule_applies(self, slippery_ruleset,
                                               stacked_state):
        held = stacked_state.updated({t("inhand-nil"): FALSE})
        rule, theta = slippery_ruleset.applicable_rule(held, ACT)
        assert rule == slippery_ruleset.default_rule()
        assert theta == {}
        assert slippery_ruleset.transition_prob(held, ACT, held) == 0.5


class TestRuleValidation:
    def test_probs_must_sum_to_one(self):
        with pytest.raises(RelationalError):
            Rule(PICKUP, Formula(), (SUCCESS,), (0.5, 0.4))

    def test_probs_length(self):
        with pytest.raises(RelationalError):
            Rule(PICKUP, Formula(), (SUCCESS,), (1.0,))

    def test_negative_prob(self):
        with pytest.raises(RelationalError):
            Rule(PICKUP, Formula(), (SUCCESS,), (1.1, -0.1))

    def test_fig_rules_pass_outcome_validation(self, dry_rule, wet_rule):
        dry_rule.validate_outcomes()
        wet_rule.validate_outcomes()

    def test_duplicate_outcomes_rejected(self):
        r = Rule(PICKUP, Formula(), (SUCCESS, SUCCESS), (0.5, 0.4, 0.1))
        with pytest.raises(OverlappingOutcomesError):
            r.validate_outcomes()

    def test_ambiguous_outcomes_rejected(self):
        # both outcomes can produce the same successor in some state
        o1 = Formula({t("clear", X): FALSE})
        o2 = Formula({t("clear", X): FALSE, t("wet"): TRUE})
        r = Rule(PICKUP, Formula(), (o1, o2), (0.5, 0.4, 0.1))
        with pytest.raises(OverlappingOutcomesError):
            r.validate_outcomes()

    def test_json_round_trip(self, slippery_ruleset):
        assert RuleSet.from_json(slippery_ruleset.to_json()) == slippery_ruleset


class TestOutcomesOverlap:
    def test_context_separates_outcomes(self, dry_rule):
        # success flips on(X,Y) off and clear off; no-change keeps the
        # context's on(X,Y)=true, so they are provably disjoint
        assert not outcomes_overlap(SUCCESS, NO_CHANGE, dry_rule.context)
        assert not outcomes_overlap(SUCCESS, FALL, dry_rule.context)
        assert not outcomes_overlap(FALL, NO_CHANGE, dry_rule.context)

    def test_overlap_without_context(self):
        o1 = Formula({t("p"): TRUE})
        assert outcomes_overlap(o1, Formula(), Formula())

    def test_equal_outcomes_overlap(self):
        assert outcomes_overlap(SUCCESS, SUCCESS, Formula())

    def test_symmetric(self, dry_rule):
        for a in (SUCCESS, FALL, NO_CHANGE):
            for b in (SUCCESS, FALL, NO_CHANGE):
                assert (outcomes_overlap(a, b, dry_rule.context)
                        == outcomes_overlap(b, a, dry_rule.context))


class TestOverlappingRules:
    def test_two_applicable_rules_raise(self, stacked_state):
        r1 = Rule(PICKUP, Formula({t("clear", X): TRUE}), (SUCCESS,), (0.9, 0.1))
        r2 = Rule(PICKUP, Formula({t("inhand-nil"): TRUE}), (SUCCESS,), (0.9, 0.1))
        rs = RuleSet((r1, r2))
        with pytest.raises(OverlappingRulesError):
            rs.applicable_rule(stacked_state, ACT)

    def test_validate_checks_reference_examples(self, stacked_state):
        r1 = Rule(PICKUP, Formula({t("clear", X): TRUE}), (SUCCESS,), (0.9, 0.1))
        r2 = Rule(PICKUP, Formula({t("inhand-nil"): TRUE}), (SUCCESS,), (0.9, 0.1))
        rs = RuleSet((r1, r2))
        ex = Example(stacked_state, ACT, stacked_state)
        with pytest.raises(OverlappingRulesError):
            rs.validate([ex])


class TestSuccessorsAndSampling:
    def test_explicit_successors(self, dry_rule, stacked_state):
        succ = explicit_successors(dry_rule, stacked_state, THETA)
        assert len(succ) == 3
        states = [s for s, _ in succ]
        assert len(set(states)) == 3
        assert succ[2] == (stacked_state, 0.05)

    def test_coinciding_successors_raise(self, stacked_state):
        o1 = Formula({t("wet"): TRUE})
        o2 = Formula({t("wet"): TRUE, t("clear", "B-A"): TRUE})
        r = Rule(PICKUP, Formula(), (o1, o2), (0.5, 0.4, 0.1))
        with pytest.raises(OverlappingOutcomesError):
            explicit_successors(r, stacked_state, THETA)

    def test_attribute_outcome(self, dry_rule, stacked_state):
        succ = apply_outcome(stacked_state, SUCCESS, THETA)
        assert attribute_outcome(dry_rule, THETA, stacked_state, succ) == 0
        assert attribute_outcome(dry_rule, THETA, stacked_state,
                                 stacked_state) == 2
        noise = stacked_state.updated({t("wet"): TRUE})
        assert attribute_outcome(dry_rule, THETA, stacked_state, noise) is None

    def test_degenerate_sampling(self, stacked_state):
        r = Rule(PICKUP, Formula(), (SUCCESS,), (1.0, 0.0))
        rs = RuleSet((r,))
        rng = np.random.default_rng(0)
        nxt, tag = rs.sample_next(stacked_state, ACT, rng)
        assert tag == 0
        assert nxt == apply_outcome(stacked_state, SUCCESS, THETA)

    def test_success_fraction_matches_probability(self, slippery_ruleset,
                                                  stacked_state,
                                                  slippery_vocab):
        rng = np.random.default_rng(42)
        hits = 0
        n = 10_000
        for _ in range(n):
            _, tag = slippery_ruleset.sample_next(stacked_state, ACT, rng,
                                                  slippery_vocab)
            if tag == 0:
                hits += 1
        assert abs(hits / n - 0.7) < 0.015

    def test_noise_sampling_needs_vocab(self, stacked_state, slippery_vocab):
        r = Rule(PICKUP, Formula(), (), (1.0,))
        rs = RuleSet((r,))
        rng = np.random.default_rng(1)
        with pytest.raises(RelationalError):
            rs.sample_next(stacked_state, ACT, rng)
        nxt, tag = rs.sample_next(stacked_state, ACT, rng, slippery_vocab)
        assert tag == "noise"
        assert nxt != stacked_state

    def test_perturb_state_changes_something(self, stacked_state,
                                             slippery_vocab):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = perturb_state(stacked_state, slippery_vocab, rng)
            diff = stacked_state.diff(p)
            assert 1 <= len(diff) <= 3
