import pytest

from protorules.core import (
    FALSE,
    TRUE,
    ActionTerm,
    Formula,
    FunctionSymbol,
    State,
    Term,
    Var,
    Vocabulary,
)
from protorules.rules import Rule, RuleSet

X = Var("X")
Y = Var("Y")


def t(symbol, *args):
    return Term(symbol, tuple(args))


@pytest.fixture(scope="session")
def slippery_vocab():
    """Two-blocks-and-table pickup world with a wet flag."""
    return Vocabulary(
        functions=(
            FunctionSymbol("on", 2, (TRUE, FALSE)),
            FunctionSymbol("clear", 1, (TRUE, FALSE)),
            FunctionSymbol("inhand", 1, (TRUE, FALSE)),
            FunctionSymbol("inhand-nil", 0, (TRUE, FALSE)),
            FunctionSymbol("block", 1, (TRUE, FALSE)),
            FunctionSymbol("table", 1, (TRUE, FALSE)),
            FunctionSymbol("wet", 0, (TRUE, FALSE)),
        ),
        actions=(("pickup", 2),),
        constants=(TRUE, FALSE, "B-A", "B-B", "TABLE"),
    )


@pytest.fixture(scope="session")
def stacked_state(slippery_vocab):
    """The gripper-empty single-stack state: B-A on B-B on the table."""
    objs = ("B-A", "B-B", "TABLE")
    m = {term: FALSE for term in slippery_vocab.ground_terms(objs)}
    m[t("inhand-nil")] = TRUE
    m[t("on", "B-A", "B-B")] = TRUE
    m[t("on", "B-B", "TABLE")] = TRUE
    m[t("clear", "B-A")] = TRUE
    m[t("block", "B-A")] = TRUE
    m[t("block", "B-B")] = TRUE
    m[t("table", "TABLE")] = TRUE
    return State(m)


SUCCESS = Formula({
    t("inhand", X): TRUE,
    t("clear", X): FALSE,
    t("inhand-nil"): FALSE,
    t("on", X, Y): FALSE,
    t("clear", Y): TRUE,
})

FALL = Formula({
    t("on", X, "TABLE"): TRUE,
    t("on", X, Y): FALSE,
})

NO_CHANGE = Formula()

PICKUP = ActionTerm("pickup", (X, Y))


def _context(wet):
    return Formula({
        t("on", X, Y): TRUE,
        t("clear", X): TRUE,
        t("inhand-nil"): TRUE,
        t("block", Y): TRUE,
        t("wet"): TRUE if wet else FALSE,
    })


@pytest.fixture(scope="session")
def dry_rule():
    return Rule(PICKUP, _context(wet=False), (SUCCESS, FALL, NO_CHANGE),
                (0.7, 0.2, 0.05, 0.05))


@pytest.fixture(scope="session")
def wet_rule():
    return Rule(PICKUP, _context(wet=True), (SUCCESS, FALL, NO_CHANGE),
                (0.2, 0.2, 0.3, 0.3))


@pytest.fixture(scope="session")
def slippery_ruleset(dry_rule, wet_rule):
    return RuleSet((dry_rule, wet_rule))
