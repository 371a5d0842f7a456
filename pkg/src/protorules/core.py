"""Relational vocabulary, terms, formulas, states, actions and bindings.

Everything here is immutable after construction and safe to share across
parallel runs.  States are stored as *complete* value maps (every ground
term constructible from the vocabulary over the declared object set is
assigned a value), which makes successor-state equality checks exact.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

TRUE = "true"
FALSE = "false"

BOOL = (TRUE, FALSE)


class RelationalError(Exception):
    """Base class for errors raised by this package."""


class UnboundVariableError(RelationalError):
    pass


class StateSpaceTooLargeError(RelationalError):
    pass


@dataclass(frozen=True, order=True)
class Var:
    """A logical variable (distinct from constants, which are plain strings)."""

    name: str

    def __repr__(self) -> str:
        return f"?{self.name}"


# An argument or value is either a constant (str) or a variable.
Atom = Union[str, Var]


def _atom_key(a: Atom) -> tuple:
    # variables sort after constants; deterministic canonical order
    return (1, a.name) if isinstance(a, Var) else (0, a)


def atom_to_json(a: Atom) -> str:
    return "?" + a.name if isinstance(a, Var) else a


def atom_from_json(s: str) -> Atom:
    return Var(s[1:]) if s.startswith("?") else s


@dataclass(frozen=True)
class Term:
    """A simple term: a function symbol applied to constants or variables."""

    symbol: str
    args: tuple = ()

    def key(self) -> tuple:
        return (self.symbol, tuple(_atom_key(a) for a in self.args))

    def variables(self) -> frozenset:
        return frozenset(a for a in self.args if isinstance(a, Var))

    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def substitute(self, binding: Mapping[Var, str]) -> "Term":
        if self.is_ground():
            return self
        args = []
        for a in self.args:
            if isinstance(a, Var):
                if a not in binding:
                    raise UnboundVariableError(f"unbound variable {a} in {self}")
                args.append(binding[a])
            else:
                args.append(a)
        return Term(self.symbol, tuple(args))

    def __repr__(self) -> str:
        if not self.args:
            return self.symbol
        return f"{self.symbol}({','.join(map(str, self.args))})"

    def to_json(self) -> list:
        return [self.symbol, [atom_to_json(a) for a in self.args]]

    @staticmethod
    def from_json(obj: list) -> "Term":
        return Term(obj[0], tuple(atom_from_json(a) for a in obj[1]))


class Formula:
    """A conjunction of literals ``term = value``, stored as a term->value map.

    Equality and hashing ignore internal ordering; iteration is canonical
    (lexicographic on symbol name, then arguments).
    """

    __slots__ = ("_map", "_items", "_hash")

    def __init__(self, literals: Union[Mapping[Term, Atom], Iterable[tuple]] = ()):
        if isinstance(literals, Mapping):
            m = dict(literals)
        else:
            m = {}
            for t, v in literals:
                if t in m and m[t] != v:
                    raise RelationalError(f"contradictory values for {t}")
                m[t] = v
        self._map = m
        self._items = tuple(sorted(m.items(), key=lambda kv: kv[0].key()))
        self._hash = hash(self._items)

    @property
    def terms(self):
        return self._map.keys()

    def value(self, t: Term) -> Atom:
        return self._map[t]

    def get(self, t: Term, default=None):
        return self._map.get(t, default)

    def items(self) -> tuple:
        return self._items

    def mapping(self) -> Mapping[Term, Atom]:
        return self._map

    def variables(self) -> frozenset:
        vs = set()
        for t, v in self._items:
            vs |= t.variables()
            if isinstance(v, Var):
                vs.add(v)
        return frozenset(vs)

    def substitute(self, binding: Mapping[Var, str]) -> "Formula":
        out = {}
        for t, v in self._items:
            gt = t.substitute(binding)
            if isinstance(v, Var):
                if v not in binding:
                    raise UnboundVariableError(f"unbound value variable {v}")
                gv = binding[v]
            else:
                gv = v
            if gt in out and out[gt] != gv:
                raise RelationalError(f"substitution makes {gt} contradictory")
            out[gt] = gv
        return Formula(out)

    def __len__(self) -> int:
        return len(self._map)

    def __bool__(self) -> bool:
        return bool(self._map)

    def __contains__(self, t: Term) -> bool:
        return t in self._map

    def __eq__(self, other) -> bool:
        return isinstance(other, Formula) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self._items:
            return "<empty>"
        return " & ".join(f"{t}={v}" for t, v in self._items)

    def to_json(self) -> list:
        return [[*t.to_json(), atom_to_json(v)] for t, v in self._items]

    @staticmethod
    def from_json(obj: list) -> "Formula":
        return Formula(
            {Term(sym, tuple(atom_from_json(a) for a in args)): atom_from_json(v)
             for sym, args, v in obj}
        )


EMPTY_FORMULA = Formula()


@dataclass(frozen=True)
class FunctionSymbol:
    name: str
    arity: int
    values: tuple  # nonempty value range

    def __post_init__(self):
        if self.arity < 0:
            raise RelationalError(f"negative arity for {self.name}")
        if not self.values:
            raise RelationalError(f"empty value range for {self.name}")


@dataclass(frozen=True)
class Vocabulary:
    """Function symbols, action symbols and constants of a domain."""

    functions: tuple  # of FunctionSymbol
    actions: tuple  # of (name, arity)
    constants: tuple  # all constants, including TRUE/FALSE
    object_types: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.functions] + [a for a, _ in self.actions]
        if len(names) != len(set(names)):
            raise RelationalError("duplicate symbol names in vocabulary")
        if any(k < 0 for _, k in self.actions):
            raise RelationalError("negative action arity")

    def function(self, name: str) -> FunctionSymbol:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def action_arity(self, name: str) -> int:
        for a, k in self.actions:
            if a == name:
                return k
        raise KeyError(name)

    def ground_terms(self, objects: Sequence[str]) -> list:
        """All ground terms constructible over the given object set, in
        canonical order."""
        terms = []
        for f in sorted(self.functions, key=lambda f: f.name):
            for args in itertools.product(objects, repeat=f.arity):
                terms.append(Term(f.name, args))
        terms.sort(key=Term.key)
        return terms

    def to_json(self) -> dict:
        return {
            "functions": [
                {"name": f.name, "arity": f.arity, "values": list(f.values)}
                for f in self.functions
            ],
            "actions": [{"name": a, "arity": k} for a, k in self.actions],
            "constants": list(self.constants),
            "object_types": dict(self.object_types),
        }

    @staticmethod
    def from_json(obj: dict) -> "Vocabulary":
        return Vocabulary(
            functions=tuple(
                FunctionSymbol(f["name"], f["arity"], tuple(f["values"]))
                for f in obj["functions"]
            ),
            actions=tuple((a["name"], a["arity"]) for a in obj["actions"]),
            constants=tuple(obj["constants"]),
            object_types=obj.get("object_types", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @staticmethod
    def load(path) -> "Vocabulary":
        with open(path) as fh:
            return Vocabulary.from_json(json.load(fh))


class State:
    """A ground, complete assignment of a value to every ground term."""

    __slots__ = ("_map", "_items", "_hash")

    def __init__(self, assignment: Mapping[Term, str]):
        self._map = dict(assignment)
        self._items = None
        self._hash = None

    def value(self, t: Term) -> str:
        return self._map[t]

    def get(self, t: Term, default=None):
        return self._map.get(t, default)

    def mapping(self) -> Mapping[Term, str]:
        return self._map

    def items(self) -> tuple:
        if self._items is None:
            self._items = tuple(sorted(self._map.items(), key=lambda kv: kv[0].key()))
        return self._items

    def terms(self):
        return self._map.keys()

    def updated(self, changes: Mapping[Term, str]) -> "State":
        m = dict(self._map)
        m.update(changes)
        return State(m)

    def diff(self, other: "State") -> dict:
        """Terms whose value differs in ``other``, mapped to other's value."""
        return {t: v for t, v in other._map.items() if self._map.get(t) != v}

    def __len__(self) -> int:
        return len(self._map)

    def __contains__(self, t: Term) -> bool:
        return t in self._map

    def __eq__(self, other) -> bool:
        return isinstance(other, State) and self._map == other._map

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.items())
        return self._hash

    def __repr__(self) -> str:
        pos = [f"{t}" if v == TRUE else f"{t}={v}"
               for t, v in self.items() if v != FALSE]
        return " & ".join(pos) or "<all-false>"

    def to_json(self) -> list:
        return [[*t.to_json(), v] for t, v in self.items()]

    @staticmethod
    def from_json(obj: list) -> "State":
        return State({Term(sym, tuple(args)): v for sym, args, v in obj})


@dataclass(frozen=True)
class ActionTerm:
    """An action symbol applied to arguments: variables for schemas,
    constants for ground instances."""

    symbol: str
    args: tuple = ()

    def is_ground(self) -> bool:
        return not any(isinstance(a, Var) for a in self.args)

    def is_schema(self) -> bool:
        vs = [a for a in self.args if isinstance(a, Var)]
        return len(vs) == len(self.args) and len(set(vs)) == len(vs)

    def variables(self) -> tuple:
        return tuple(a for a in self.args if isinstance(a, Var))

    def __repr__(self) -> str:
        if not self.args:
            return self.symbol
        return f"{self.symbol}({','.join(map(str, self.args))})"

    def to_json(self) -> list:
        return [self.symbol, [atom_to_json(a) for a in self.args]]

    @staticmethod
    def from_json(obj: list) -> "ActionTerm":
        return ActionTerm(obj[0], tuple(atom_from_json(a) for a in obj[1]))


# Canonical variable names for positional schema arguments.
_SCHEMA_VARS = "XYZUVW"


def canonical_schema(symbol: str, arity: int) -> ActionTerm:
    """The one canonical action schema per action symbol: positional,
    pairwise-distinct variables."""
    if arity <= len(_SCHEMA_VARS):
        names = _SCHEMA_VARS[:arity]
    else:
        names = [f"X{i}" for i in range(arity)]
    return ActionTerm(symbol, tuple(Var(n) for n in names))


def bind_action(schema: ActionTerm, ground: ActionTerm) -> Optional[dict]:
    """Match a ground action against a schema, returning the variable
    binding, or None when symbols/arities differ."""
    if schema.symbol != ground.symbol or len(schema.args) != len(ground.args):
        return None
    return {v: c for v, c in zip(schema.args, ground.args)}


def formula_holds(f: Formula, binding: Mapping[Var, str], s: State) -> bool:
    """True iff every literal of ``f`` holds in ``s`` under the binding.

    Ground terms absent from the state (e.g. over objects outside the
    state's universe) make the formula false.
    """
    for t, v in f.items():
        gt = t.substitute(binding) if not t.is_ground() else t
        if isinstance(v, Var):
            if v not in binding:
                raise UnboundVariableError(f"unbound value variable {v}")
            gv = binding[v]
        else:
            gv = v
        if s.get(gt) != gv:
            return False
    return True


def apply_outcome(s: State, outcome: Formula, binding: Mapping[Var, str]) -> State:
    """Successor-state function: copy ``s`` and overwrite the outcome's
    literals.  The result is a complete state over the same term set."""
    changes = {}
    for t, v in outcome.items():
        gt = t.substitute(binding) if not t.is_ground() else t
        if isinstance(v, Var):
            if v not in binding:
                raise UnboundVariableError(f"unbound value variable {v}")
            gv = binding[v]
        else:
            gv = v
        if gt not in s:
            raise RelationalError(f"outcome term {gt} not present in state")
        changes[gt] = gv
    if not changes:
        return s
    return s.updated(changes)


def enumerate_states(vocab: Vocabulary, objects: Sequence[str],
                     cap: int = 1 << 20) -> Iterator[State]:
    """Yield every complete state over the object set exactly once.

    Refuses when the product of value-range sizes exceeds ``cap``.
    """
    terms = vocab.ground_terms(objects)
    ranges = [vocab.function(t.symbol).values for t in terms]
    n = 1
    for r in ranges:
        n *= len(r)
        if n > cap:
            raise StateSpaceTooLargeError(
                f"state space exceeds cap of {cap} states")
    for combo in itertools.product(*ranges):
        yield State(dict(zip(terms, combo)))


def count_states(vocab: Vocabulary, objects: Sequence[str]) -> int:
    n = 1
    for t in vocab.ground_terms(objects):
        n *= len(vocab.function(t.symbol).values)
    return n
