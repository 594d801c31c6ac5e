"""Graph patterns, injective matching, graph constraints and consistency checks."""

from __future__ import annotations

import enum
import functools
import operator
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence, Union

from .topology import (
    ACTIVE,
    CLASSIFIED,
    INACTIVE,
    UNCLASSIFIED,
    Link,
    LinkState,
    NodeId,
    Topology,
)

# ---------------------------------------------------------------------------
# Attribute constraints
# ---------------------------------------------------------------------------

PARAM_PREFIX = "$"


@dataclass(frozen=True)
class StateIn:
    link: str
    states: frozenset

    def links(self) -> tuple[str, ...]:
        return (self.link,)

    def params(self) -> tuple[str, ...]:
        return ()

    def rename(self, m: Mapping[str, str]) -> "StateIn":
        return StateIn(m.get(self.link, self.link), self.states)

    def __str__(self) -> str:
        if len(self.states) == 1:
            return f"state({self.link}) = {next(iter(self.states)).name}"
        names = ",".join(s.name for s in sorted(self.states, key=lambda s: s.value))
        return f"state({self.link}) in {{{names}}}"


def StateEq(link: str, state: LinkState) -> StateIn:
    return StateIn(link, frozenset({state}))


@dataclass(frozen=True)
class WExpr:
    """``coef * agg(terms)``; terms are link variables or ``$param`` names.

    With no terms the expression is the constant ``coef``.
    """

    terms: tuple[str, ...]
    agg: str = "id"
    coef: float = 1.0

    def __post_init__(self) -> None:
        if self.agg not in ("id", "min", "max"):
            raise ValueError(f"unknown aggregate {self.agg!r}")
        if self.agg == "id" and len(self.terms) > 1:
            raise ValueError("plain term takes one operand")
        if self.agg in ("min", "max"):
            object.__setattr__(self, "terms", tuple(sorted(self.terms)))

    def links(self) -> tuple[str, ...]:
        return tuple(x for x in self.terms if not x.startswith(PARAM_PREFIX))

    def params(self) -> tuple[str, ...]:
        return tuple(x[1:] for x in self.terms if x.startswith(PARAM_PREFIX))

    def rename(self, m: Mapping[str, str]) -> "WExpr":
        return WExpr(tuple(m.get(x, x) for x in self.terms), self.agg, self.coef)

    def __str__(self) -> str:
        if not self.terms:
            return repr(self.coef)
        inner = ", ".join(x if x.startswith(PARAM_PREFIX) else f"w({x})" for x in self.terms)
        body = inner if self.agg == "id" else f"{self.agg}({inner})"
        return body if self.coef == 1 else f"{self.coef!r}*{body}"


def w(link: str, coef: float = 1.0) -> WExpr:
    return WExpr((link,), "id", coef)


def wmax(*links: str, coef: float = 1.0) -> WExpr:
    return WExpr(tuple(links), "max", coef)


def wmin(*links: str, coef: float = 1.0) -> WExpr:
    return WExpr(tuple(links), "min", coef)


def param(name: str) -> WExpr:
    return WExpr((PARAM_PREFIX + name,))


def const(c: float) -> WExpr:
    return WExpr((), "id", c)


_OPS: dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt, "<=": operator.le, "=": operator.eq, ">=": operator.ge, ">": operator.gt,
}


@dataclass(frozen=True)
class WeightCmp:
    lhs: WExpr
    op: str
    rhs: WExpr

    def __post_init__(self) -> None:
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def links(self) -> tuple[str, ...]:
        return self.lhs.links() + self.rhs.links()

    def params(self) -> tuple[str, ...]:
        return self.lhs.params() + self.rhs.params()

    def rename(self, m: Mapping[str, str]) -> "WeightCmp":
        return WeightCmp(self.lhs.rename(m), self.op, self.rhs.rename(m))

    def __str__(self) -> str:
        return f"{self.lhs} {self.op} {self.rhs}"


@dataclass(frozen=True)
class Falsum:
    """Constraint that never holds; marks patterns made impossible by a rewrite."""

    def links(self) -> tuple[str, ...]:
        return ()

    def params(self) -> tuple[str, ...]:
        return ()

    def rename(self, m: Mapping[str, str]) -> "Falsum":
        return self

    def __str__(self) -> str:
        return "false"


AttributeConstraint = Union[StateIn, WeightCmp, Falsum]


def ktc_conditions(ab: str, ac: str, cb: str, k: float) -> tuple[WeightCmp, WeightCmp]:
    """``ab`` is the unique weight maximum and at least k times the lightest side."""
    return (WeightCmp(w(ab), ">", wmax(ac, cb)), WeightCmp(w(ab), ">=", wmin(ac, cb, coef=k)))


# ---------------------------------------------------------------------------
# Patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkVar:
    name: str
    src: str
    tgt: str

    def __str__(self) -> str:
        return f"{self.name}:{self.src}->{self.tgt}"


@dataclass(frozen=True)
class GraphPattern:
    nodes: tuple[str, ...]
    links: tuple[LinkVar, ...] = ()
    constraints: tuple = ()
    _plans: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self) -> None:
        names = list(self.nodes) + [lv.name for lv in self.links]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        ns = set(self.nodes)
        for lv in self.links:
            if lv.src not in ns or lv.tgt not in ns:
                raise ValueError(f"link variable {lv} has an unknown endpoint")
        ls = {lv.name for lv in self.links}
        for c in self.constraints:
            for x in c.links():
                if x not in ls:
                    raise ValueError(f"constraint {c} refers to unknown link variable {x}")
        # dedupe constraints, keep order
        object.__setattr__(self, "constraints", tuple(dict.fromkeys(self.constraints)))

    @property
    def link_names(self) -> tuple[str, ...]:
        return tuple(lv.name for lv in self.links)

    def link(self, name: str) -> LinkVar:
        for lv in self.links:
            if lv.name == name:
                return lv
        raise KeyError(name)

    def has_var(self, name: str) -> bool:
        return name in self.nodes or any(lv.name == name for lv in self.links)

    def params(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(p for c in self.constraints for p in c.params()))

    def rename(self, m: Mapping[str, str]) -> "GraphPattern":
        return GraphPattern(
            tuple(m.get(n, n) for n in self.nodes),
            tuple(LinkVar(m.get(lv.name, lv.name), m.get(lv.src, lv.src), m.get(lv.tgt, lv.tgt))
                  for lv in self.links),
            tuple(c.rename(m) for c in self.constraints),
        )

    def extend(self, nodes: Iterable[str] = (), links: Iterable[LinkVar] = (),
               constraints: Iterable = ()) -> "GraphPattern":
        return GraphPattern(self.nodes + tuple(nodes), self.links + tuple(links),
                            self.constraints + tuple(constraints))

    def is_structurally_degenerate(self) -> bool:
        """True if the pattern has a loop or two link variables with equal endpoints."""
        seen = set()
        for lv in self.links:
            if lv.src == lv.tgt or (lv.src, lv.tgt) in seen:
                return True
            seen.add((lv.src, lv.tgt))
        return False

    def render(self) -> str:
        parts = [",".join(self.nodes)]
        if self.links:
            parts.append(" ".join(str(lv) for lv in self.links))
        if self.constraints:
            parts.append("; ".join(str(c) for c in self.constraints))
        return " | ".join(parts)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Match:
    nodes: dict
    links: dict

    def __getitem__(self, var: str) -> int:
        if var in self.nodes:
            return self.nodes[var]
        return self.links[var]

    def as_dict(self) -> dict:
        return {**self.nodes, **self.links}

    def __str__(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in sorted(self.as_dict().items()))


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


_PY_OPS = {"<": "<", "<=": "<=", "=": "==", ">=": ">=", ">": ">"}


def _expr_source(e: WExpr) -> str:
    terms = [f"P[{x[1:]!r}]" if x.startswith(PARAM_PREFIX) else f"L[{x!r}].weight" for x in e.terms]
    if not terms:
        return repr(e.coef)
    body = terms[0] if e.agg == "id" else f"{e.agg}({', '.join(terms)})"
    return body if e.coef == 1 else f"{e.coef!r} * {body}"


def _compile(cs: Sequence[AttributeConstraint]) -> Callable:
    """One predicate ``f(L, P)`` checking all of ``cs``; L maps link vars to links, P params."""
    env: dict = {}
    parts = []
    for c in cs:
        if isinstance(c, Falsum):
            parts.append("False")
        elif isinstance(c, StateIn):
            name = f"S{len(env)}"
            env[name] = c.states
            parts.append(f"L[{c.link!r}].state in {name}")
        else:
            parts.append(f"({_expr_source(c.lhs)}) {_PY_OPS[c.op]} ({_expr_source(c.rhs)})")
    return eval("lambda L, P: " + (" and ".join(parts) or "True"), env)


@dataclass
class _Step:
    var: str
    anchor: Optional[str]
    outward: bool  # candidates are successors (True) or predecessors (False) of the anchor
    links: list  # (link var, other node var, var_is_src)
    checks: list  # compiled constraints that become evaluable here


@dataclass
class _Plan:
    impossible: bool
    initial_links: list  # (link var, src var, tgt var) between pre-bound nodes
    initial_checks: list
    steps: list


def _build_plan(p: GraphPattern, bound: frozenset) -> _Plan:
    if p.is_structurally_degenerate():
        return _Plan(True, [], [], [])
    assigned = set(bound)
    lassigned: set = set()
    pending = list(p.constraints)

    def take_ready() -> list:
        ready = [c for c in pending if all(x in lassigned for x in c.links())]
        for c in ready:
            pending.remove(c)
        return [_compile(ready)] if ready else []

    initial_links = []
    for lv in p.links:
        if lv.src in assigned and lv.tgt in assigned:
            initial_links.append((lv.name, lv.src, lv.tgt))
            lassigned.add(lv.name)
    initial_checks = take_ready()
    steps = []
    remaining = [n for n in p.nodes if n not in assigned]
    while remaining:
        def score(n: str) -> tuple:
            conn = sum(1 for lv in p.links
                       if (lv.src == n and lv.tgt in assigned) or (lv.tgt == n and lv.src in assigned))
            return (-conn, remaining.index(n))
        var = min(remaining, key=score)
        remaining.remove(var)
        anchor, outward, links = None, True, []
        for lv in p.links:
            if lv.src == var and lv.tgt in assigned:
                links.append((lv.name, lv.tgt, True))
                if anchor is None:
                    anchor, outward = lv.tgt, False
            elif lv.tgt == var and lv.src in assigned:
                links.append((lv.name, lv.src, False))
                if anchor is None:
                    anchor, outward = lv.src, True
        assigned.add(var)
        lassigned.update(name for name, _, _ in links)
        steps.append(_Step(var, anchor, outward, links, take_ready()))
    assert not pending, pending
    return _Plan(False, initial_links, initial_checks, steps)


def _plan_for(p: GraphPattern, bound: frozenset) -> _Plan:
    plan = p._plans.get(bound)
    if plan is None:
        plan = p._plans[bound] = _build_plan(p, bound)
    return plan


def _normalize_partial(p: GraphPattern, t: Topology, partial) -> Optional[tuple[dict, dict]]:
    """Split a partial binding into node/link maps; None if inconsistent with ``t``."""
    if partial is None:
        return {}, {}
    if isinstance(partial, Match):
        # fresh from the matcher: its links connect its nodes, so only restrict to p
        nmap = {v: n for v, n in partial.nodes.items() if v in p.nodes}
        lmap = {lv.name: partial.links[lv.name] for lv in p.links if lv.name in partial.links}
        by_name = {lv.name: lv for lv in p.links}
        if all(by_name[v].src in nmap and by_name[v].tgt in nmap for v in lmap) \
                and all(n in t._nodes for n in nmap.values()):
            return nmap, lmap
    items = partial.as_dict() if isinstance(partial, Match) else dict(partial)
    nmap: dict = {}
    lmap: dict = {}
    link_names = {lv.name: lv for lv in p.links}
    for var, val in items.items():
        if var in link_names:
            lmap[var] = val
        elif var in p.nodes:
            nmap[var] = val
    for var, e in lmap.items():
        link = t.links.get(e)
        if link is None:
            return None
        lv = link_names[var]
        for nv, node in ((lv.src, link.src), (lv.tgt, link.tgt)):
            if nmap.setdefault(nv, node) != node:
                return None
    for node in nmap.values():
        if not t.has_node(node):
            return None
    if len(set(nmap.values())) != len(nmap):
        return None
    return nmap, lmap


class _Search:
    """Backtracking state of one match search; None-returning setup means no match."""

    def __init__(self, t: Topology, p: GraphPattern, partial, params):
        self.ok = False
        norm = _normalize_partial(p, t, partial)
        if norm is None:
            return
        nmap, bound_links = norm
        plan = _plan_for(p, frozenset(nmap))
        if plan.impossible:
            return
        self.P = dict(params or {})
        self.L: dict[str, Link] = {}
        self.out, self.inn, self.links = t._out, t._in, t.links
        for name, s, g in plan.initial_links:
            e = self.out[nmap[s]].get(nmap[g])
            if e is None or (name in bound_links and bound_links[name] != e):
                return
            self.L[name] = self.links[e]
        for chk in plan.initial_checks:
            if not chk(self.L, self.P):
                return
        self.t, self.nmap, self.steps = t, nmap, plan.steps
        self.used = set(nmap.values())
        self.ok = True

    def candidates(self, step: _Step) -> list:
        nmap = self.nmap
        if step.anchor is None:
            return sorted(self.t._nodes)
        # nodes adjacent to every bound neighbour in the required direction
        adj = [self.inn[nmap[other]] if var_is_src else self.out[nmap[other]]
               for _, other, var_is_src in step.links]
        if len(adj) == 1:
            return sorted(adj[0])
        adj.sort(key=len)
        common = adj[0].keys() & adj[1].keys()
        for d in adj[2:]:
            common &= d.keys()
        return sorted(common)

    def _try(self, step: _Step, node) -> bool:
        """Bind ``node`` and the step's links; False (with links left unbound) on failure."""
        L, nmap, out, links = self.L, self.nmap, self.out, self.links
        if node in self.used:
            return False
        for name, other, var_is_src in step.links:
            e = out[node].get(nmap[other]) if var_is_src else out[nmap[other]].get(node)
            if e is None:
                for name, _, _ in step.links:
                    L.pop(name, None)
                return False
            L[name] = links[e]
        for chk in step.checks:
            if not chk(L, self.P):
                for name, _, _ in step.links:
                    del L[name]
                return False
        nmap[step.var] = node
        self.used.add(node)
        return True

    def _undo(self, step: _Step, node) -> None:
        self.used.discard(node)
        del self.nmap[step.var]
        for name, _, _ in step.links:
            del self.L[name]

    def matches(self, i: int = 0) -> Iterator[Match]:
        if i == len(self.steps):
            yield Match(dict(self.nmap), {k: v.id for k, v in self.L.items()})
            return
        step = self.steps[i]
        for node in self.candidates(step):
            if self._try(step, node):
                yield from self.matches(i + 1)
                self._undo(step, node)

    def exists(self, i: int = 0) -> bool:
        if i == len(self.steps):
            return True
        step = self.steps[i]
        for node in self.candidates(step):
            if self._try(step, node):
                found = self.exists(i + 1)
                self._undo(step, node)
                if found:
                    return True
        return False


def find_matches(t: Topology, p: GraphPattern, partial=None,
                 params: Optional[Mapping[str, float]] = None) -> Iterator[Match]:
    """Yield every injective match of ``p`` in ``t`` extending ``partial``.

    Matches come out in a deterministic order: candidates for each node
    variable are tried in ascending node id order.
    """
    search = _Search(t, p, partial, params)
    if search.ok:
        yield from search.matches()


def has_match(t: Topology, p: GraphPattern, partial=None,
              params: Optional[Mapping[str, float]] = None) -> bool:
    search = _Search(t, p, partial, params)
    return search.ok and search.exists()


# ---------------------------------------------------------------------------
# Graph constraints
# ---------------------------------------------------------------------------


class Polarity(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class GraphConstraint:
    name: str
    polarity: Polarity
    premise: GraphPattern
    conclusions: tuple = ()

    def __post_init__(self) -> None:
        if (self.polarity is Polarity.NEGATIVE) != (not self.conclusions):
            raise ValueError("negative constraints have no conclusions; positive ones need one")
        for q in self.conclusions:
            if not set(self.premise.nodes) <= set(q.nodes) or \
                    not set(self.premise.links) <= set(q.links):
                raise ValueError(f"conclusion of {self.name} does not extend its premise")


@dataclass
class ConstraintReport:
    name: str
    fulfilled: bool
    violations: list

    def render(self) -> str:
        head = f"{self.name}: {'ok' if self.fulfilled else 'VIOLATED'}"
        lines = [head] + [f"  violation: {m}" for m in self.violations]
        return "\n".join(lines)


def extends_to_any(t: Topology, conclusions: Iterable[GraphPattern], m: Match,
                   params: Optional[Mapping[str, float]] = None) -> bool:
    return any(has_match(t, q, m, params) for q in conclusions)


def check_constraint(t: Topology, c: GraphConstraint, limit: Optional[int] = None) -> ConstraintReport:
    violations = []
    for m in find_matches(t, c.premise):
        if c.polarity is Polarity.NEGATIVE or not extends_to_any(t, c.conclusions, m):
            violations.append(m)
            if limit is not None and len(violations) >= limit:
                break
    return ConstraintReport(c.name, not violations, violations)


@functools.lru_cache(maxsize=None)
def builtin_constraints(k: float) -> dict[str, GraphConstraint]:
    """The structural constraints, the unclassified-link constraint and the two kTC constraints.

    Results are cached per ``k`` (patterns cache their match plans); do not mutate.
    """
    ab, ac, cb = LinkVar("ab", "a", "b"), LinkVar("ac", "a", "c"), LinkVar("cb", "c", "b")
    inactive_premise = GraphPattern(("a", "b"), (ab,), (StateEq("ab", INACTIVE),))
    inactive_conclusion = inactive_premise.extend(
        ("c",), (ac, cb),
        (StateIn("ac", CLASSIFIED), StateIn("cb", CLASSIFIED)) + ktc_conditions("ab", "ac", "cb", k))
    active_premise = GraphPattern(
        ("a", "b", "c"), (ab, ac, cb),
        (StateEq("ab", ACTIVE), StateIn("ac", CLASSIFIED), StateIn("cb", CLASSIFIED))
        + ktc_conditions("ab", "ac", "cb", k))
    cs = [
        GraphConstraint("no-parallel-links", Polarity.NEGATIVE,
                        GraphPattern(("a", "b"), (LinkVar("ab1", "a", "b"), LinkVar("ab2", "a", "b")))),
        GraphConstraint("no-loops", Polarity.NEGATIVE, GraphPattern(("a",), (LinkVar("aa", "a", "a"),))),
        GraphConstraint("unclassified-link", Polarity.NEGATIVE,
                        GraphPattern(("a", "b"), (ab,), (StateEq("ab", UNCLASSIFIED),))),
        GraphConstraint("active-link", Polarity.NEGATIVE, active_premise),
        GraphConstraint("inactive-link", Polarity.POSITIVE, inactive_premise, (inactive_conclusion,)),
    ]
    return {c.name: c for c in cs}


STRUCTURAL = ("no-parallel-links", "no-loops")
KTC = ("active-link", "inactive-link")

# ---------------------------------------------------------------------------
# Connectivity and consistency
# ---------------------------------------------------------------------------


class Connectivity(enum.Enum):
    PHYSICAL = "physical"
    WEAK = "weak"
    STRONG = "strong"


_LEVEL_STATES = {
    Connectivity.PHYSICAL: frozenset(LinkState),
    Connectivity.WEAK: frozenset({ACTIVE, UNCLASSIFIED}),
    Connectivity.STRONG: frozenset({ACTIVE}),
}


def _reaches_all(t: Topology, start: NodeId, states: frozenset, forward: bool) -> bool:
    adj = t._out if forward else t._in
    links = t.links
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for m, e in adj[n].items():
            if m not in seen and links[e].state in states:
                seen.add(m)
                stack.append(m)
    return len(seen) == t.node_count()


def connectivity(t: Topology, level: Connectivity) -> bool:
    """Whether every node reaches every other node over links admitted at ``level``."""
    if t.node_count() <= 1:
        return True
    states = _LEVEL_STATES[level]
    start = min(t.nodes)
    return _reaches_all(t, start, states, True) and _reaches_all(t, start, states, False)


@dataclass
class ConsistencyReport:
    level: str
    constraints: list
    physically_connected: bool
    weakly_connected: Optional[bool]  # None when the physical topology is disconnected

    @property
    def ok(self) -> bool:
        return all(r.fulfilled for r in self.constraints) and self.weakly_connected is not False

    def render(self) -> str:
        lines = [f"{self.level} consistency: {'ok' if self.ok else 'VIOLATED'}"]
        lines += ["  " + r.render().replace("\n", "\n  ") for r in self.constraints]
        if self.physically_connected:
            lines.append(f"  weak connectivity: {'ok' if self.weakly_connected else 'VIOLATED'}")
        else:
            lines.append("  weak connectivity: not checked (physically disconnected)")
        return "\n".join(lines)


def _consistency(t: Topology, k: float, names: tuple, level: str,
                 constraints: Optional[dict] = None) -> ConsistencyReport:
    cs = constraints or builtin_constraints(k)
    reports = [check_constraint(t, cs[n]) for n in names]
    phys = connectivity(t, Connectivity.PHYSICAL)
    weak = connectivity(t, Connectivity.WEAK) if phys else None
    return ConsistencyReport(level, reports, phys, weak)


def check_weak_consistency(t: Topology, k: float, constraints: Optional[dict] = None) -> ConsistencyReport:
    return _consistency(t, k, STRUCTURAL + KTC, "weak", constraints)


def check_strong_consistency(t: Topology, k: float, constraints: Optional[dict] = None) -> ConsistencyReport:
    return _consistency(t, k, STRUCTURAL + KTC + ("unclassified-link",), "strong", constraints)
