"""Topology-control and context-event rules guarded by application conditions.

Rules carry their application conditions as data so that the refinement
engine's output can be compared with what ships here.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Mapping, Optional, Union

from .patterns import (
    GraphPattern,
    PARAM_PREFIX,
    LinkVar,
    Match,
    StateEq,
    StateIn,
    WeightCmp,
    extends_to_any,
    find_matches,
    ktc_conditions,
    param,
    w,
)
from .topology import (
    ACTIVE,
    CLASSIFIED,
    INACTIVE,
    UNCLASSIFIED,
    LinkState,
    Topology,
)


class ACKind(enum.Enum):
    PAC = "PAC"
    NAC = "NAC"


@dataclass(frozen=True)
class ApplicationCondition:
    """A graph constraint whose premise extends the owning rule's LHS."""

    name: str
    kind: ACKind
    premise: GraphPattern
    conclusions: tuple = ()

    def violating_matches(self, t: Topology, m, params: Optional[Mapping] = None):
        """Premise matches extending the LHS match ``m`` that violate the condition."""
        for pm in find_matches(t, self.premise, m, params):
            if self.kind is ACKind.NAC or not extends_to_any(t, self.conclusions, pm, params):
                yield pm

    def fulfilled(self, t: Topology, m, params: Optional[Mapping] = None) -> bool:
        return next(self.violating_matches(t, m, params), None) is None

    def render(self) -> str:
        lines = [f"{self.name} ({self.kind.value})", f"  premise: {self.premise}"]
        lines += [f"  conclusion: {q}" for q in self.conclusions]
        return "\n".join(lines)


@dataclass(frozen=True)
class Edit:
    """Primitive effect over rule variables.

    ``op`` is one of set_state, set_weight, add_node, remove_node, add_link,
    remove_link. ``weight`` names a rule parameter.
    """

    op: str
    var: str
    state: Optional[LinkState] = None
    weight: Optional[str] = None
    src: Optional[str] = None
    tgt: Optional[str] = None

    def __str__(self) -> str:
        if self.op == "set_state":
            return f"state({self.var}) := {self.state.name}"
        if self.op == "set_weight":
            return f"w({self.var}) := ${self.weight}, state({self.var}) := UNCLASSIFIED"
        if self.op == "add_link":
            return f"add {self.var}:{self.src}->{self.tgt} with w = ${self.weight}, UNCLASSIFIED"
        return f"{self.op} {self.var}"


@dataclass(frozen=True)
class RefinedRule:
    name: str
    code: str
    lhs: GraphPattern
    rhs: GraphPattern
    effects: tuple
    parameters: tuple = ()
    weight_params: tuple = ()
    pacs: tuple = ()
    nacs: tuple = ()
    # enforced only in CHECK mode; must never fire on weakly consistent input
    redundant: tuple = ()
    # conditions enforced by a handler rather than by blocking the rule
    deferred: tuple = ()
    handler: Optional[str] = None

    @property
    def conditions(self) -> tuple:
        return self.nacs + self.pacs

    def condition(self, name: str) -> ApplicationCondition:
        for ac in self.conditions + self.redundant + self.deferred:
            if ac.name == name:
                return ac
        raise KeyError(name)

    def unrestricted(self, keep: tuple = ()) -> "RefinedRule":
        """Copy without derived conditions, keeping those named in ``keep``."""
        return RefinedRule(self.name, self.code, self.lhs, self.rhs, self.effects, self.parameters,
                           self.weight_params,
                           tuple(a for a in self.pacs if a.name in keep),
                           tuple(a for a in self.nacs if a.name in keep),
                           handler=self.handler)

    def render(self) -> str:
        lines = [f"rule {self.name}", f"  lhs: {self.lhs}", f"  rhs: {self.rhs}"]
        lines += [f"  effect: {e}" for e in self.effects]
        for title, acs in (("condition", self.conditions), ("check-only", self.redundant),
                           ("handled", self.deferred)):
            for ac in acs:
                lines.append(f"  {title}: " + ac.render().replace("\n", "\n    "))
        if self.handler:
            lines.append(f"  handler: {self.handler}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Applied:
    co_match: Match


@dataclass(frozen=True)
class Inapplicable:
    reason: str


Outcome = Union[Applied, Inapplicable]


class RedundantConditionFired(AssertionError):
    """A condition presumed redundant was violated on the given input."""


def _split_binding(rule: RefinedRule, binding) -> tuple[dict, dict]:
    items = binding.as_dict() if isinstance(binding, Match) else dict(binding or {})
    params = {k: items.pop(k) for k in list(items) if k in rule.weight_params}
    return items, params


def try_apply(rule: RefinedRule, t: Topology, binding=None, check: bool = False,
              skip: frozenset = frozenset()) -> Outcome:
    """Apply ``rule`` at the first LHS match extending ``binding`` whose conditions hold.

    Conditions named in ``skip`` are not evaluated (the caller vouches for
    them). With ``check`` the rule's check-only conditions are evaluated too and
    :class:`RedundantConditionFired` is raised if one is violated.
    """
    var_binding, params = _split_binding(rule, binding)
    missing = [p for p in rule.weight_params if p not in params]
    if missing:
        raise ValueError(f"{rule.name}: missing parameters {missing}")
    reason = "no match of the left-hand side"
    for m in find_matches(t, rule.lhs, var_binding, params):
        failed = next((ac for ac in rule.conditions
                       if ac.name not in skip and not ac.fulfilled(t, m, params)), None)
        if failed is not None:
            reason = failed.name
            continue
        if check:
            for ac in rule.redundant:
                if not ac.fulfilled(t, m, params):
                    raise RedundantConditionFired(f"{rule.name}: {ac.name} violated at {m}")
        return Applied(_execute(rule, t, m, params))
    return Inapplicable(reason)


def _execute(rule: RefinedRule, t: Topology, m: Match, params: Mapping) -> Match:
    nodes, links = dict(m.nodes), dict(m.links)
    for ed in rule.effects:
        if ed.op == "set_state":
            t.set_state(links[ed.var], ed.state)
        elif ed.op == "set_weight":
            t.set_weight(links[ed.var], params[ed.weight])
        elif ed.op == "add_node":
            nodes[ed.var] = t.add_node()
        elif ed.op == "remove_node":
            t.remove_node(nodes.pop(ed.var))
        elif ed.op == "add_link":
            links[ed.var] = t.add_link(nodes[ed.src], nodes[ed.tgt], params[ed.weight])
        elif ed.op == "remove_link":
            t.remove_link(links.pop(ed.var))
        else:
            raise ValueError(f"unknown edit {ed.op}")
    return Match(nodes, links)


# ---------------------------------------------------------------------------
# Rule definitions
# ---------------------------------------------------------------------------

E12 = LinkVar("e12", "1", "2")


def _lv(name: str) -> LinkVar:
    return LinkVar(name, name[1], name[2])


def _link_pattern(*states: LinkState) -> GraphPattern:
    return GraphPattern(("1", "2"), (E12,), (StateIn("e12", frozenset(states)),))


def _premise(base: GraphPattern, nodes: tuple, links: tuple, constraints: tuple) -> GraphPattern:
    return base.extend(nodes, tuple(_lv(n) for n in links), constraints)


def _witness(base: GraphPattern, y: str, via: str, new_node: bool, k: float) -> GraphPattern:
    """``base`` extended by a classified triangle through ``via`` that witnesses inactive ``y``."""
    a, b = y[1], y[2]
    ac, cb = f"e{a}{via}", f"e{via}{b}"
    return _premise(base, (via,) if new_node else (), (ac, cb),
                    (StateIn(ac, CLASSIFIED), StateIn(cb, CLASSIFIED)) + ktc_conditions(y, ac, cb, k))


def _triangle_nac(name: str, lhs: GraphPattern, ab: str, ac: str, cb: str, k: float) -> ApplicationCondition:
    """NAC: a classified kTC triangle whose weight maximum ``ab`` is ACTIVE (or ``e12`` itself)."""
    cons: list = []
    for link, states in ((ab, frozenset({ACTIVE})), (ac, CLASSIFIED), (cb, CLASSIFIED)):
        if link != "e12":
            cons.append(StateIn(link, states))
    links = tuple(x for x in (ab, ac, cb) if x != "e12")
    return ApplicationCondition(name, ACKind.NAC,
                                _premise(lhs, ("3",), links, tuple(cons) + ktc_conditions(ab, ac, cb, k)))


def _inactive_pac(name: str, lhs: GraphPattern, y: str, vias: tuple, k: float) -> ApplicationCondition:
    premise = _premise(lhs, ("3",), (y,), (StateEq(y, INACTIVE),))
    conclusions = tuple(_witness(premise, y, via, via == "4", k) for via in vias)
    return ApplicationCondition(name, ACKind.PAC, premise, conclusions)


@functools.lru_cache(maxsize=None)
def activation_rule(k: float) -> RefinedRule:
    lhs = _link_pattern(UNCLASSIFIED)
    nac1 = _triangle_nac("NAC_a,1", lhs, "e12", "e13", "e32", k)
    nac2 = _triangle_nac("NAC_a,2", lhs, "e13", "e12", "e23", k)
    nac8 = _triangle_nac("NAC_a,8", lhs, "e32", "e31", "e12", k)
    nac4 = _triangle_nac("NAC_a,4", lhs, "e21", "e23", "e31", k)
    pac2 = _inactive_pac("PAC_a,2", lhs, "e13", ("4",), k)
    return RefinedRule("activation", "a", lhs, _link_pattern(ACTIVE),
                       (Edit("set_state", "e12", ACTIVE),), ("e12",),
                       nacs=(nac1,), redundant=(pac2, nac4), deferred=(nac2, nac8))


@functools.lru_cache(maxsize=None)
def inactivation_rule(k: float) -> RefinedRule:
    lhs = _link_pattern(UNCLASSIFIED)
    premise = lhs
    pac1 = ApplicationCondition("PAC_i,1", ACKind.PAC, premise, (_witness(premise, "e12", "3", True, k),))
    nac2 = _triangle_nac("NAC_i,2", lhs, "e13", "e12", "e23", k)
    nac8 = _triangle_nac("NAC_i,8", lhs, "e32", "e31", "e12", k)
    return RefinedRule("inactivation", "i", lhs, _link_pattern(INACTIVE),
                       (Edit("set_state", "e12", INACTIVE),), ("e12",),
                       pacs=(pac1,), deferred=(nac2, nac8))


@functools.lru_cache(maxsize=None)
def unclassification_rule(k: float) -> RefinedRule:
    lhs = _link_pattern(ACTIVE, INACTIVE)
    # Orientations of an INACTIVE link incident to e12's endpoints:
    # 2: 1->3, 4: 3->1, 5: 2->3, 6: 3->2. Witness via a fresh node 4, or via
    # the other endpoint of e12 where that does not duplicate e12.
    pac2 = _inactive_pac("PAC_u,2", lhs, "e13", ("4",), k)
    pac4 = _inactive_pac("PAC_u,4", lhs, "e31", ("4", "2"), k)
    pac5 = _inactive_pac("PAC_u,5", lhs, "e23", ("4", "1"), k)
    pac6 = _inactive_pac("PAC_u,6", lhs, "e32", ("4",), k)
    premise3 = lhs.extend((), (LinkVar("e21", "2", "1"),), (StateEq("e21", INACTIVE),))
    pac3 = ApplicationCondition("PAC_u,3", ACKind.PAC, premise3,
                                (_witness(premise3, "e21", "3", True, k),))
    return RefinedRule("unclassification", "u", lhs, _link_pattern(UNCLASSIFIED),
                       (Edit("set_state", "e12", UNCLASSIFIED),), ("e12",),
                       redundant=(pac3, pac4, pac5), deferred=(pac2, pac6))


def tc_rules(k: float) -> dict[str, RefinedRule]:
    return {r.name: r for r in (activation_rule(k), inactivation_rule(k), unclassification_rule(k))}


def identification_conditions(k: float) -> tuple:
    """Violation identification for the inactive-link constraint around a changed link.

    Built from the unclassification rule's restoration PACs with the changed
    link ``e12`` dropped and the link that would close a triangle with it
    added: an INACTIVE link can only lose its witness through ``e12`` if
    ``e12``, at its weight before the edit (parameter ``w_old``), was one of
    the witness sides. Evaluated after the edit with nodes 1 and 2 bound, a
    premise match without a conclusion match is an INACTIVE link that lost
    its last witness. Valid after unclassification, removal or
    reweighting of e12, since in each case e12 can no longer be a witness side.
    """
    return _identification(k)


@functools.lru_cache(maxsize=None)
def _identification(k: float) -> tuple:
    out = []
    for ac in unclassification_rule(k).deferred:
        y = ac.premise.links[-1].name
        a, b = y[1], y[2]
        closing = _lv(f"e2{b}" if a == "1" else f"e{a}1")
        # the triangle (y, e12, closing) was a kTC witness, with e12 at its former weight
        lighter = ktc_conditions(y, PARAM_PREFIX + "w_old", closing.name, k)
        out.append(ApplicationCondition(
            ac.name.replace("PAC_u", "ID"), ac.kind,
            _drop_link(ac.premise, "e12").extend((), (closing,), lighter),
            tuple(_drop_link(q, "e12").extend((), (closing,), lighter) for q in ac.conclusions)))
    return tuple(out)


def _drop_link(p: GraphPattern, name: str) -> GraphPattern:
    return GraphPattern(p.nodes, tuple(lv for lv in p.links if lv.name != name),
                        tuple(c for c in p.constraints if name not in c.links()))


# -- context-event rules ----------------------------------------------------


@functools.lru_cache(maxsize=None)
def ce_rules() -> dict[str, RefinedRule]:
    """The five context-event rules, unrestricted, with their handler hooks."""
    one = GraphPattern(("1",))
    two = GraphPattern(("1", "2"))
    link_any = GraphPattern(("1", "2"), (E12,))
    new_link = GraphPattern(("1", "2"), (E12,),
                            (StateEq("e12", UNCLASSIFIED), WeightCmp(w("e12"), "=", param("w_new"))))
    out_link = ApplicationCondition("NAC_-n,out", ACKind.NAC, GraphPattern(("1", "2"), (E12,)))
    in_link = ApplicationCondition("NAC_-n,in", ACKind.NAC,
                                   GraphPattern(("1", "2"), (LinkVar("e21", "2", "1"),)))
    existing = ApplicationCondition("NAC_+e,existing", ACKind.NAC, link_any)
    rules = [
        RefinedRule("node-addition", "+n", GraphPattern(()), one, (Edit("add_node", "1"),)),
        RefinedRule("node-removal", "-n", one, GraphPattern(()), (Edit("remove_node", "1"),), ("1",),
                    nacs=(out_link, in_link)),
        RefinedRule("link-addition", "+e", two, new_link,
                    (Edit("add_link", "e12", src="1", tgt="2", weight="w_new"),), ("1", "2"),
                    ("w_new",), nacs=(existing,)),
        RefinedRule("link-removal", "-e", link_any, two, (Edit("remove_link", "e12"),), ("e12",),
                    handler="handle_link_removal"),
        RefinedRule("weight-modification", "mod", link_any, new_link,
                    (Edit("set_weight", "e12", weight="w_new"),), ("e12",), ("w_new",),
                    handler="handle_weight_modification"),
    ]
    return {r.name: r for r in rules}


def base_rules(k: float) -> dict[str, RefinedRule]:
    """All eight rules without derived conditions, as input to refinement."""
    out = {name: r.unrestricted() for name, r in tc_rules(k).items()}
    out.update(ce_rules())
    return out


def all_rules(k: float) -> dict[str, RefinedRule]:
    out = dict(tc_rules(k))
    out.update(ce_rules())
    return out

