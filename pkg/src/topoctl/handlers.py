"""Restoration handlers and the termination-enforcing pre-processing step.

Destroying rules (unclassification, link removal, weight modification) may
take away the last witnessing triangle of an INACTIVE link. The handlers find
such links with the identification conditions of :mod:`topoctl.rules` and
unclassify them, recursively.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .rules import (
    ACKind,
    Applied,
    activation_rule,
    ce_rules,
    identification_conditions,
    try_apply,
    unclassification_rule,
)
from .topology import (
    ACTIVE,
    LinkAddition,
    LinkId,
    LinkRemoval,
    NodeAddition,
    NodeRemoval,
    NodeHasIncidentLinks,
    ParallelLink,
    SelfLoop,
    Topology,
    UnknownLink,
    UnknownNode,
    WeightModification,
)


@dataclass
class RestorationTrace:
    trigger: tuple
    cascade: list = field(default_factory=list)
    depth: int = 0

    def render(self) -> str:
        name, binding = self.trigger
        args = ",".join(f"{k}={v}" for k, v in sorted(binding.items()))
        return f"trigger={name}({args}) cascade={self.cascade} depth={self.depth}"


def _orphaned_inactive_links(t: Topology, u: int, v: int, w_old: float, k: float) -> list[LinkId]:
    """INACTIVE links that lost their last witness when link (u, v) of weight ``w_old`` changed."""
    found = set()
    binding = {"1": u, "2": v}
    params = {"w_old": w_old}
    for ac in identification_conditions(k):
        y = ac.premise.links[0].name
        for pm in ac.violating_matches(t, binding, params):
            found.add(pm.links[y])
    return sorted(found)


def _cascade(t: Topology, roots: list, k: float, trace: RestorationTrace, check: bool,
             depth: int = 0) -> None:
    # Iterative depth-first walk; same order as the recursive formulation.
    rule = unclassification_rule(k)
    stack = [(e, depth) for e in reversed(roots)]
    while stack:
        e, d = stack.pop()
        link = t.links.get(e)
        if link is None or not link.state.classified:
            continue
        # redundant conditions only hold on a weakly consistent topology, i.e.
        # before the first step of a cascade started from one
        outcome = try_apply(rule, t, {"e12": e}, check=check and d == 0)
        assert isinstance(outcome, Applied), outcome
        trace.cascade.append(e)
        trace.depth = max(trace.depth, d)
        orphans = _orphaned_inactive_links(t, link.src, link.tgt, link.weight, k)
        stack.extend((y, d + 1) for y in reversed(orphans))


def handle_unclassification(t: Topology, e: LinkId, k: float, check: bool = False) -> RestorationTrace:
    """Unclassify ``e`` and, recursively, every INACTIVE link that loses its last witness."""
    t.link(e)
    trace = RestorationTrace(("unclassification", {"e12": e}))
    _cascade(t, [e], k, trace, check)
    return trace


def handle_link_removal(t: Topology, e: LinkId, k: float, check: bool = False) -> RestorationTrace:
    link = t.link(e)
    trace = RestorationTrace(("link-removal", {"e12": e}))
    outcome = try_apply(ce_rules()["link-removal"], t, {"e12": e})
    assert isinstance(outcome, Applied), outcome
    _cascade(t, _orphaned_inactive_links(t, link.src, link.tgt, link.weight, k), k, trace, check, 1)
    return trace


def handle_weight_modification(t: Topology, e: LinkId, w_new: float, k: float,
                               check: bool = False) -> RestorationTrace:
    link = t.link(e)
    w_old = link.weight
    trace = RestorationTrace(("weight-modification", {"e12": e, "w_new": w_new}))
    outcome = try_apply(ce_rules()["weight-modification"], t, {"e12": e, "w_new": w_new})
    assert isinstance(outcome, Applied), outcome
    _cascade(t, _orphaned_inactive_links(t, link.src, link.tgt, w_old, k), k, trace, check, 1)
    return trace


def _blocking_var(ac) -> str:
    """The link variable required to be ACTIVE in a deferred activation NAC."""
    for c in ac.premise.constraints:
        if getattr(c, "states", None) == frozenset({ACTIVE}):
            return c.link
    raise ValueError(f"{ac.name} has no ACTIVE link variable")


def preprocess_link(t: Topology, e: LinkId, k: float, check: bool = False) -> RestorationTrace:
    """Unclassify every ACTIVE, heavier link that would block the classification of ``e``.

    Such a link is the weight maximum of a classified kTC triangle in which
    ``e`` is one of the two lighter sides. Afterwards exactly one of
    activation and inactivation applies to ``e``.
    """
    weight = t.link(e).weight
    trace = RestorationTrace(("preprocess", {"e12": e}))
    nacs = [(ac, _blocking_var(ac)) for ac in activation_rule(k).deferred if ac.kind is ACKind.NAC]
    while True:
        target: Optional[LinkId] = None
        for ac, var in nacs:
            pm = next(ac.violating_matches(t, {"e12": e}), None)
            if pm is not None:
                target = pm.links[var]
                break
        if target is None:
            return trace
        if not t.link(target).weight > weight:
            raise AssertionError(f"preprocessing would unclassify {target}, not heavier than {e}")
        _cascade(t, [target], k, trace, check)


def apply_event(t: Topology, ev, k: float, handlers: bool = True, check: bool = False):
    """Apply one context event through its rule; returns the new id or a trace."""
    rules = ce_rules()
    if isinstance(ev, NodeAddition):
        if ev.node is not None:
            return t.add_node(ev.node)
        return try_apply(rules["node-addition"], t).co_match.nodes["1"]
    if isinstance(ev, NodeRemoval):
        if not t.has_node(ev.node):
            raise UnknownNode(f"unknown node {ev.node}")
        if not isinstance(try_apply(rules["node-removal"], t, {"1": ev.node}), Applied):
            raise NodeHasIncidentLinks(f"node {ev.node} still has incident links")
        return None
    if isinstance(ev, LinkAddition):
        for n in (ev.src, ev.tgt):
            if not t.has_node(n):
                raise UnknownNode(f"unknown node {n}")
        if ev.src == ev.tgt:
            raise SelfLoop(f"loop at node {ev.src}")
        if t.link_between(ev.src, ev.tgt) is not None:
            raise ParallelLink(f"link {ev.src}->{ev.tgt} exists")
        out = try_apply(rules["link-addition"], t, {"1": ev.src, "2": ev.tgt, "w_new": ev.weight})
        return out.co_match.links["e12"]
    if isinstance(ev, LinkRemoval):
        if ev.link not in t.links:
            raise UnknownLink(f"unknown link {ev.link}")
        if handlers:
            return handle_link_removal(t, ev.link, k, check)
        try_apply(rules["link-removal"], t, {"e12": ev.link})
        return None
    if isinstance(ev, WeightModification):
        if ev.link not in t.links:
            raise UnknownLink(f"unknown link {ev.link}")
        if handlers:
            return handle_weight_modification(t, ev.link, ev.weight, k, check)
        try_apply(rules["weight-modification"], t, {"e12": ev.link, "w_new": ev.weight})
        return None
    raise TypeError(f"not a context event: {ev!r}")
