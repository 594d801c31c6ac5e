"""Incremental and batch kTC built from the rules, plus a direct oracle."""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .handlers import preprocess_link
from .rules import Applied, activation_rule, inactivation_rule, try_apply
from .topology import (
    ACTIVE,
    INACTIVE,
    UNCLASSIFIED,
    Cause,
    LinkId,
    LinkState,
    Topology,
)


class LinkOrder(str, enum.Enum):
    WEIGHT = "weight"
    ID = "id"
    RANDOM = "random"


@dataclass
class TcRunReport:
    lsm_count: int = 0
    iterations: int = 0
    preprocessing_unclassifications: int = 0
    terminated: bool = False
    ordering_violation: Optional[str] = None
    # with record=True: link ids in termination order and one state tuple per iteration
    order: list = field(default_factory=list)
    states: list = field(default_factory=list)


class _Picker:
    """Yields UNCLASSIFIED links according to the selection policy."""

    def __init__(self, t: Topology, policy: LinkOrder, rng: Optional[random.Random]):
        self.t = t
        self.policy = policy
        self.rng = rng or random.Random(0)
        self.heap: list = []
        if policy is not LinkOrder.RANDOM:
            for e, link in t.links.items():
                if link.state is UNCLASSIFIED:
                    self.heap.append(self._key(e))
            heapq.heapify(self.heap)

    def _key(self, e: LinkId) -> tuple:
        if self.policy is LinkOrder.WEIGHT:
            return (self.t.links[e].weight, e)
        return (e, e)

    def push(self, links) -> None:
        if self.policy is not LinkOrder.RANDOM:
            for e in links:
                heapq.heappush(self.heap, self._key(e))

    def next(self) -> Optional[LinkId]:
        links = self.t.links
        if self.policy is LinkOrder.RANDOM:
            pool = sorted(e for e, link in links.items() if link.state is UNCLASSIFIED)
            return self.rng.choice(pool) if pool else None
        while self.heap:
            e = heapq.heappop(self.heap)[1]
            link = links.get(e)
            if link is not None and link.state is UNCLASSIFIED:
                return e
        return None


def termination_order(t: Topology) -> list[LinkId]:
    """Link ids sorted by weight, ties by id."""
    return sorted(t.links, key=lambda e: (t.links[e].weight, e))


def incremental_ktc(t: Topology, k: float, link_order="weight", rng: Optional[random.Random] = None,
                    check: bool = False, record: bool = False) -> TcRunReport:
    """Classify every UNCLASSIFIED link of a weakly consistent topology.

    Each picked link is pre-processed, then activated if activation is
    applicable and inactivated otherwise.
    """
    policy = LinkOrder(link_order)
    act, inact = activation_rule(k), inactivation_rule(k)
    pac = inact.condition("PAC_i,1")
    report = TcRunReport()
    picker = _Picker(t, policy, rng)
    if record:
        report.order = termination_order(t)
        report.states.append(_snapshot(t, report.order))
    start = len(t.journal)
    with t.journal_cause(Cause.TC_INVOCATION):
        while (e := picker.next()) is not None:
            trace = preprocess_link(t, e, k, check)
            report.preprocessing_unclassifications += len(trace.cascade)
            picker.push(trace.cascade)
            binding = {"e12": e}
            if check:
                inact_ok = pac.fulfilled(t, binding)
                act_ok = all(ac.fulfilled(t, binding) for ac in act.conditions)
                if act_ok == inact_ok:
                    raise AssertionError(f"link {e}: activation and inactivation applicability agree")
            outcome = try_apply(act, t, binding, check=check)
            if not isinstance(outcome, Applied):
                # the inactivation PAC is the complement of the activation NAC
                outcome = try_apply(inact, t, binding, check=check,
                                    skip=frozenset() if check else frozenset({"PAC_i,1"}))
                if not isinstance(outcome, Applied):
                    raise AssertionError(f"link {e}: neither activation nor inactivation applies")
            report.iterations += 1
            if record:
                report.states.append(_snapshot(t, report.order))
    report.lsm_count = sum(1 for m in t.journal[start:] if m.cause is Cause.TC_INVOCATION)
    report.terminated = not any(l.state is UNCLASSIFIED for l in t.links.values())
    if record and not assert_termination_ordering(report.states, report.order):
        report.ordering_violation = "consecutive link states not ordered by weight-first classification"
    return report


def batch_ktc(t: Topology, k: float, link_order="weight", rng: Optional[random.Random] = None,
              check: bool = False, record: bool = False) -> TcRunReport:
    """Unclassify every link, then classify from scratch."""
    start = len(t.journal)
    with t.journal_cause(Cause.TC_INVOCATION):
        for e in sorted(t.links):
            t.set_state(e, UNCLASSIFIED)
    report = incremental_ktc(t, k, link_order, rng, check, record)
    report.lsm_count = sum(1 for m in t.journal[start:] if m.cause is Cause.TC_INVOCATION)
    return report


def oracle_ktc(t: Topology, k: float) -> dict[LinkId, LinkState]:
    """Classification by direct triangle inspection, ignoring current states."""
    out = {}
    succ, links = t._out, t.links
    for e, link in links.items():
        wab = link.weight
        inactive = False
        for c, ac in succ[link.src].items():
            cb = succ[c].get(link.tgt)
            if cb is None:
                continue
            w1, w2 = links[ac].weight, links[cb].weight
            if wab > max(w1, w2) and wab >= k * min(w1, w2):
                inactive = True
                break
        out[e] = INACTIVE if inactive else ACTIVE
    return out


def apply_states(t: Topology, states: dict) -> None:
    for e in sorted(states):
        t.set_state(e, states[e])


def _snapshot(t: Topology, order: Sequence[LinkId]) -> tuple:
    links = t.links
    return tuple(links[e].state for e in order)


def assert_termination_ordering(states: Sequence[Sequence[LinkState]], order=None) -> bool:
    """Whether consecutive state vectors decrease strictly in the termination ordering.

    Vectors list link states by ascending (weight, id). A step is ordered when
    some position flips from UNCLASSIFIED to classified and every earlier
    position is unchanged.
    """
    for before, after in zip(states, states[1:]):
        ok = False
        for b, a in zip(before, after):
            if b == a:
                continue
            ok = b is UNCLASSIFIED and a is not UNCLASSIFIED
            break
        if not ok:
            return False
    return True
