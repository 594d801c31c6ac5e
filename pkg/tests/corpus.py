"""Seeded random topologies and context-event streams shared by the tests."""

import math
import random

from topoctl.topology import (
    ACTIVE,
    INACTIVE,
    LinkAddition,
    LinkRemoval,
    NodeAddition,
    NodeRemoval,
    Topology,
    WeightModification,
)

KS = (1.1, 1.41, 2.0)

# criterion number -> (passed, detail); filled by test_acceptance.py, printed by conftest
ACCEPTANCE: dict = {}


def geometric_topology(rng: random.Random, max_nodes: int = 12) -> Topology:
    """Nodes in a 100x100 square, links within a random radius, weight ~ distance with jitter.

    A few in-range links are left out so that asymmetric and sparse cases occur.
    """
    n = rng.randint(2, max_nodes)
    pts = [(rng.random() * 100, rng.random() * 100) for _ in range(n)]
    radius = rng.uniform(20, 80)
    t = Topology()
    for _ in range(n):
        t.add_node()
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            d = math.dist(pts[a], pts[b])
            if d <= radius and rng.random() < 0.9:
                t.add_link(a, b, max(d, 1e-6) * rng.uniform(0.8, 1.2))
    return t


def dense_topology(rng: random.Random, lo: int = 3, hi: int = 9, p: float = 0.5) -> Topology:
    n = rng.randint(lo, hi)
    t = Topology()
    for _ in range(n):
        t.add_node()
    for a in range(n):
        for b in range(n):
            if a != b and rng.random() < p:
                t.add_link(a, b, rng.uniform(1, 10))
    return t


def random_event(rng: random.Random, t: Topology):
    """A context event that is valid on ``t``."""
    r = rng.random()
    links, nodes = sorted(t.links), sorted(t.nodes)
    if r < 0.1:
        return NodeAddition()
    if r < 0.15:
        isolated = [n for n in nodes if not t.incident_links(n)]
        if isolated:
            return NodeRemoval(rng.choice(isolated))
    if r < 0.45 and len(nodes) >= 2:
        a, b = rng.sample(nodes, 2)
        if t.link_between(a, b) is None:
            return LinkAddition(a, b, rng.uniform(1, 10))
    if r < 0.7 and links:
        return LinkRemoval(rng.choice(links))
    if links:
        return WeightModification(rng.choice(links), rng.uniform(1, 10))
    return NodeAddition()


def triangle(states=None) -> tuple[Topology, dict]:
    """Three nodes a, b, c with symmetric weights ab=4, ac=1, cb=2 (k=2 makes ab inactive)."""
    t = Topology()
    a, b, c = t.add_node(), t.add_node(), t.add_node()
    ids = {}
    for name, (s, d, w) in {
        "ab": (a, b, 4.0), "ba": (b, a, 4.0), "ac": (a, c, 1.0),
        "ca": (c, a, 1.0), "cb": (c, b, 2.0), "bc": (b, c, 2.0),
    }.items():
        ids[name] = t.add_link(s, d, w)
    for name, s in (states or {}).items():
        t.set_state(ids[name], s)
    t.journal.clear()
    return t, ids


def classified_triangle() -> tuple[Topology, dict]:
    """The triangle in its unique strongly consistent state for k=2."""
    states = {n: ACTIVE for n in ("ac", "ca", "cb", "bc")}
    states.update(ab=INACTIVE, ba=INACTIVE)
    return triangle(states)
