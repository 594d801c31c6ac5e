"""Link-weighted directed topology with per-link classification states.

Every state change is journaled as a :class:`LinkStateModification`, which is
the cost unit used by the incrementality metrics.
"""

from __future__ import annotations

import contextlib
import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

NodeId = int
LinkId = int


class LinkState(str, enum.Enum):
    ACTIVE = "A"
    INACTIVE = "I"
    UNCLASSIFIED = "U"

    @property
    def classified(self) -> bool:
        return self is not LinkState.UNCLASSIFIED


ACTIVE = LinkState.ACTIVE
INACTIVE = LinkState.INACTIVE
UNCLASSIFIED = LinkState.UNCLASSIFIED
CLASSIFIED = frozenset({ACTIVE, INACTIVE})
ANY_STATE = frozenset(LinkState)


class Cause(enum.Enum):
    CE_HANDLING = "ce"
    TC_INVOCATION = "tc"


class TopologyError(Exception):
    """Base class for structural errors raised by :class:`Topology`."""


class UnknownNode(TopologyError):
    pass


class UnknownLink(TopologyError):
    pass


class NodeHasIncidentLinks(TopologyError):
    pass


class ParallelLink(TopologyError):
    pass


class SelfLoop(TopologyError):
    pass


class NonPositiveWeight(TopologyError):
    pass


class DuplicateId(TopologyError):
    pass


@dataclass
class Link:
    id: LinkId
    src: NodeId
    tgt: NodeId
    weight: float
    state: LinkState = UNCLASSIFIED


@dataclass(frozen=True)
class LinkStateModification:
    link: LinkId
    old_state: LinkState
    new_state: LinkState
    cause: Cause


# Context events. Link events refer to existing links by id.
@dataclass(frozen=True)
class NodeAddition:
    node: Optional[NodeId] = None


@dataclass(frozen=True)
class NodeRemoval:
    node: NodeId


@dataclass(frozen=True)
class LinkAddition:
    src: NodeId
    tgt: NodeId
    weight: float


@dataclass(frozen=True)
class LinkRemoval:
    link: LinkId


@dataclass(frozen=True)
class WeightModification:
    link: LinkId
    weight: float


ContextEvent = Union[NodeAddition, NodeRemoval, LinkAddition, LinkRemoval, WeightModification]


def _check_weight(w: float) -> float:
    w = float(w)
    if not w > 0 or w != w or w == float("inf"):
        raise NonPositiveWeight(f"weight must be a finite positive real, got {w!r}")
    return w


class Topology:
    """Mutable directed graph without loops or parallel links."""

    def __init__(self) -> None:
        self._nodes: dict[NodeId, None] = {}
        self._links: dict[LinkId, Link] = {}
        self._out: dict[NodeId, dict[NodeId, LinkId]] = {}
        self._in: dict[NodeId, dict[NodeId, LinkId]] = {}
        self.journal: list[LinkStateModification] = []
        self.cause = Cause.CE_HANDLING
        self._next_node = 0
        self._next_link = 0

    # -- queries -----------------------------------------------------------

    @property
    def nodes(self) -> list[NodeId]:
        return list(self._nodes)

    @property
    def links(self) -> dict[LinkId, Link]:
        return self._links

    def node_count(self) -> int:
        return len(self._nodes)

    def link_count(self) -> int:
        return len(self._links)

    def has_node(self, n: NodeId) -> bool:
        return n in self._nodes

    def link(self, e: LinkId) -> Link:
        try:
            return self._links[e]
        except KeyError:
            raise UnknownLink(f"unknown link {e}") from None

    def link_between(self, src: NodeId, tgt: NodeId) -> Optional[LinkId]:
        return self._out.get(src, {}).get(tgt)

    def successors(self, n: NodeId) -> dict[NodeId, LinkId]:
        """Read-only view: target node -> link id for links leaving ``n``."""
        return self._out[n]

    def predecessors(self, n: NodeId) -> dict[NodeId, LinkId]:
        return self._in[n]

    def out_links(self, n: NodeId) -> list[LinkId]:
        self._require_node(n)
        return sorted(self._out[n].values())

    def in_links(self, n: NodeId) -> list[LinkId]:
        self._require_node(n)
        return sorted(self._in[n].values())

    def incident_links(self, n: NodeId) -> list[LinkId]:
        return sorted(set(self.out_links(n)) | set(self.in_links(n)))

    def links_in_state(self, *states: LinkState) -> list[LinkId]:
        wanted = set(states)
        return [e for e, link in self._links.items() if link.state in wanted]

    def states(self) -> dict[LinkId, LinkState]:
        return {e: link.state for e, link in self._links.items()}

    # -- mutation ----------------------------------------------------------

    def add_node(self, node: Optional[NodeId] = None) -> NodeId:
        if node is None:
            node = self._next_node
        elif node in self._nodes:
            raise DuplicateId(f"node {node} exists")
        self._nodes[node] = None
        self._out[node] = {}
        self._in[node] = {}
        self._next_node = max(self._next_node, node + 1)
        return node

    def remove_node(self, n: NodeId) -> None:
        self._require_node(n)
        if self._out[n] or self._in[n]:
            raise NodeHasIncidentLinks(f"node {n} still has incident links")
        del self._nodes[n], self._out[n], self._in[n]

    def add_link(self, src: NodeId, tgt: NodeId, w: float, link_id: Optional[LinkId] = None,
                 state: LinkState = UNCLASSIFIED) -> LinkId:
        self._require_node(src)
        self._require_node(tgt)
        if src == tgt:
            raise SelfLoop(f"loop at node {src}")
        if tgt in self._out[src]:
            raise ParallelLink(f"link {src}->{tgt} exists")
        w = _check_weight(w)
        if link_id is None:
            link_id = self._next_link
        elif link_id in self._links:
            raise DuplicateId(f"link {link_id} exists")
        self._links[link_id] = Link(link_id, src, tgt, w, state)
        self._out[src][tgt] = link_id
        self._in[tgt][src] = link_id
        self._next_link = max(self._next_link, link_id + 1)
        return link_id

    def remove_link(self, e: LinkId) -> None:
        link = self.link(e)
        del self._out[link.src][link.tgt]
        del self._in[link.tgt][link.src]
        del self._links[e]

    def set_weight(self, e: LinkId, w: float) -> None:
        """Change the weight of ``e``; the link becomes UNCLASSIFIED."""
        link = self.link(e)
        link.weight = _check_weight(w)
        self.set_state(e, UNCLASSIFIED)

    def set_state(self, e: LinkId, s: LinkState, cause: Optional[Cause] = None) -> bool:
        """Set the state of ``e``; returns whether anything changed."""
        link = self.link(e)
        if link.state is s:
            return False
        self.journal.append(LinkStateModification(e, link.state, s, cause or self.cause))
        link.state = s
        return True

    @contextlib.contextmanager
    def journal_cause(self, cause: Cause) -> Iterator[None]:
        saved, self.cause = self.cause, cause
        try:
            yield
        finally:
            self.cause = saved

    # -- misc --------------------------------------------------------------

    def copy(self) -> "Topology":
        """Structural and state copy with an empty journal."""
        t = Topology()
        for n in self._nodes:
            t.add_node(n)
        for link in self._links.values():
            t.add_link(link.src, link.tgt, link.weight, link.id, link.state)
        t._next_node, t._next_link = self._next_node, self._next_link
        return t

    def structure(self) -> tuple:
        """Hashable view of nodes and links (ids, endpoints, weights) without states."""
        return (tuple(sorted(self._nodes)),
                tuple(sorted((l.id, l.src, l.tgt, l.weight) for l in self._links.values())))

    def audit(self) -> None:
        """Raise AssertionError if the adjacency indices disagree with the link map."""
        pairs = set()
        for e, link in self._links.items():
            assert link.id == e
            assert link.src in self._nodes and link.tgt in self._nodes
            assert link.src != link.tgt, "loop"
            assert (link.src, link.tgt) not in pairs, "parallel links"
            pairs.add((link.src, link.tgt))
            assert self._out[link.src][link.tgt] == e
            assert self._in[link.tgt][link.src] == e
            assert link.weight > 0
        assert sum(len(d) for d in self._out.values()) == len(self._links)
        assert sum(len(d) for d in self._in.values()) == len(self._links)
        assert set(self._out) == set(self._nodes) == set(self._in)

    def _require_node(self, n: NodeId) -> None:
        if n not in self._nodes:
            raise UnknownNode(f"unknown node {n}")

    def __repr__(self) -> str:
        return f"Topology(nodes={len(self._nodes)}, links={len(self._links)})"


# -- text format ----------------------------------------------------------


def dumps(t: Topology) -> str:
    lines = [f"node {n}" for n in sorted(t.nodes)]
    for e in sorted(t.links):
        link = t.links[e]
        lines.append(f"link {e} {link.src} {link.tgt} {link.weight!r} {link.state.value}")
    return "\n".join(lines) + "\n"


class FormatError(ValueError):
    pass


def loads(text: str) -> Topology:
    t = Topology()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "node" and len(parts) == 2:
                t.add_node(int(parts[1]))
            elif parts[0] == "link" and len(parts) == 6:
                e, src, tgt = int(parts[1]), int(parts[2]), int(parts[3])
                t.add_link(src, tgt, float(parts[4]), e, LinkState(parts[5]))
            else:
                raise FormatError(f"line {lineno}: cannot parse {raw!r}")
        except (ValueError, TopologyError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"line {lineno}: {exc}") from exc
    return t


def from_links(links: Iterable[tuple], nodes: Iterable[NodeId] = ()) -> Topology:
    """Build a topology from ``(src, tgt, weight[, state])`` tuples, adding nodes as needed."""
    t = Topology()
    for n in nodes:
        t.add_node(n)
    for item in links:
        src, tgt, w = item[:3]
        state = item[3] if len(item) > 3 else UNCLASSIFIED
        for n in (src, tgt):
            if not t.has_node(n):
                t.add_node(n)
        t.add_link(src, tgt, w, state=state)
    return t
