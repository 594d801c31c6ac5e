"""Deterministic discrete-time WSN simulation driving the kTC engine.

Sensor nodes move (Gauss-Markov with hesitation), send one message to the
base station every ``send_interval`` and pay for every hop they forward. The
resulting context events are applied to the topology as they happen; TC runs
every ``tc_interval``.
"""

from __future__ import annotations

import heapq
import math
import random
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .config import SimConfig
from .handlers import apply_event
from .ktc import batch_ktc, incremental_ktc
from .metrics import RunMetrics, ce_kind, compute_run_metrics
from .patterns import check_strong_consistency, check_weak_consistency
from .topology import (
    INACTIVE,
    UNCLASSIFIED,
    Cause,
    LinkAddition,
    LinkRemoval,
    NodeRemoval,
    Topology,
    WeightModification,
)

BASE_STATION = 0


class ConsistencyViolation(AssertionError):
    pass


@dataclass
class NodePhysical:
    x: float
    y: float
    speed: float
    direction: float
    mean_direction: float
    battery: float
    base_station: bool = False
    alive: bool = True


@dataclass
class World:
    cfg: SimConfig
    topology: Topology
    nodes: dict
    rng: np.random.Generator
    mirror: Optional[Topology] = None
    dropped: int = 0
    ce_counts: dict = field(default_factory=dict)
    _tree: Optional[dict] = None

    def alive_nodes(self) -> list[int]:
        return [n for n, p in self.nodes.items() if p.alive]

    def distance(self, a: int, b: int) -> float:
        pa, pb = self.nodes[a], self.nodes[b]
        return math.hypot(pa.x - pb.x, pa.y - pb.y)


def _weight(d: float) -> float:
    # coincident nodes would give a zero weight
    return max(d, 1e-9)


def init_world(cfg: SimConfig) -> World:
    """Place ``node_count`` nodes uniformly; node 0 is the static base station.

    Every ordered pair within ``tx_radius`` gets an UNCLASSIFIED link weighted
    with the pair's Euclidean distance.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    t = Topology()
    nodes = {}
    pos = rng.uniform(0.0, cfg.world_side, size=(cfg.node_count, 2))
    headings = rng.uniform(0.0, 2 * math.pi, size=cfg.node_count)
    for i in range(cfg.node_count):
        n = t.add_node()
        base = n == BASE_STATION
        nodes[n] = NodePhysical(
            float(pos[i, 0]), float(pos[i, 1]),
            0.0 if base else cfg.mobility.mean_speed,
            float(headings[i]), float(headings[i]),
            cfg.energy.base_initial if base else cfg.energy.source_initial,
            base_station=base,
        )
    d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
    for i in range(cfg.node_count):
        for j in range(cfg.node_count):
            if i != j and d[i, j] <= cfg.tx_radius:
                t.add_link(i, j, _weight(float(d[i, j])))
    world = World(cfg, t, nodes, rng)
    if cfg.mode == "both":
        world.mirror = t.copy()
    world.ce_counts = {}
    return world


def _reflect(v: float, side: float) -> tuple[float, bool]:
    flipped = False
    while v < 0 or v > side:
        v = -v if v < 0 else 2 * side - v
        flipped = not flipped
    return v, flipped


def _move(p: NodePhysical, cfg: SimConfig, rng: np.random.Generator) -> None:
    m = cfg.mobility
    a = m.alpha
    noise = math.sqrt(1 - a * a)
    g_speed, g_dir = rng.standard_normal(2)
    p.speed = max(0.0, a * p.speed + (1 - a) * m.mean_speed + noise * m.speed_std * g_speed)
    p.direction = a * p.direction + (1 - a) * p.mean_direction + noise * m.direction_std * g_dir
    x = p.x + p.speed * math.cos(p.direction) * m.time_step
    y = p.y + p.speed * math.sin(p.direction) * m.time_step
    x, fx = _reflect(x, cfg.world_side)
    y, fy = _reflect(y, cfg.world_side)
    # mirror both the heading and its mean so the node does not keep pushing into the wall
    if fx:
        p.direction, p.mean_direction = math.pi - p.direction, math.pi - p.mean_direction
    if fy:
        p.direction, p.mean_direction = -p.direction, -p.mean_direction
    p.x, p.y = x, y


def _pair_events(world: World, moved: list[int]) -> list:
    """Context events for every pair involving a moved node, in ascending pair order."""
    cfg, t = world.cfg, world.topology
    alive = world.alive_nodes()
    events = []
    seen = set()
    for a in moved:
        for b in alive:
            if a == b:
                continue
            u, v = (a, b) if a < b else (b, a)
            if (u, v) in seen:
                continue
            seen.add((u, v))
            d = world.distance(u, v)
            for src, tgt in ((u, v), (v, u)):
                e = t.link_between(src, tgt)
                if e is None:
                    if d <= cfg.tx_radius:
                        events.append(LinkAddition(src, tgt, _weight(d)))
                elif d > cfg.tx_radius:
                    events.append(LinkRemoval(e))
                elif abs(t.links[e].weight - d) > cfg.weight_threshold:
                    events.append(WeightModification(e, _weight(d)))
    return events


def step_mobility(world: World) -> list:
    """Move each alive sensor node with probability ``1 - hesitation``; return the context events."""
    cfg = world.cfg
    moved = []
    for n in sorted(world.nodes):
        p = world.nodes[n]
        if not p.alive or p.base_station:
            continue
        if world.rng.random() < cfg.hesitation:
            continue
        _move(p, cfg, world.rng)
        moved.append(n)
    return _pair_events(world, moved)


def routing_tree(world: World) -> dict:
    """Shortest-path tree towards the base station over links that are not INACTIVE.

    Maps each reachable node to ``(distance, next hop, hop length)``.
    """
    t, cfg = world.topology, world.cfg
    hops = cfg.routing == "hops"
    tree = {BASE_STATION: (0.0, None, 0.0)}
    heap = [(0.0, BASE_STATION)]
    done = set()
    while heap:
        dist, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for u, e in sorted(t.predecessors(v).items()):
            link = t.links[e]
            if link.state is INACTIVE or u in done:
                continue
            nd = dist + (1.0 if hops else link.weight)
            if u not in tree or nd < tree[u][0]:
                tree[u] = (nd, v, link.weight)
                heapq.heappush(heap, (nd, u))
    return tree


def step_energy_and_traffic(world: World) -> list:
    """One send round: every alive source routes a message to the base station.

    Each forwarding node pays ``per_message * (size / 1024) * (d / tx_radius)^2``
    per message. Unreachable sources drop their message without paying.
    Returns the removal events of nodes whose battery ran out.
    """
    cfg = world.cfg
    if world._tree is None:
        world._tree = routing_tree(world)
    tree = world._tree
    load = {}
    for n in world.alive_nodes():
        if n == BASE_STATION:
            continue
        if n not in tree:
            world.dropped += 1
            continue
        load[n] = load.get(n, 0) + 1
    # push loads towards the root, farthest nodes first
    for n in sorted(load, key=lambda n: (-tree[n][0], n)):
        parent = tree[n][1]
        if parent is not None and parent != BASE_STATION:
            load[parent] = load.get(parent, 0) + load[n]
    unit = cfg.energy.per_message * cfg.message_size / 1024
    events = []
    gone = set()
    for n in sorted(load):
        p = world.nodes[n]
        hop = tree[n][2]
        p.battery -= load[n] * unit * (hop / cfg.tx_radius) ** 2
        if p.battery <= 0 and not p.base_station:
            p.alive = False
            t = world.topology
            # a link shared with a node that died earlier this round is already queued
            fresh = [e for e in t.incident_links(n) if e not in gone]
            gone.update(fresh)
            events.extend(LinkRemoval(e) for e in fresh)
            events.append(NodeRemoval(n))
    return events


def _apply(world: World, events: list) -> None:
    cfg = world.cfg
    incremental = cfg.mode != "batch"
    for ev in events:
        apply_event(world.topology, ev, cfg.k, handlers=incremental, check=cfg.check)
        if world.mirror is not None:
            apply_event(world.mirror, ev, cfg.k, handlers=False)
        kind = ce_kind(ev)
        world.ce_counts[kind] = world.ce_counts.get(kind, 0) + 1
    if events:
        world._tree = None


def _schedule(cfg: SimConfig) -> Iterator[tuple[float, int]]:
    """Merged event times; kind 0 = mobility, 1 = traffic, 2 = TC, in that order at equal times."""
    steps = (cfg.mobility.time_step, cfg.send_interval, cfg.tc_interval)
    counters = [1, 1, 1]
    while True:
        when = [counters[i] * steps[i] for i in range(3)]
        kind = min(range(3), key=lambda i: (round(when[i], 9), i))
        if when[kind] > cfg.sim_duration + 1e-9:
            return
        counters[kind] += 1
        yield when[kind], kind


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.totals = {"tc": 0, "check": 0, "sim": 0}
        self._last = time.perf_counter_ns() if enabled else 0

    def lap(self, bucket: str) -> None:
        if self.enabled:
            now = time.perf_counter_ns()
            self.totals[bucket] += now - self._last
            self._last = now

    def take(self) -> dict:
        out, self.totals = self.totals, {"tc": 0, "check": 0, "sim": 0}
        return out


def _tc(world: World, clock: _Clock) -> tuple[bool, bool]:
    cfg, t = world.cfg, world.topology
    weak_ok = strong_ok = True
    rng = random.Random(world.rng.integers(2 ** 63)) if cfg.link_order == "random" else None
    if cfg.mode == "batch":
        with t.journal_cause(Cause.TC_INVOCATION):
            for e in sorted(t.links):
                t.set_state(e, UNCLASSIFIED)
    clock.lap("tc")
    if cfg.check:
        weak_ok = check_weak_consistency(t, cfg.k).ok
        clock.lap("check")
    incremental_ktc(t, cfg.k, cfg.link_order, rng, check=cfg.check)
    clock.lap("tc")
    if cfg.check:
        strong_ok = check_strong_consistency(t, cfg.k).ok
        clock.lap("check")
    if world.mirror is not None:
        m = world.mirror
        if m.structure() != t.structure():
            raise ConsistencyViolation("batch mirror diverged structurally from the topology")
        batch_ktc(m, cfg.k, cfg.link_order, rng)
        clock.lap("sim")
    return weak_ok, strong_ok


def run_simulation(cfg: SimConfig, fail_fast: bool = False) -> Iterator[RunMetrics]:
    """Yield one :class:`RunMetrics` per recorded TC run.

    The first TC run classifies the initial topology and is not recorded, so a
    run yields ``sim_duration / tc_interval - 1`` records. With ``fail_fast``
    a consistency violation raises :class:`ConsistencyViolation`.
    """
    world = init_world(cfg)
    t = world.topology
    clock = _Clock(cfg.record_timing)
    mark = len(t.journal)
    mirror_mark = 0
    tc_index = 0
    for now, kind in _schedule(cfg):
        if kind == 0:
            events = step_mobility(world)
            clock.lap("sim")
            _apply(world, events)
            clock.lap("tc")
        elif kind == 1:
            events = step_energy_and_traffic(world)
            clock.lap("sim")
            _apply(world, events)
            clock.lap("tc")
        else:
            weak_ok, strong_ok = _tc(world, clock)
            world._tree = None
            if fail_fast and not (weak_ok and strong_ok):
                raise ConsistencyViolation(f"consistency violated at t={now:g}s")
            if tc_index > 0:
                bktc = None
                if world.mirror is not None:
                    bktc = world.mirror.journal[mirror_mark:]
                elif cfg.mode == "batch":
                    bktc = t.journal[mark:]
                yield compute_run_metrics(
                    tc_index, now, t.journal[mark:], len(world.alive_nodes()), t.link_count(),
                    world.ce_counts, bktc_journal=bktc, incremental=cfg.mode != "batch",
                    weak_ok=weak_ok, strong_ok=strong_ok, timers=clock.take(),
                    dropped_messages=world.dropped,
                )
            else:
                clock.take()
            # keep the journals short: metrics only ever look at one interval
            t.journal.clear()
            mark = 0
            if world.mirror is not None:
                world.mirror.journal.clear()
                mirror_mark = 0
            world.ce_counts = {}
            world.dropped = 0
            tc_index += 1
