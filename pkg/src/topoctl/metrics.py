"""Per-TC-run measurements, CSV/JSON output and the boundedness micro-suite."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

from scipy.stats import spearmanr

from .handlers import apply_event
from .ktc import incremental_ktc
from .topology import (
    ACTIVE,
    Cause,
    LinkAddition,
    LinkRemoval,
    LinkStateModification,
    NodeAddition,
    NodeRemoval,
    Topology,
    WeightModification,
)

CE_KINDS = ("node_add", "node_rm", "link_add", "link_rm", "weight_mod")

CSV_COLUMNS = (
    "run_index", "sim_time_s", "alive_nodes",
    "ce_node_add", "ce_node_rm", "ce_link_add", "ce_link_rm", "ce_weight_mod",
    "lsm_ce", "lsm_tc", "scope", "avg_out_degree", "degnorm_scope",
    "lsm_iktc", "lsm_bktc", "ratio", "weak_ok", "strong_ok",
    "tc_wall_ns", "check_wall_ns", "sim_wall_ns",
)


def ce_kind(ev) -> str:
    return {
        NodeAddition: "node_add",
        NodeRemoval: "node_rm",
        LinkAddition: "link_add",
        LinkRemoval: "link_rm",
        WeightModification: "weight_mod",
    }[type(ev)]


@dataclass
class RunMetrics:
    run_index: int
    sim_time: float
    alive_nodes: int
    ce_counts: dict
    lsm_ce: int
    lsm_tc: int
    scope: int
    avg_out_degree: float
    degree_normalized_scope: Optional[float]
    lsm_iktc: Optional[int]
    lsm_bktc: Optional[int]
    iktc_bktc_ratio: Optional[float]
    weak_ok: bool
    strong_ok: bool
    tc_wall_time: int = 0
    check_wall_time: int = 0
    sim_wall_time: int = 0
    dropped_messages: int = 0

    @property
    def ce_total(self) -> int:
        return sum(self.ce_counts.values())

    def row(self) -> list:
        c = self.ce_counts
        return [
            self.run_index, _num(self.sim_time), self.alive_nodes,
            c["node_add"], c["node_rm"], c["link_add"], c["link_rm"], c["weight_mod"],
            self.lsm_ce, self.lsm_tc, self.scope, _num(self.avg_out_degree),
            _num(self.degree_normalized_scope), _num(self.lsm_iktc), _num(self.lsm_bktc),
            _num(self.iktc_bktc_ratio), int(self.weak_ok), int(self.strong_ok),
            self.tc_wall_time, self.check_wall_time, self.sim_wall_time,
        ]


def _num(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def _ratio(num, den) -> Optional[float]:
    if num is None or not den:
        return None
    return num / den


def compute_run_metrics(run_index: int, sim_time: float, journal: Sequence[LinkStateModification],
                        alive_nodes: int, link_count: int, ce_counts: dict,
                        bktc_journal: Optional[Sequence[LinkStateModification]] = None,
                        incremental: bool = True, weak_ok: bool = True, strong_ok: bool = True,
                        timers: Optional[dict] = None, dropped_messages: int = 0) -> RunMetrics:
    """Derive the metrics of one TC run from the journal entries of its interval.

    ``journal`` holds the real topology's entries since the previous TC run;
    ``bktc_journal`` those of the batch mirror, if any. Ratios whose
    denominator is zero come out as None, as does the incremental/batch ratio
    for intervals without context events.
    """
    counts = {kind: int(ce_counts.get(kind, 0)) for kind in CE_KINDS}
    lsm_ce = sum(1 for m in journal if m.cause is Cause.CE_HANDLING)
    lsm_tc = sum(1 for m in journal if m.cause is Cause.TC_INVOCATION)
    scope = lsm_ce + lsm_tc
    degree = link_count / alive_nodes if alive_nodes else 0.0
    lsm_iktc = scope if incremental else None
    lsm_bktc = len(bktc_journal) if bktc_journal is not None else None
    ratio = _ratio(lsm_iktc, lsm_bktc) if sum(counts.values()) else None
    timers = timers or {}
    return RunMetrics(
        run_index=run_index, sim_time=sim_time, alive_nodes=alive_nodes, ce_counts=counts,
        lsm_ce=lsm_ce, lsm_tc=lsm_tc, scope=scope, avg_out_degree=degree,
        degree_normalized_scope=_ratio(scope, degree), lsm_iktc=lsm_iktc, lsm_bktc=lsm_bktc,
        iktc_bktc_ratio=ratio, weak_ok=weak_ok, strong_ok=strong_ok,
        tc_wall_time=int(timers.get("tc", 0)), check_wall_time=int(timers.get("check", 0)),
        sim_wall_time=int(timers.get("sim", 0)), dropped_messages=dropped_messages,
    )


def to_csv(rows: Iterable[RunMetrics], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def incremental_share(rows: Sequence[RunMetrics]) -> Optional[float]:
    """Fraction of runs with context events in which incremental beat batch."""
    eligible = [r for r in rows if r.ce_total and r.lsm_iktc is not None and r.lsm_bktc is not None]
    if not eligible:
        return None
    return sum(1 for r in eligible if r.lsm_iktc < r.lsm_bktc) / len(eligible)


def mean_series(runs: Sequence[Sequence[RunMetrics]], attr: str) -> list:
    """Per-run-index arithmetic mean across seeds, skipping absent values."""
    out = []
    for group in zip(*runs):
        vals = [getattr(r, attr) for r in group if getattr(r, attr) is not None]
        out.append(sum(vals) / len(vals) if vals else None)
    return out


def spearman_trend(xs: Sequence, ys: Sequence) -> Optional[float]:
    """Spearman rank correlation over the pairs where both values are present."""
    pairs = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
    if len(pairs) < 3:
        return None
    a, b = zip(*pairs)
    if len(set(a)) < 2 or len(set(b)) < 2:
        return None
    rho = spearmanr(a, b).statistic
    return None if math.isnan(rho) else float(rho)


def summarize(runs: Sequence[Sequence[RunMetrics]], config: Optional[dict] = None) -> dict:
    """JSON-ready summary over the seeds of one configuration."""
    flat = [r for rows in runs for r in rows]
    alive = mean_series(runs, "alive_nodes")
    degnorm = mean_series(runs, "degree_normalized_scope")
    share = incremental_share(flat)
    return {
        "config": config or {},
        "seeds": len(runs),
        "tc_runs": len(flat),
        "runs_with_ces": sum(1 for r in flat if r.ce_total),
        "incremental_better_share": share,
        "mean_ratio": _mean([r.iktc_bktc_ratio for r in flat]),
        "mean_scope": _mean([r.scope for r in flat]),
        "degnorm_vs_alive_spearman": spearman_trend(alive, degnorm),
        "weak_violations": sum(1 for r in flat if not r.weak_ok),
        "strong_violations": sum(1 for r in flat if not r.strong_ok),
        "dropped_messages": sum(r.dropped_messages for r in flat),
        "mean_ratio_series": mean_series(runs, "iktc_bktc_ratio"),
    }


def _mean(xs) -> Optional[float]:
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def dumps_summary(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


# -- boundedness micro-suite ----------------------------------------------


@dataclass
class BoundednessRecord:
    ce_type: str
    sizes: list
    handling_lsms: list
    tc_lsms: list
    expected_handling_bounded: bool
    expected_tc_bounded: bool

    @property
    def scopes(self) -> list:
        return [h + c for h, c in zip(self.handling_lsms, self.tc_lsms)]

    @property
    def handling_bounded(self) -> bool:
        return _flat(self.handling_lsms)

    @property
    def tc_bounded(self) -> bool:
        return _flat(self.tc_lsms)

    @property
    def matches_expectation(self) -> bool:
        return (self.handling_bounded == self.expected_handling_bounded
                and self.tc_bounded == self.expected_tc_bounded)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(scopes=self.scopes, handling_bounded=self.handling_bounded,
                 tc_bounded=self.tc_bounded, matches_expectation=self.matches_expectation)
        return d


def _flat(xs: list) -> bool:
    # bounded means the cost does not grow with the gadget size
    return len(set(xs)) <= 1


def fan_gadget(n: int, k: float) -> tuple[Topology, int, int, int]:
    """Strongly consistent chain of ``n`` INACTIVE links hanging off one link.

    Hub ``s`` has links to ``t_0 .. t_n`` of weight ``2 + i``; a directed path
    ``t_{i-1} -> t_i`` of weight 1 makes ``s -> t_i`` the inactive maximum of
    the triangle ``(s, t_{i-1}, t_i)``. The only witness of ``s -> t_i`` needs
    ``s -> t_{i-1}``, so unclassifying ``s -> t_0`` cascades along the chain.
    Returns the topology, the hub, the root link ``s -> t_0`` and ``t_0``.
    """
    if not k <= 3:
        raise ValueError("the fan gadget needs k <= 3")
    t = Topology()
    s = t.add_node()
    ts = [t.add_node() for _ in range(n + 1)]
    root = t.add_link(s, ts[0], 2.0)
    for i in range(1, n + 1):
        t.add_link(s, ts[i], 2.0 + i)
        t.add_link(ts[i - 1], ts[i], 1.0)
    incremental_ktc(t, k)
    return t, s, root, ts[0]


def _measure(t: Topology, ev, k: float) -> tuple[int, int]:
    mark = len(t.journal)
    apply_event(t, ev, k, check=True)
    handling = len(t.journal) - mark
    report = incremental_ktc(t, k, check=True)
    return handling, report.lsm_count


def micro_boundedness_suite(sizes: Sequence[int] = (1, 2, 4, 8, 16), k: float = 1.41) -> list[BoundednessRecord]:
    """Single-CE scenarios on gadgets of growing size.

    Every scenario starts from a strongly consistent fan gadget, applies one
    context event with its handler, then runs incremental kTC.
    """
    records = []

    def run(ce_type, make_event, exp_h, exp_tc):
        h_all, tc_all = [], []
        for n in sizes:
            t, s, root, t0 = fan_gadget(n, k)
            h, tc = _measure(t, make_event(t, s, root, t0, n), k)
            h_all.append(h)
            tc_all.append(tc)
        records.append(BoundednessRecord(ce_type, list(sizes), h_all, tc_all, exp_h, exp_tc))

    run("node_add", lambda t, s, root, t0, n: NodeAddition(), True, True)
    run("node_rm", lambda t, s, root, t0, n: NodeRemoval(t.add_node()), True, True)
    # a new link m -> t_0 closes the triangle (s, m, t_0) whose maximum s -> t_0 is
    # ACTIVE; classifying the new link first unclassifies s -> t_0 and its chain
    run("link_add", _link_add_event, True, False)
    run("link_rm", lambda t, s, root, t0, n: LinkRemoval(root), False, False)
    run("weight_mod", lambda t, s, root, t0, n: WeightModification(root, 2.0), False, False)
    return records


def _link_add_event(t: Topology, s: int, root: int, t0: int, n: int):
    m = t.add_node()
    t.add_link(s, m, 1.0, state=ACTIVE)
    assert t.links[root].state is ACTIVE
    return LinkAddition(m, t0, 1.0)


def render_boundedness(records: Sequence[BoundednessRecord]) -> str:
    lines = ["ce_type     sizes  handling  tc  expected(h/tc)  observed(h/tc)"]
    mark = {True: "bounded", False: "unbounded"}
    for r in records:
        lines.append(
            f"{r.ce_type:<11} {r.sizes} handling={r.handling_lsms} tc={r.tc_lsms} "
            f"expected={mark[r.expected_handling_bounded]}/{mark[r.expected_tc_bounded]} "
            f"observed={mark[r.handling_bounded]}/{mark[r.tc_bounded]}"
        )
    return "\n".join(lines) + "\n"

