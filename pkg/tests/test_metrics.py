import csv
import io
import json

import pytest

from topoctl.ktc import batch_ktc
from topoctl.metrics import (
    CSV_COLUMNS,
    RunMetrics,
    compute_run_metrics,
    dumps_summary,
    fan_gadget,
    incremental_share,
    micro_boundedness_suite,
    spearman_trend,
    summarize,
    to_csv,
)
from topoctl.patterns import check_strong_consistency
from topoctl.topology import ACTIVE, UNCLASSIFIED, Cause, LinkStateModification

from corpus import classified_triangle


def _journal(ce: int, tc: int) -> list:
    mk = lambda cause: LinkStateModification(0, ACTIVE, UNCLASSIFIED, cause)
    return [mk(Cause.CE_HANDLING)] * ce + [mk(Cause.TC_INVOCATION)] * tc


def test_scope_and_degree_normalization():
    m = compute_run_metrics(1, 1200.0, _journal(3, 5), alive_nodes=10, link_count=40,
                            ce_counts={"link_rm": 1})
    assert (m.lsm_ce, m.lsm_tc, m.scope, m.avg_out_degree) == (3, 5, 8, 4.0)
    assert m.degree_normalized_scope == 2.0


def test_ratio_absent_without_batch_lsms():
    m = compute_run_metrics(1, 0.0, _journal(1, 1), 2, 2, {"weight_mod": 1}, bktc_journal=[])
    assert m.lsm_bktc == 0 and m.iktc_bktc_ratio is None


def test_ratio_absent_without_events():
    m = compute_run_metrics(1, 0.0, [], 2, 2, {}, bktc_journal=_journal(0, 4))
    assert m.iktc_bktc_ratio is None


def test_ratio_present():
    m = compute_run_metrics(1, 0.0, _journal(1, 2), 2, 2, {"link_add": 1}, bktc_journal=_journal(0, 12))
    assert m.iktc_bktc_ratio == pytest.approx(0.25)


def test_batch_on_unchanged_topology_costs_two_per_link():
    t, _ = classified_triangle()
    batch_ktc(t, 2.0)
    m = compute_run_metrics(1, 0.0, [], 3, 6, {"link_add": 1}, bktc_journal=t.journal)
    assert m.lsm_bktc == 2 * 6


def _row(i, ratio, alive=10, ce=1) -> RunMetrics:
    return compute_run_metrics(i, 600.0 * i, _journal(ratio, 0), alive, 20, {"weight_mod": ce},
                               bktc_journal=_journal(0, 10))


def test_csv_layout():
    text = to_csv([_row(1, 3), _row(2, 12)])
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)
    assert rows[1][CSV_COLUMNS.index("ratio")] == "0.3"


def test_incremental_share_counts_only_runs_with_events():
    rows = [_row(1, 3), _row(2, 12), _row(3, 0, ce=0)]
    assert incremental_share(rows) == 0.5


def test_spearman_trend():
    assert spearman_trend([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman_trend([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


def test_summary_is_json():
    runs = [[_row(1, 3), _row(2, 4)], [_row(1, 5), _row(2, 6)]]
    data = json.loads(dumps_summary(summarize(runs, {"k": 1.41})))
    assert (data["seeds"], data["tc_runs"], data["runs_with_ces"]) == (2, 4, 4)
    assert data["incremental_better_share"] == 1.0
    assert data["mean_ratio_series"] == [pytest.approx(0.4), pytest.approx(0.5)]
    assert data["weak_violations"] == 0 and data["config"] == {"k": 1.41}


def test_fan_gadget_is_strongly_consistent():
    t, s, root, t0 = fan_gadget(5, 1.41)
    assert check_strong_consistency(t, 1.41).ok
    assert t.link(root).state is ACTIVE
    with pytest.raises(ValueError):
        fan_gadget(2, 3.5)


def test_boundedness_suite_matches_expectations():
    records = {r.ce_type: r for r in micro_boundedness_suite()}
    assert records["node_add"].scopes == [0] * 5
    assert records["node_rm"].scopes == [0] * 5
    assert records["link_add"].handling_lsms == [0] * 5
    assert records["link_rm"].handling_lsms == [1, 2, 4, 8, 16]
    assert all(r.matches_expectation for r in records.values())
