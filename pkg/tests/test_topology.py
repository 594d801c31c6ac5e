import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoctl.topology import (
    ACTIVE,
    INACTIVE,
    UNCLASSIFIED,
    Cause,
    FormatError,
    NodeHasIncidentLinks,
    NonPositiveWeight,
    ParallelLink,
    SelfLoop,
    Topology,
    UnknownLink,
    dumps,
    from_links,
    loads,
)


def test_add_node_to_empty():
    t = Topology()
    t.add_node()
    assert (t.node_count(), t.link_count()) == (1, 0)


def test_add_node_to_triangle_is_isolated(t1):
    t, _ = t1
    n = t.add_node()
    assert t.node_count() == 4 and t.link_count() == 6
    assert t.incident_links(n) == []


def test_remove_isolated_node():
    t = Topology()
    for _ in range(4):
        t.add_node()
    t.remove_node(3)
    assert t.node_count() == 3


def test_remove_node_with_link_fails():
    t = from_links([(0, 1, 1.0)])
    with pytest.raises(NodeHasIncidentLinks):
        t.remove_node(0)


def test_new_link_is_unclassified():
    t = Topology()
    a, b = t.add_node(), t.add_node()
    e = t.add_link(a, b, 4.0)
    assert t.link(e).state is UNCLASSIFIED


def test_parallel_link_and_loop_rejected():
    t = from_links([(0, 1, 1.0)])
    with pytest.raises(ParallelLink):
        t.add_link(0, 1, 2.0)
    with pytest.raises(SelfLoop):
        t.add_link(0, 0, 1.0)


@pytest.mark.parametrize("w", [0.0, -1.0, float("nan"), float("inf")])
def test_bad_weights_rejected(w):
    t = Topology()
    a, b = t.add_node(), t.add_node()
    with pytest.raises(NonPositiveWeight):
        t.add_link(a, b, w)


def test_set_weight_unclassifies_with_one_journal_entry():
    t = from_links([(0, 1, 1.0, ACTIVE)])
    t.set_weight(0, 3.0)
    assert t.link(0).weight == 3.0 and t.link(0).state is UNCLASSIFIED
    assert len(t.journal) == 1 and t.journal[0].old_state is ACTIVE


def test_set_state_noop_not_journaled():
    t = from_links([(0, 1, 1.0, ACTIVE)])
    assert t.set_state(0, ACTIVE) is False
    assert t.journal == []


def test_removed_link_lookup_fails():
    t = from_links([(0, 1, 1.0)])
    t.remove_link(0)
    with pytest.raises(UnknownLink):
        t.link(0)


def test_journal_cause_context():
    t = from_links([(0, 1, 1.0), (1, 0, 1.0)])
    with t.journal_cause(Cause.TC_INVOCATION):
        t.set_state(0, ACTIVE)
    t.set_state(1, INACTIVE)
    assert [m.cause for m in t.journal] == [Cause.TC_INVOCATION, Cause.CE_HANDLING]


def test_copy_is_independent(t1):
    t, ids = t1
    u = t.copy()
    u.set_state(ids["ab"], ACTIVE)
    assert t.link(ids["ab"]).state is UNCLASSIFIED
    assert u.structure() == t.structure()
    assert t.journal == [] and len(u.journal) == 1


def test_loads_rejects_garbage():
    with pytest.raises(FormatError):
        loads("node 0\nlink 0 0 7 1.0 U\n")
    with pytest.raises(FormatError):
        loads("edge 0 1\n")


link_lists = st.lists(
    st.tuples(st.integers(0, 6), st.integers(0, 6),
              st.floats(0.01, 1e6, allow_nan=False, allow_infinity=False),
              st.sampled_from([ACTIVE, INACTIVE, UNCLASSIFIED])),
    max_size=30,
)


def _build(items) -> Topology:
    t = Topology()
    for n in range(7):
        t.add_node()
    for s, d, w, state in items:
        if s != d and t.link_between(s, d) is None:
            t.add_link(s, d, w, state=state)
    return t


@settings(max_examples=200, deadline=None)
@given(link_lists)
def test_text_format_round_trip(items):
    t = _build(items)
    u = loads(dumps(t))
    assert u.structure() == t.structure() and u.states() == t.states()
    assert dumps(u) == dumps(t)


@settings(max_examples=200, deadline=None)
@given(link_lists, st.data())
def test_indices_stay_consistent_under_edits(items, data):
    t = _build(items)
    for e in data.draw(st.lists(st.sampled_from(sorted(t.links)), unique=True)) if t.links else []:
        if data.draw(st.booleans()):
            t.remove_link(e)
        else:
            t.set_weight(e, data.draw(st.floats(0.5, 10)))
        t.audit()
    for n in list(t.nodes):
        if not t.incident_links(n):
            t.remove_node(n)
    t.audit()
