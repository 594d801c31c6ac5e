import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topoctl.ktc import (
    LinkOrder,
    assert_termination_ordering,
    batch_ktc,
    incremental_ktc,
    oracle_ktc,
)
from topoctl.patterns import check_strong_consistency
from topoctl.topology import ACTIVE, INACTIVE, UNCLASSIFIED, Topology, from_links

from corpus import KS, classified_triangle, geometric_topology, triangle

K = 2.0
U, A, I = UNCLASSIFIED, ACTIVE, INACTIVE


def _named_states(t, ids):
    return {n: t.link(e).state for n, e in ids.items()}


def test_incremental_on_unclassified_triangle():
    t, ids = triangle()
    incremental_ktc(t, K, check=True)
    assert _named_states(t, ids) == {"ab": I, "ba": I, "ac": A, "ca": A, "cb": A, "bc": A}


def test_already_consistent_costs_nothing():
    t, _ = classified_triangle()
    report = incremental_ktc(t, K, check=True)
    assert (report.lsm_count, report.iterations) == (0, 0)


def test_blocked_scenario_terminates():
    t = from_links([(1, 2, 1.0), (2, 3, 1.5, ACTIVE), (1, 3, 3.0, ACTIVE)])
    report = incremental_ktc(t, K, check=True, record=True)
    assert report.terminated and report.ordering_violation is None
    assert [t.link(e).state for e in (0, 1, 2)] == [A, A, I]


def test_batch_on_consistent_triangle_flips_each_link_twice():
    t, _ = classified_triangle()
    assert batch_ktc(t, K).lsm_count == 12


def test_batch_on_empty_topology():
    assert batch_ktc(Topology(), K).lsm_count == 0


def test_oracle_examples():
    t, ids = triangle()
    o = oracle_ktc(t, K)
    assert {n for n, e in ids.items() if o[e] is I} == {"ab", "ba"}
    equal = from_links([(0, 1, 2.0), (1, 2, 2.0), (0, 2, 2.0)])
    assert set(oracle_ktc(equal, K).values()) == {A}
    assert set(oracle_ktc(from_links([(0, 1, 1.0), (1, 0, 1.0)]), K).values()) == {A}


def test_termination_ordering_examples():
    table = [(U, U, U), (U, A, U), (U, A, A), (A, A, U), (A, A, I)]
    assert assert_termination_ordering(table)
    assert not assert_termination_ordering([(A, A, U), (U, A, A)])
    assert assert_termination_ordering([(U,), (A,)])
    assert assert_termination_ordering([(U,)])


@pytest.mark.parametrize("order", [o.value for o in LinkOrder])
def test_every_policy_matches_oracle(order):
    rng = random.Random(11)
    for _ in range(50):
        t = geometric_topology(rng)
        k = rng.choice(KS)
        report = incremental_ktc(t, k, order, random.Random(1), check=True, record=True)
        assert report.ordering_violation is None
        assert t.states() == oracle_ktc(t, k)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(KS))
def test_incremental_batch_oracle_agree(seed, k):
    t = geometric_topology(random.Random(seed))
    u = t.copy()
    expected = oracle_ktc(t, k)
    incremental_ktc(t, k, check=True)
    batch_ktc(u, k)
    assert t.states() == u.states() == expected
    assert check_strong_consistency(t, k).ok
