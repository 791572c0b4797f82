import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from situnet.errors import ContractError
from situnet.ontology import NULL_NOUN, Ontology
from situnet.topology import N_SLOTS, TopologyCache, build_topology, neighbors_in

ROLES = ("agent", "place", "teacher", "obstacle", "source", "tool", "item", "vehicle")
ONTO = Ontology(("v0",), ROLES, (NULL_NOUN,), ((3,),), agent_aliases={2: 0})
AGENT, PLACE, TEACHER, OBSTACLE, SOURCE, TOOL, ITEM, VEHICLE = range(len(ROLES))


def test_fc_three_roles():
    t = build_topology("fully_connected", [TOOL, ITEM, VEHICLE], ONTO)
    assert len(t.edges) == 6
    assert all(0 not in e for e in t.edges)
    assert neighbors_in(t, 2) == [1, 3]


def test_unaries_has_no_edges():
    t = build_topology("unaries", [AGENT, TOOL, ITEM], ONTO)
    assert t.edges == () and neighbors_in(t, 1) == []


def test_tree_example():
    t = build_topology("tree", [AGENT, PLACE, OBSTACLE, SOURCE], ONTO)
    slot = {r: t.slot_of(r) for r in (AGENT, PLACE, OBSTACLE, SOURCE)}
    expected = {(0, slot[AGENT]), (0, slot[PLACE]),
                (slot[AGENT], slot[OBSTACLE]), (slot[AGENT], slot[SOURCE]),
                (slot[PLACE], slot[OBSTACLE]), (slot[PLACE], slot[SOURCE])}
    assert set(t.edges) == expected


def test_tree_roots_on_alias_and_degenerates():
    t = build_topology("tree", [TEACHER, TOOL], ONTO)
    assert set(t.edges) == {(0, t.slot_of(TEACHER)), (t.slot_of(TEACHER), t.slot_of(TOOL))}
    t = build_topology("tree", [TOOL, ITEM], ONTO)
    assert set(t.edges) == {(0, 1), (0, 2)}


def test_chain_follows_chain_order():
    t = build_topology("chain", [VEHICLE, AGENT, PLACE], ONTO)
    assert t.role_of_slot[1:4] == (PLACE, AGENT, VEHICLE)
    assert t.edges == ((0, 1), (1, 2), (2, 3))
    assert neighbors_in(t, 1) == [0]


def test_fc_connect_verb_flag():
    t = build_topology("fc", [TOOL, ITEM], ONTO, connect_verb=True)
    assert {(0, 1), (0, 2), (1, 0), (2, 0)} <= set(t.edges)


@pytest.mark.parametrize("roles", [[], list(range(7)), [TOOL, TOOL]])
def test_bad_role_sets(roles):
    with pytest.raises(ContractError):
        build_topology("fc", roles, ONTO)


def test_neighbors_in_inactive_slot():
    t = build_topology("fc", [TOOL], ONTO)
    with pytest.raises(ContractError):
        neighbors_in(t, 4)


def test_unknown_kind():
    with pytest.raises(ContractError):
        build_topology("star", [TOOL], ONTO)


def test_cache_returns_same_object():
    onto = Ontology(("a", "b"), ROLES, (NULL_NOUN,), ((TOOL, ITEM), (AGENT,)))
    cache = TopologyCache(onto)
    assert cache.get("fc", 0) is cache.get("fully_connected", 0)
    assert cache.get("tree", 1).edges == ((0, 1),)


frames = st.lists(st.sampled_from(range(len(ROLES))), min_size=1, max_size=6, unique=True)


@settings(max_examples=300, deadline=None)
@given(frames, st.sampled_from(["unaries", "chain", "tree", "fc"]))
def test_structural_invariants(roles, kind):
    t = build_topology(kind, roles, ONTO)
    k = len(roles)
    assert t.active_mask[0] and sum(t.active_mask) == k + 1 and len(t.active_mask) == N_SLOTS
    assert sorted(t.roles) == sorted(roles)
    assert all(t.active_mask[s] and t.active_mask[d] for s, d in t.edges)
    assert all(s != d for s, d in t.edges)
    indeg = [sum(1 for _, d in t.edges if d == s) for s in range(N_SLOTS)]
    outdeg = [sum(1 for s, _ in t.edges if s == x) for x in range(N_SLOTS)]
    if kind == "fc":
        assert len(t.edges) == k * (k - 1)
        assert all(indeg[s] == k - 1 for s in range(1, k + 1))
    elif kind == "chain":
        assert len(t.edges) == k
        assert [s for s in range(k + 1) if outdeg[s] == 0] == [k]
    elif kind == "tree":
        zeta = [r for r in roles if r in (AGENT, PLACE, TEACHER)]
        for s in range(1, k + 1):
            if t.role_of_slot[s] not in zeta:
                assert indeg[s] == max(len(zeta), 1)
    else:
        assert t.edges == ()
    assert build_topology(kind, roles, ONTO) == t
