"""Fixed-size 7-slot graphs over one verb node and up to six role nodes."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .ontology import AGENT, MAX_ROLES, PLACE, canonical_agent, chain_order

N_SLOTS = MAX_ROLES + 1
KINDS = ("unaries", "chain", "tree", "fc")
_ALIASES = {"fully_connected": "fc", "fc": "fc", "unaries": "unaries", "chain": "chain",
            "tree": "tree"}


def normalize_kind(kind):
    try:
        return _ALIASES[kind]
    except KeyError:
        raise ContractError(f"unknown topology kind {kind!r}; expected one of {KINDS}") from None


@dataclass(frozen=True)
class Topology:
    kind: str
    role_of_slot: tuple  # length 7; slot 0 (verb) and inactive slots hold None
    edges: tuple  # directed (src_slot, dst_slot) pairs, sorted
    active_mask: tuple  # length 7

    @property
    def n_roles(self):
        return sum(self.active_mask) - 1

    @property
    def roles(self):
        return [r for r in self.role_of_slot[1:] if r is not None]

    def slot_of(self, role):
        return self.role_of_slot.index(role)

    def adjacency(self, dtype=np.float64):
        """``adj[dst, src] = 1`` for each edge."""
        adj = np.zeros((N_SLOTS, N_SLOTS), dtype=dtype)
        for s, d in self.edges:
            adj[d, s] = 1
        return adj

    def mask(self, dtype=np.float64):
        return np.asarray(self.active_mask, dtype=dtype)

    def depths(self):
        """Longest-path depth of each active slot from the verb slot (verb = 0).

        Slots with no incoming edge other than the verb slot sit at depth 1.
        """
        depth = [0] * N_SLOTS
        for _ in range(N_SLOTS):
            for s, d in self.edges:
                depth[d] = max(depth[d], depth[s] + 1)
        for slot in range(1, N_SLOTS):
            if self.active_mask[slot] and depth[slot] == 0:
                depth[slot] = 1
        return depth


def _zeta(roles, ontology):
    agent = ontology.role_id(AGENT)
    place = ontology.role_id(PLACE)
    return [r for r in roles
            if (agent is not None and canonical_agent(r, ontology) == agent)
            or (place is not None and r == place)]


def build_topology(kind, roles, ontology, connect_verb=False):
    """Build the padded graph for a frame.

    ``connect_verb`` adds verb<->role edges to the fully connected kind.
    """
    kind = normalize_kind(kind)
    roles = list(roles)
    if not roles:
        raise ContractError("build_topology: empty role set")
    if len(roles) > MAX_ROLES:
        raise ContractError(f"build_topology: {len(roles)} roles exceeds the {MAX_ROLES}-role bound")
    if len(set(roles)) != len(roles):
        raise ContractError("build_topology: duplicate roles")
    if kind == "chain":
        roles = chain_order(roles, ontology)
    k = len(roles)
    slots = [None] + roles + [None] * (MAX_ROLES - k)
    active = tuple(i <= k for i in range(N_SLOTS))
    role_slots = range(1, k + 1)
    edges = []
    if kind == "fc":
        edges = [(a, b) for a in role_slots for b in role_slots if a != b]
        if connect_verb:
            edges += [(0, a) for a in role_slots] + [(a, 0) for a in role_slots]
    elif kind == "chain":
        edges = [(i, i + 1) for i in range(k)]
    elif kind == "tree":
        zeta = set(_zeta(roles, ontology))
        z_slots = [s for s in role_slots if slots[s] in zeta]
        rest = [s for s in role_slots if slots[s] not in zeta]
        if z_slots:
            edges = [(0, z) for z in z_slots] + [(z, a) for z in z_slots for a in rest]
        else:
            edges = [(0, a) for a in rest]
    return Topology(kind, tuple(slots), tuple(sorted(edges)), active)


def neighbors_in(topology, slot):
    if not (0 <= slot < N_SLOTS) or not topology.active_mask[slot]:
        raise ContractError(f"neighbors_in: slot {slot} is not active")
    return sorted(s for s, d in topology.edges if d == slot)


class TopologyCache:
    """Per-ontology memo of topologies keyed by (kind, verb)."""

    def __init__(self, ontology, connect_verb=False):
        self.ontology = ontology
        self.connect_verb = connect_verb
        self._items = {}
        self._lock = threading.Lock()

    def get(self, kind, verb):
        key = (normalize_kind(kind), int(verb))
        topo = self._items.get(key)
        if topo is None:
            topo = build_topology(key[0], self.ontology.frames[key[1]], self.ontology,
                                  self.connect_verb)
            with self._lock:
                topo = self._items.setdefault(key, topo)
        return topo
