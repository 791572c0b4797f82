"""GGNN forward pass over padded 7-slot graphs, plus sequential chain/tree RNNs.

Everything is batched: a :class:`GraphBatch` stacks B instances, each with its
own topology, into arrays with a leading batch axis. Per-instance helpers
(:func:`init_hidden`, :func:`propagate_step`, :func:`forward`,
:func:`forward_sequential`) wrap the batched code for a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericError
from .numerics import ops
from .numerics.tensor import Tensor, resolve_dtype
from .ontology import MAX_ROLES
from .topology import N_SLOTS, Topology, build_topology

NORM_EPS = 1e-12
KEEP_PROB = 0.5
G_KINDS = ("tanh", "relu")

# name -> shape as a function of (D, d_v, d_n, n_verbs, n_roles, n_nouns)
PARAM_SHAPES = {
    "W_iv": lambda D, dv, dn, V, R, N: (D, dv),
    "W_in": lambda D, dv, dn, V, R, N: (D, dn),
    "W_v": lambda D, dv, dn, V, R, N: (D, V),
    "W_e": lambda D, dv, dn, V, R, N: (D, R),
    "W_p": lambda D, dv, dn, V, R, N: (D, D),
    "b_p": lambda D, dv, dn, V, R, N: (D,),
    "W_z": lambda D, dv, dn, V, R, N: (D, D),
    "U_z": lambda D, dv, dn, V, R, N: (D, D),
    "b_z": lambda D, dv, dn, V, R, N: (D,),
    "W_r": lambda D, dv, dn, V, R, N: (D, D),
    "U_r": lambda D, dv, dn, V, R, N: (D, D),
    "b_r": lambda D, dv, dn, V, R, N: (D,),
    "W_h": lambda D, dv, dn, V, R, N: (D, D),
    "U_h": lambda D, dv, dn, V, R, N: (D, D),
    "b_h": lambda D, dv, dn, V, R, N: (D,),
    "W_hv": lambda D, dv, dn, V, R, N: (V, D),
    "b_hv": lambda D, dv, dn, V, R, N: (V,),
    "W_hn": lambda D, dv, dn, V, R, N: (N, D),
    "b_hn": lambda D, dv, dn, V, R, N: (N,),
}
PARAM_NAMES = tuple(PARAM_SHAPES)


class ModelParams:
    """All trainable tensors plus the switches that are fixed once trained."""

    def __init__(self, tensors, hidden, d_v, d_n, n_verbs, n_roles, n_nouns,
                 g_kind="tanh", use_verb_onehot=True):
        if g_kind not in G_KINDS:
            raise ContractError(f"g_kind must be one of {G_KINDS}, got {g_kind!r}")
        self.hidden = hidden
        self.d_v, self.d_n = d_v, d_n
        self.n_verbs, self.n_roles, self.n_nouns = n_verbs, n_roles, n_nouns
        self.g_kind = g_kind
        self.use_verb_onehot = use_verb_onehot
        self.tensors = {}
        for name in PARAM_NAMES:
            self.set(name, tensors[name])

    @classmethod
    def initialize(cls, ontology, d_v, d_n, hidden=1024, g_kind="tanh",
                   use_verb_onehot=True, seed=0, precision="f64"):
        """Glorot-uniform weights, zero biases."""
        dtype = resolve_dtype(precision)
        rng = np.random.default_rng(seed)
        dims = (hidden, d_v, d_n, ontology.n_verbs, ontology.n_roles, ontology.n_nouns)
        arrays = {}
        for name in PARAM_NAMES:
            shape = PARAM_SHAPES[name](*dims)
            if len(shape) == 1:
                arrays[name] = np.zeros(shape, dtype=dtype)
            else:
                s = np.sqrt(6.0 / (shape[0] + shape[1]))
                arrays[name] = rng.uniform(-s, s, size=shape).astype(dtype)
        return cls(arrays, hidden, d_v, d_n, ontology.n_verbs, ontology.n_roles,
                   ontology.n_nouns, g_kind, use_verb_onehot)

    @property
    def dims(self):
        return (self.hidden, self.d_v, self.d_n, self.n_verbs, self.n_roles, self.n_nouns)

    @property
    def dtype(self):
        return self.tensors["W_p"].data.dtype

    def __getitem__(self, name):
        return self.tensors[name]

    def set(self, name, value):
        arr = np.array(value.data if isinstance(value, Tensor) else value)
        want = PARAM_SHAPES[name](*self.dims)
        if arr.shape != want:
            raise DimensionError(f"{name}: expected shape {want}, got {arr.shape}")
        self.tensors[name] = Tensor(arr, requires_grad=True, name=name)

    def arrays(self):
        return {k: t.data for k, t in self.tensors.items()}

    def copy(self):
        return ModelParams(self.arrays(), *self.dims, self.g_kind, self.use_verb_onehot)

    def astype(self, precision):
        dtype = resolve_dtype(precision)
        return ModelParams({k: v.astype(dtype) for k, v in self.arrays().items()}, *self.dims,
                           self.g_kind, self.use_verb_onehot)

    def n_parameters(self):
        return sum(t.data.size for t in self.tensors.values())


@dataclass
class GraphBatch:
    """B padded graphs stacked along a leading axis."""

    phi_v: np.ndarray  # (B, d_v)
    phi_n: np.ndarray  # (B, d_n)
    verbs: np.ndarray  # (B,)
    role_ids: np.ndarray  # (B, 6); 0 in inactive slots
    mask: np.ndarray  # (B, 7)
    adj: np.ndarray  # (B, 7, 7), adj[b, dst, src]
    depth: np.ndarray  # (B, 7)
    topologies: list = field(default_factory=list)

    def __len__(self):
        return len(self.verbs)

    @classmethod
    def build(cls, instances, verbs, topologies, dtype=np.float64):
        B = len(instances)
        if not (B == len(verbs) == len(topologies)) or B == 0:
            raise ContractError("GraphBatch needs equally many (>0) instances, verbs and topologies")
        role_ids = np.zeros((B, MAX_ROLES), dtype=np.intp)
        mask = np.zeros((B, N_SLOTS), dtype=dtype)
        adj = np.zeros((B, N_SLOTS, N_SLOTS), dtype=dtype)
        depth = np.zeros((B, N_SLOTS), dtype=np.intp)
        for b, topo in enumerate(topologies):
            role_ids[b] = [r if r is not None else 0 for r in topo.role_of_slot[1:]]
            mask[b] = topo.active_mask
            adj[b] = topo.adjacency(dtype)
            depth[b] = topo.depths()
        phi_v = np.stack([i.phi_v for i in instances]).astype(dtype)
        phi_n = np.stack([i.phi_n for i in instances]).astype(dtype)
        return cls(phi_v, phi_n, np.asarray(verbs, dtype=np.intp), role_ids, mask, adj, depth,
                   list(topologies))


def _g(x, kind):
    return ops.tanh(x) if kind == "tanh" else ops.relu(x)


def _check_dims(batch, params):
    if batch.phi_v.shape[1] != params.d_v or batch.phi_n.shape[1] != params.d_n:
        raise DimensionError(f"features ({batch.phi_v.shape[1]}, {batch.phi_n.shape[1]}) do not "
                             f"match the model ({params.d_v}, {params.d_n})")


def init_verb_state(batch, params):
    """Normalized verb-node state, shape (B, D)."""
    _check_dims(batch, params)
    pre = ops.matmul_t(batch.phi_v, params["W_iv"])
    return ops.normalize(_g(pre, params.g_kind), NORM_EPS)


def init_role_inputs(batch, params):
    """Normalized role-node states (B, 6, D), zero in inactive slots."""
    _check_dims(batch, params)
    u = ops.expand_dims(ops.matmul_t(batch.phi_n, params["W_in"]), 1)
    pre = ops.mul(u, ops.gather_cols(params["W_e"], batch.role_ids))
    if params.use_verb_onehot:
        pre = ops.mul(pre, ops.expand_dims(ops.gather_cols(params["W_v"], batch.verbs), 1))
    h = ops.normalize(_g(pre, params.g_kind), NORM_EPS)
    return ops.mul(h, batch.mask[:, 1:, None])


def init_states(batch, params):
    """Initial hidden states for all 7 slots, shape (B, 7, D)."""
    hv = ops.expand_dims(init_verb_state(batch, params), 1)
    return ops.concat([hv, init_role_inputs(batch, params)], axis=1)


def gru_cell(x, h, params):
    """Gated update of state ``h`` given aggregated input ``x`` (same shapes)."""
    z = ops.sigmoid(ops.add(ops.add(ops.matmul_t(x, params["W_z"]),
                                    ops.matmul_t(h, params["U_z"])), params["b_z"]))
    r = ops.sigmoid(ops.add(ops.add(ops.matmul_t(x, params["W_r"]),
                                    ops.matmul_t(h, params["U_r"])), params["b_r"]))
    cand = ops.tanh(ops.add(ops.add(ops.matmul_t(x, params["W_h"]),
                                    ops.matmul_t(ops.mul(r, h), params["U_h"])), params["b_h"]))
    return ops.gru_combine(z, h, cand)


def messages(H, params):
    """Per-source message ``W_p h + b_p`` for every slot, shape (B, 7, D)."""
    return ops.affine(H, params["W_p"], params["b_p"])


def propagate(H, batch, params):
    """One simultaneous update of every slot from the previous states."""
    x = ops.aggregate(messages(H, params), batch.adj)
    out = ops.mul(gru_cell(x, H, params), batch.mask[:, :, None])
    if not np.isfinite(out.data).all():
        bad = np.argwhere(~np.isfinite(out.data))[0]
        raise NumericError(f"non-finite hidden state at batch {bad[0]}, slot {bad[1]}")
    return out


def verb_state(batch, params, steps, sequential=False):
    """Verb-slot state after ``steps`` updates, computed without the role slots.

    The verb slot never has incoming edges, so its trajectory depends on the
    image only; this is the path used to rank verbs at inference time.
    """
    h = init_verb_state(batch, params)
    if sequential:
        return h
    zero = np.zeros(h.shape, dtype=h.dtype)
    for _ in range(steps):
        h = gru_cell(zero, h, params)
    return h


def verb_log_probs(batch, params, steps, sequential=False):
    h = verb_state(batch, params, steps, sequential)
    return ops.log_softmax(ops.affine(h, params["W_hv"], params["b_hv"]))


def _dropout(H, rng, dropout_verb):
    keep = (rng.random(H.shape) < KEEP_PROB).astype(H.dtype) / KEEP_PROB
    if not dropout_verb:
        keep[:, 0, :] = 1
    return ops.mul(H, keep)


def readout(H, params, train_mode=False, rng=None, dropout_verb=True):
    """Verb log-probs (B, V) and role noun log-probs (B, 6, N) from final states."""
    if train_mode:
        if rng is None:
            raise ContractError("train_mode needs an rng for dropout")
        H = _dropout(H, rng, dropout_verb)
    hv = ops.take(H, (slice(None), 0))
    hr = ops.take(H, (slice(None), slice(1, None)))
    logp_v = ops.log_softmax(ops.affine(hv, params["W_hv"], params["b_hv"]))
    logp_n = ops.log_softmax(ops.affine(hr, params["W_hn"], params["b_hn"]))
    return logp_v, logp_n


def run_ggnn(batch, params, steps):
    if steps < 0:
        raise ContractError(f"step count must be >= 0, got {steps}")
    H = init_states(batch, params)
    for _ in range(steps):
        H = propagate(H, batch, params)
    return H


def run_sequential(batch, params):
    """Chain/tree RNN: each role slot is updated once, after all its parents.

    A slot's previous state is the mean of its parents' states and its input
    is its own initialization vector.
    """
    for topo in batch.topologies:
        if topo.kind not in ("chain", "tree"):
            raise ContractError(f"sequential models need chain or tree topologies, got {topo.kind}")
    hv = ops.expand_dims(init_verb_state(batch, params), 1)
    xr = init_role_inputs(batch, params)
    dtype = batch.adj.dtype
    zeros_r = np.zeros((len(batch), MAX_ROLES, params.hidden), dtype=dtype)
    S = ops.concat([hv, zeros_r], axis=1)
    X = ops.concat([np.zeros((len(batch), 1, params.hidden), dtype=dtype), xr], axis=1)
    indeg = batch.adj.sum(axis=2, keepdims=True)
    parents = np.divide(batch.adj, indeg, out=np.zeros_like(batch.adj), where=indeg > 0)
    for d in range(1, int(batch.depth.max()) + 1):
        sel = ((batch.depth == d) * batch.mask).astype(dtype)[:, :, None]
        if not sel.any():
            continue
        new = gru_cell(X, ops.aggregate(S, parents), params)
        S = ops.add(ops.mul(S, 1 - sel), ops.mul(new, sel))
    return S


def forward_batch(batch, params, steps, train_mode=False, rng=None, sequential=False,
                  dropout_verb=True):
    """Log-probabilities ``(logp_v (B, V), logp_n (B, 6, N))`` as tape-tracked Tensors."""
    H = run_sequential(batch, params) if sequential else run_ggnn(batch, params, steps)
    return readout(H, params, train_mode, rng, dropout_verb)


# ---------------------------------------------------------------- per-instance API

@dataclass
class HiddenStates:
    h: np.ndarray  # (7, D)
    t: int = 0
    degenerate: tuple = ()  # active slots whose pre-normalization vector was ~0


@dataclass
class Prediction:
    p_v: np.ndarray
    p_roles: dict  # role id -> noun distribution


def _as_topology(topology_or_roles, ontology=None):
    if isinstance(topology_or_roles, Topology):
        return topology_or_roles
    if ontology is None:
        # the fully connected layout places roles in the given order
        roles = list(topology_or_roles)
        if not 1 <= len(roles) <= MAX_ROLES:
            raise ContractError(f"a frame has 1 to {MAX_ROLES} roles, got {len(roles)}")
        slots = [None] + roles + [None] * (MAX_ROLES - len(roles))
        return Topology("fc", tuple(slots), (), tuple(i <= len(roles) for i in range(N_SLOTS)))
    return build_topology("fc", topology_or_roles, ontology)


def _single(instance, verb, topology, params):
    return GraphBatch.build([instance], [verb], [topology], params.dtype)


def init_hidden(instance, verb, topology_or_roles, params):
    topo = _as_topology(topology_or_roles)
    batch = _single(instance, verb, topo, params)
    H = init_states(batch, params).data[0]
    hv_pre = _g(ops.matmul_t(batch.phi_v, params["W_iv"]), params.g_kind).data[0]
    degenerate = []
    if np.linalg.norm(hv_pre) <= NORM_EPS:
        degenerate.append(0)
    for s in range(1, N_SLOTS):
        if topo.active_mask[s] and np.linalg.norm(H[s]) <= NORM_EPS:
            degenerate.append(s)
    return HiddenStates(np.array(H), 0, tuple(degenerate))


def propagate_step(states, topology, params):
    adj = topology.adjacency(params.dtype)[None]
    batch = GraphBatch(np.zeros((1, params.d_v)), np.zeros((1, params.d_n)), np.zeros(1, int),
                       np.zeros((1, MAX_ROLES), int), topology.mask(params.dtype)[None], adj,
                       np.asarray(topology.depths())[None], [topology])
    H = Tensor(states.h[None].astype(params.dtype))
    out = propagate(H, batch, params).data[0]
    return HiddenStates(np.array(out), states.t + 1, states.degenerate)


def _to_prediction(logp_v, logp_n, topology):
    p_v = np.exp(logp_v.data[0])
    roles = {}
    for s in range(1, N_SLOTS):
        r = topology.role_of_slot[s]
        if r is not None:
            roles[r] = np.exp(logp_n.data[0, s - 1])
    return Prediction(p_v, roles)


def forward(instance, verb, topology, params, steps, train_mode=False, rng=None):
    batch = _single(instance, verb, topology, params)
    lv, ln = forward_batch(batch, params, steps, train_mode, rng)
    return _to_prediction(lv, ln, topology)


def forward_sequential(instance, verb, topology, params, train_mode=False, rng=None, frame=None):
    """Chain or tree RNN outputs; ``frame`` (the verb's role list) is checked when given."""
    if frame is not None and sorted(frame) != sorted(topology.roles):
        raise ContractError(f"order {topology.roles} does not cover the frame {list(frame)}")
    batch = _single(instance, verb, topology, params)
    lv, ln = forward_batch(batch, params, 0, train_mode, rng, sequential=True)
    return _to_prediction(lv, ln, topology)

