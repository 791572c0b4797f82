"""Learned-structure introspection: first-step message norms and embedding export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError
from .model import GraphBatch, init_states
from .topology import TopologyCache

VERB_LABEL = "<verb>"


@dataclass
class PropagationMatrix:
    verb: int
    sources: list  # row labels: role ids, or None for the verb node
    roles: list  # column role ids (the frame, in slot order)
    raw: np.ndarray  # mean message norm per (source, destination)
    matrix: np.ndarray  # column-normalized
    n_instances: int
    zero_columns: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)


def propagation_norm_matrix(params, ontology, instances, verb, kind="fc", include_bias=True,
                            cache=None):
    """Average norm of ``W_p h_src + b_p`` at the first step for each edge, column-normalized."""
    pool = [i for i in instances if i.gt_verb == verb]
    if not pool:
        raise ContractError(f"no instances of verb {ontology.verbs[verb]!r} in the dataset")
    cache = cache or TopologyCache(ontology)
    topo = cache.get(kind, verb)
    role_slots = [s for s in range(1, 7) if topo.active_mask[s]]
    roles = [topo.role_of_slot[s] for s in role_slots]
    if not topo.edges:
        return PropagationMatrix(verb, [], roles, np.zeros((0, len(roles))),
                                 np.zeros((0, len(roles))), len(pool),
                                 diagnostics=[f"{topo.kind} topology has no edges"])
    src_slots = ([0] if any(s == 0 for s, _ in topo.edges) else []) + role_slots
    batch = GraphBatch.build(pool, [verb] * len(pool), [topo] * len(pool), params.dtype)
    H = init_states(batch, params).data
    msgs = H @ params["W_p"].data.T
    if include_bias:
        msgs = msgs + params["b_p"].data
    norms = np.sqrt(np.einsum("bsd,bsd->bs", msgs, msgs)).mean(axis=0)  # order-free mean
    raw = np.zeros((len(src_slots), len(role_slots)))
    row = {s: i for i, s in enumerate(src_slots)}
    col = {s: i for i, s in enumerate(role_slots)}
    for s, d in topo.edges:
        if d in col:
            raw[row[s], col[d]] = norms[s]
    sums = raw.sum(axis=0)
    matrix = np.divide(raw, sums, out=np.zeros_like(raw), where=sums > 0)
    zero_cols = [roles[j] for j in range(len(roles)) if sums[j] == 0]
    diags = []
    if zero_cols:
        diags.append(f"{len(zero_cols)} column(s) with zero total message norm left unnormalized")
    sources = [topo.role_of_slot[s] for s in src_slots]
    return PropagationMatrix(verb, sources, roles, raw, matrix, len(pool), zero_cols, diags)


def write_propagation_csv(path, pm, ontology):
    def label(r):
        return VERB_LABEL if r is None else ontology.roles[r]

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source"] + [label(r) for r in pm.roles])
        for r, vals in zip(pm.sources, pm.matrix):
            w.writerow([label(r)] + [f"{x:.10f}" for x in vals])


def export_embeddings(params, ontology, out_dir):
    """Write ``verb_embeddings.csv`` and ``role_embeddings.csv`` (label + D values per row)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for fname, mat, labels in (("verb_embeddings.csv", params["W_v"].data, ontology.verbs),
                               ("role_embeddings.csv", params["W_e"].data, ontology.roles)):
        path = out_dir / fname
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label"] + [f"d{k}" for k in range(mat.shape[0])])
            for j, name in enumerate(labels):
                w.writerow([name] + [repr(float(x)) for x in mat[:, j]])
        paths[fname] = path
    return paths


def read_embeddings(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = [r[0] for r in rows[1:]]
    values = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return labels, values


def cosine_similarity(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))
