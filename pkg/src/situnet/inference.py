"""Greedy and beam decoding of situations from a trained model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .model import GraphBatch, forward_batch, verb_log_probs
from .topology import TopologyCache

SCORE_MODES = ("mean", "sum")
TOP_K = 5


@dataclass(frozen=True)
class SituationPrediction:
    verb: int
    assignments: tuple  # ((role, noun), ...) in slot order
    verb_logprob: float
    role_logprobs: tuple  # log-prob of each assigned noun, same order
    total_score: float

    def as_dict(self):
        return dict(self.assignments)


@dataclass
class BeamResult:
    best: SituationPrediction
    candidates: list = field(default_factory=list)  # all B candidates, in verb-rank order


def _cache(ontology, cache):
    return cache if cache is not None else TopologyCache(ontology)


def _verb_batch(instances, cache, kind, dtype):
    # the verb path only reads phi_v; any topology fills the batch
    topo = cache.get(kind, 0)
    return GraphBatch.build(instances, [0] * len(instances), [topo] * len(instances), dtype)


def verb_logprob_matrix(instances, params, kind, steps, cache, sequential=False):
    batch = _verb_batch(instances, cache, kind, params.dtype)
    return np.array(verb_log_probs(batch, params, steps, sequential).data)


def top_k_from_logprobs(logp, k):
    if not 1 <= k <= logp.shape[-1]:
        raise ContractError(f"k must lie in [1, {logp.shape[-1]}], got {k}")
    return [int(v) for v in np.argsort(-logp, kind="stable")[:k]]


def top_k_verbs(instance, params, k, ontology, kind="fc", steps=4, cache=None, sequential=False):
    """Verbs by descending probability; ties go to the lower index."""
    cache = _cache(ontology, cache)
    logp = verb_logprob_matrix([instance], params, kind, steps, cache, sequential)[0]
    return top_k_from_logprobs(logp, k)


def decode_roles(instances, verbs, params, kind, steps, cache, sequential=False):
    """For each (instance, verb) pair: argmax noun per role and its log-prob."""
    topos = [cache.get(kind, v) for v in verbs]
    batch = GraphBatch.build(instances, verbs, topos, params.dtype)
    _, logp_n = forward_batch(batch, params, steps, sequential=sequential)
    ln = logp_n.data
    out = []
    for b, topo in enumerate(topos):
        pairs, lps = [], []
        for s in range(1, 7):
            r = topo.role_of_slot[s]
            if r is None:
                continue
            row = ln[b, s - 1]
            n = int(np.argmax(row))
            pairs.append((r, n))
            lps.append(float(row[n]))
        out.append((tuple(pairs), tuple(lps)))
    return out


def _score(verb_lp, role_lps, mode):
    if mode == "mean":
        return verb_lp + float(np.mean(role_lps))
    if mode == "sum":
        return verb_lp + float(np.sum(role_lps))
    raise ContractError(f"score mode must be one of {SCORE_MODES}")


def _situation(verb, verb_lp, decoded, mode):
    pairs, lps = decoded
    return SituationPrediction(int(verb), pairs, float(verb_lp), lps, _score(verb_lp, lps, mode))


def _select(cands):
    # highest score; ties to the lower verb index
    return max(cands, key=lambda c: (c.total_score, -c.verb))


def predict_greedy(instance, params, ontology, kind="fc", steps=4, cache=None, sequential=False,
                   score_mode="mean"):
    cache = _cache(ontology, cache)
    logp = verb_logprob_matrix([instance], params, kind, steps, cache, sequential)[0]
    v = int(np.argmax(logp))
    decoded = decode_roles([instance], [v], params, kind, steps, cache, sequential)[0]
    return _situation(v, logp[v], decoded, score_mode)


def predict_beam(instance, params, ontology, kind="fc", steps=4, beam=10, cache=None,
                 sequential=False, score_mode="mean"):
    """Realize the frames of the top-``beam`` verbs and keep the best-scoring situation.

    Each candidate is decoded on its own so its score does not depend on the
    beam width.
    """
    if beam < 1:
        raise ContractError(f"beam width must be >= 1, got {beam}")
    cache = _cache(ontology, cache)
    logp = verb_logprob_matrix([instance], params, kind, steps, cache, sequential)[0]
    verbs = top_k_from_logprobs(logp, min(beam, len(logp)))
    cands = []
    for v in verbs:
        decoded = decode_roles([instance], [v], params, kind, steps, cache, sequential)[0]
        cands.append(_situation(v, logp[v], decoded, score_mode))
    return BeamResult(_select(cands), cands)


@dataclass
class PredictionRecord:
    """Everything the scorer needs for one instance."""

    id: str
    gt_verb: int | None
    top_verbs: list  # [(verb, verb_logprob, score)] for the beam candidates
    top5: list  # verb ids, best first
    situation: SituationPrediction
    gt_decode: tuple | None  # (assignments, role_logprobs) under the ground-truth verb


def predict_many(instances, params, ontology, kind="fc", steps=4, beam=10, cache=None,
                 sequential=False, score_mode="mean", chunk=512, with_gt=True):
    """Batched beam decoding (``beam=1`` is greedy) plus the ground-truth-verb decode."""
    if beam < 1:
        raise ContractError(f"beam width must be >= 1, got {beam}")
    cache = _cache(ontology, cache)
    records = []
    V = ontology.n_verbs
    k5 = min(TOP_K, V)
    width = min(beam, V)
    for start in range(0, len(instances), chunk):
        part = instances[start:start + chunk]
        logp = verb_logprob_matrix(part, params, kind, steps, cache, sequential)
        ranked = [top_k_from_logprobs(row, max(width, k5)) for row in logp]
        pairs_inst, pairs_verb = [], []
        for inst, r in zip(part, ranked):
            for v in r[:width]:
                pairs_inst.append(inst)
                pairs_verb.append(v)
            if with_gt:
                pairs_inst.append(inst)
                pairs_verb.append(inst.gt_verb)
        decoded = []
        for s in range(0, len(pairs_inst), chunk):
            decoded += decode_roles(pairs_inst[s:s + chunk], pairs_verb[s:s + chunk], params,
                                    kind, steps, cache, sequential)
        pos = 0
        for i, (inst, r) in enumerate(zip(part, ranked)):
            cands = []
            for v in r[:width]:
                cands.append(_situation(v, logp[i, v], decoded[pos], score_mode))
                pos += 1
            gt = None
            if with_gt:
                gt = decoded[pos]
                pos += 1
            records.append(PredictionRecord(
                inst.id, inst.gt_verb if with_gt else None,
                [(c.verb, c.verb_logprob, c.total_score) for c in cands],
                r[:k5], _select(cands), gt))
    return records


# ---------------------------------------------------------------- JSON-lines dump

def _noun_name(ontology, n):
    return None if n == 0 else ontology.nouns[n]


def record_to_json(rec, ontology, score_mode="mean"):
    s = rec.situation
    out = {
        "id": rec.id,
        "gt_verb": None if rec.gt_verb is None else ontology.verbs[rec.gt_verb],
        "score_mode": score_mode,
        "top_verbs": [{"verb": ontology.verbs[v], "verb_logprob": lp, "score": sc}
                      for v, lp, sc in rec.top_verbs],
        "top5": [ontology.verbs[v] for v in rec.top5],
        "situation": {
            "verb": ontology.verbs[s.verb],
            "assignments": {ontology.roles[r]: _noun_name(ontology, n) for r, n in s.assignments},
            "verb_logprob": s.verb_logprob,
            "role_logprobs": {ontology.roles[r]: lp
                              for (r, _), lp in zip(s.assignments, s.role_logprobs)},
            "total_score": s.total_score,
        },
    }
    if rec.gt_decode is not None:
        pairs, lps = rec.gt_decode
        out["gt_decode"] = {
            "assignments": {ontology.roles[r]: _noun_name(ontology, n) for r, n in pairs},
            "role_logprobs": {ontology.roles[r]: lp for (r, _), lp in zip(pairs, lps)},
        }
    return out


def _noun_id(ontology, name):
    return 0 if name is None else ontology.noun_index[name]


def record_from_json(doc, ontology):
    try:
        s = doc["situation"]
        roles = [ontology.role_index[r] for r in s["assignments"]]
        pairs = tuple((r, _noun_id(ontology, n)) for r, n in zip(roles, s["assignments"].values()))
        lps = tuple(float(s["role_logprobs"][ontology.roles[r]]) for r in roles)
        verb = ontology.verb_index[s["verb"]]
        sit = SituationPrediction(verb, pairs, float(s["verb_logprob"]), lps,
                                  float(s["total_score"]))
        gt = None
        if doc.get("gt_decode") is not None:
            g = doc["gt_decode"]
            groles = [ontology.role_index[r] for r in g["assignments"]]
            gpairs = tuple((r, _noun_id(ontology, n))
                           for r, n in zip(groles, g["assignments"].values()))
            glps = tuple(float(g["role_logprobs"][ontology.roles[r]]) for r in groles)
            gt = (gpairs, glps)
        return PredictionRecord(
            doc["id"],
            None if doc.get("gt_verb") is None else ontology.verb_index[doc["gt_verb"]],
            [(ontology.verb_index[t["verb"]], float(t["verb_logprob"]), float(t["score"]))
             for t in doc["top_verbs"]],
            [ontology.verb_index[v] for v in doc["top5"]],
            sit, gt)
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed prediction record {doc.get('id', '?')!r}: {exc}") from None


def write_dump(path, records, ontology, score_mode="mean"):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec, ontology, score_mode), ensure_ascii=False))
            fh.write("\n")


def read_dump(path, ontology):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(record_from_json(json.loads(line), ontology))
    return records
