"""Verbs, roles, nouns, frames, and the JSON dataset container."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError

MAX_ROLES = 6
NULL_NOUN = "∅"
AGENT = "agent"
PLACE = "place"


@dataclass(frozen=True)
class Ontology:
    verbs: tuple
    roles: tuple
    nouns: tuple  # nouns[0] is NULL_NOUN
    frames: tuple  # frames[verb_id] -> tuple of role ids
    agent_aliases: dict = field(default_factory=dict)  # role id -> role id
    verb_clusters: dict = field(default_factory=dict)  # verb id -> cluster name

    def __post_init__(self):
        object.__setattr__(self, "verb_index", {v: i for i, v in enumerate(self.verbs)})
        object.__setattr__(self, "role_index", {r: i for i, r in enumerate(self.roles)})
        object.__setattr__(self, "noun_index", {n: i for i, n in enumerate(self.nouns)})
        freq = [0] * len(self.roles)
        for frame in self.frames:
            for r in frame:
                freq[r] += 1
        object.__setattr__(self, "role_frequency", tuple(freq))
        self._validate()

    def _validate(self):
        if not self.nouns or self.nouns[0] != NULL_NOUN:
            raise DatasetError(f"nouns[0] must be the reserved {NULL_NOUN!r} entry")
        if NULL_NOUN in self.verbs or NULL_NOUN in self.roles:
            raise DatasetError(f"{NULL_NOUN!r} is reserved for nouns")
        for name, items in (("verbs", self.verbs), ("roles", self.roles), ("nouns", self.nouns)):
            if len(set(items)) != len(items):
                raise DatasetError(f"duplicate names in {name}")
        if len(self.frames) != len(self.verbs):
            raise DatasetError(f"frames: expected one frame per verb ({len(self.verbs)}), "
                               f"got {len(self.frames)}")
        for v, frame in enumerate(self.frames):
            where = f"frames[{self.verbs[v]!r}]"
            if not 1 <= len(frame) <= MAX_ROLES:
                raise DatasetError(f"{where}: {len(frame)} roles; a frame has 1 to "
                                   f"{MAX_ROLES} roles (maximum of {MAX_ROLES})")
            if len(set(frame)) != len(frame):
                raise DatasetError(f"{where}: duplicate roles")
        for src, dst in self.agent_aliases.items():
            if src == dst:
                raise DatasetError(f"agent_aliases: role {self.roles[src]!r} aliased to itself")
            for v, frame in enumerate(self.frames):
                if src in frame and dst in frame:
                    raise DatasetError(
                        f"agent_aliases: frame of {self.verbs[v]!r} has both "
                        f"{self.roles[src]!r} and its alias target {self.roles[dst]!r}")

    @property
    def n_verbs(self):
        return len(self.verbs)

    @property
    def n_roles(self):
        return len(self.roles)

    @property
    def n_nouns(self):
        """Noun classes including the null noun."""
        return len(self.nouns)

    def role_id(self, name):
        return self.role_index.get(name)

    def digest(self):
        """Stable hash used to tie checkpoints to an ontology."""
        payload = json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_json(self):
        return {
            "verbs": list(self.verbs),
            "roles": list(self.roles),
            "nouns": list(self.nouns[1:]),
            "frames": {self.verbs[v]: [self.roles[r] for r in f] for v, f in enumerate(self.frames)},
            "agent_aliases": {self.roles[s]: self.roles[d] for s, d in self.agent_aliases.items()},
            "verb_clusters": {self.verbs[v]: c for v, c in self.verb_clusters.items()},
        }


@dataclass(frozen=True, eq=False)
class Instance:
    id: str
    phi_v: np.ndarray
    phi_n: np.ndarray
    gt_verb: int
    annotations: tuple  # three dicts role id -> noun id

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.id == other.id and self.gt_verb == other.gt_verb
                and self.annotations == other.annotations
                and np.array_equal(self.phi_v, other.phi_v)
                and np.array_equal(self.phi_n, other.phi_n))

    __hash__ = None


def canonical_agent(role, ontology):
    """Alias target of ``role`` if it has one, else ``role`` itself."""
    return ontology.agent_aliases.get(role, role)


def chain_order(roles, ontology):
    """Order a frame's roles for sequential structures.

    place first, then the agent-like role, then the rest by descending
    frame frequency (ties by role id). The verb is not part of the list.
    """
    roles = list(roles)
    place = ontology.role_id(PLACE)
    agent = ontology.role_id(AGENT)
    head = []
    if place is not None and place in roles:
        head.append(place)
    if agent is not None:
        for r in roles:
            if r not in head and canonical_agent(r, ontology) == agent:
                head.append(r)
                break
    rest = sorted((r for r in roles if r not in head),
                  key=lambda r: (-ontology.role_frequency[r], r))
    return head + rest


def _require(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    return obj[key]


def _lookup(index, name, kind, where):
    try:
        return index[name]
    except (KeyError, TypeError):
        raise DatasetError(f"{where}: unknown {kind} {name!r}") from None


def ontology_from_json(doc, where="<dataset>"):
    verbs = list(_require(doc, "verbs", where))
    roles = list(_require(doc, "roles", where))
    nouns = list(_require(doc, "nouns", where))
    if nouns and nouns[0] == NULL_NOUN:
        nouns = nouns[1:]
    nouns = [NULL_NOUN] + nouns
    vidx = {v: i for i, v in enumerate(verbs)}
    ridx = {r: i for i, r in enumerate(roles)}
    frames_doc = _require(doc, "frames", where)
    frames = []
    for v in verbs:
        f = _require(frames_doc, v, f"{where}.frames")
        frames.append(tuple(_lookup(ridx, r, "role", f"{where}.frames[{v!r}]") for r in f))
    aliases = {}
    for s, d in (doc.get("agent_aliases") or {}).items():
        aw = f"{where}.agent_aliases"
        aliases[_lookup(ridx, s, "role", aw)] = _lookup(ridx, d, "role", aw)
    clusters = {}
    for v, c in (doc.get("verb_clusters") or {}).items():
        clusters[_lookup(vidx, v, "verb", f"{where}.verb_clusters")] = str(c)
    try:
        return Ontology(tuple(verbs), tuple(roles), tuple(nouns), tuple(frames), aliases, clusters)
    except DatasetError as exc:
        raise DatasetError(f"{where}: {exc}") from None


def _noun_id(ontology, name, where):
    if name is None:
        return 0
    return _lookup(ontology.noun_index, name, "noun", where)


def instance_from_json(rec, ontology, where):
    iid = str(_require(rec, "id", where))
    verb = _lookup(ontology.verb_index, _require(rec, "verb", where), "verb", f"{where}.verb")
    try:
        phi_v = np.asarray(_require(rec, "phi_v", where), dtype=np.float64)
        phi_n = np.asarray(_require(rec, "phi_n", where), dtype=np.float64)
    except (TypeError, ValueError):
        raise DatasetError(f"{where}: features must be number arrays") from None
    if phi_v.ndim != 1 or phi_n.ndim != 1:
        raise DatasetError(f"{where}: features must be flat number arrays")
    if not (np.isfinite(phi_v).all() and np.isfinite(phi_n).all()):
        raise DatasetError(f"{where}: non-finite feature values")
    anns = _require(rec, "annotations", where)
    if not isinstance(anns, list) or len(anns) != 3:
        n = len(anns) if isinstance(anns, list) else "non-list"
        raise DatasetError(f"{where}.annotations: expected 3 annotations, got {n}")
    frame = set(ontology.frames[verb])
    parsed = []
    for j, ann in enumerate(anns):
        aw = f"{where}.annotations[{j}]"
        if not isinstance(ann, dict):
            raise DatasetError(f"{aw}: expected an object role -> noun")
        a = {}
        for role_name, noun_name in ann.items():
            r = _lookup(ontology.role_index, role_name, "role", aw)
            a[r] = _noun_id(ontology, noun_name, f"{aw}[{role_name!r}]")
        if set(a) != frame:
            raise DatasetError(f"{aw}: roles {sorted(ann)} do not match the frame of "
                               f"{ontology.verbs[verb]!r} "
                               f"{sorted(ontology.roles[r] for r in frame)}")
        parsed.append(dict(sorted(a.items())))
    return Instance(iid, phi_v, phi_n, verb, tuple(parsed))


def instance_to_json(inst, ontology):
    return {
        "id": inst.id,
        "verb": ontology.verbs[inst.gt_verb],
        "phi_v": [float(x) for x in inst.phi_v],
        "phi_n": [float(x) for x in inst.phi_n],
        "annotations": [
            {ontology.roles[r]: (None if n == 0 else ontology.nouns[n]) for r, n in a.items()}
            for a in inst.annotations
        ],
    }


def load_dataset(path):
    """Parse and validate a dataset container; any violation rejects the whole file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    where = path.name
    ontology = ontology_from_json(doc, where)
    recs = _require(doc, "instances", where)
    instances = [instance_from_json(r, ontology, f"{where}.instances[{i}]")
                 for i, r in enumerate(recs)]
    dims = {(len(i.phi_v), len(i.phi_n)) for i in instances}
    if len(dims) > 1:
        raise DatasetError(f"{where}: inconsistent feature sizes {sorted(dims)}")
    return ontology, instances


def dump_dataset(ontology, instances):
    doc = ontology.to_json()
    doc["instances"] = [instance_to_json(i, ontology) for i in instances]
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def write_dataset(path, ontology, instances):
    Path(path).write_text(dump_dataset(ontology, instances) + "\n", encoding="utf-8")
