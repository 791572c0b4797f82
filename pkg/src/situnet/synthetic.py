"""Desk-scale synthetic situation datasets.

Each role-noun pair is encoded into the noun feature vector by binding: the
role's random sign key multiplied elementwise with the noun's random sign
code. Summing the bound pairs gives a linear image of the one-hot
(role, noun) assignment, which the model can unbind with its role embedding.

Planted correlation: in every frame the first role is the anchor. Each other
role is, with probability ``correlation``, a switched role: its features
show some noun m, but its true noun is m when the anchor's noun lies outside
a fixed half of the vocabulary and a fixed permutation of m when it lies
inside. The role's own features leave it a coin flip; the anchor's noun
settles it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .ontology import AGENT, MAX_ROLES, NULL_NOUN, PLACE, Instance, Ontology

ALIAS_ROLE = "teacher"


@dataclass(frozen=True)
class SyntheticConfig:
    n_verbs: int = 8
    n_roles: int = 10
    n_nouns: int = 20
    min_roles: int = 2
    max_roles: int = 6
    n_train: int = 200
    n_dev: int = 50
    d_v: int = 32
    d_n: int = 256
    correlation: float = 0.0
    noise: float = 0.0
    synonym_rate: float = 0.0
    null_rate: float = 0.0
    n_clusters: int = 2

    def check(self):
        for name in ("n_verbs", "n_roles", "n_nouns", "min_roles", "max_roles", "d_v", "d_n"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_train < 0 or self.n_dev < 0:
            raise ConfigError("split sizes must be >= 0")
        if not 0 <= self.correlation <= 1:
            raise ConfigError("correlation must lie in [0, 1]")
        for name in ("noise", "synonym_rate", "null_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.synonym_rate > 1 or self.null_rate > 1:
            raise ConfigError("rates must lie in [0, 1]")
        if self.min_roles > self.max_roles:
            raise ConfigError("min_roles exceeds max_roles")
        if self.max_roles > MAX_ROLES:
            raise ConfigError(f"max_roles {self.max_roles} exceeds the {MAX_ROLES}-role bound")
        # an alias role never shares a frame with agent, so it does not add capacity
        usable = self.n_roles - (1 if self.n_roles >= 4 else 0)
        if self.max_roles > usable:
            raise ConfigError(f"max_roles {self.max_roles} needs more distinct roles "
                              f"than the {self.n_roles} available")

    def to_dict(self):
        return asdict(self)


def _role_names(n):
    names = [AGENT, PLACE]
    if n >= 4:
        names.append(ALIAS_ROLE)
    names += [f"role{k:02d}" for k in range(len(names), n)]
    return names[:n]


def _build_ontology(cfg, rng):
    roles = _role_names(cfg.n_roles)
    ridx = {r: i for i, r in enumerate(roles)}
    has_alias = ALIAS_ROLE in ridx
    generic = [i for i, r in enumerate(roles) if r not in (AGENT, PLACE, ALIAS_ROLE)]
    verbs = [f"verb{v:02d}" for v in range(cfg.n_verbs)]
    place = ridx.get(PLACE)
    frames = []
    for v in range(cfg.n_verbs):
        k = int(rng.integers(cfg.min_roles, cfg.max_roles + 1))
        others = generic + ([place] if place is not None else [])
        frame = []
        if k > len(others) or rng.random() < 0.85:
            use_alias = has_alias and rng.random() < 0.2
            frame.append(ridx[ALIAS_ROLE] if use_alias else ridx[AGENT])
        if place is not None and len(frame) < k and rng.random() < 0.6:
            frame.append(place)
        rest = [r for r in others if r not in frame]
        picks = rng.choice(len(rest), size=k - len(frame), replace=False)
        frame += [rest[int(i)] for i in picks]
        frames.append(tuple(frame[int(i)] for i in rng.permutation(len(frame))))
    nouns = [NULL_NOUN] + [f"noun{n:02d}" for n in range(cfg.n_nouns)]
    aliases = {ridx[ALIAS_ROLE]: ridx[AGENT]} if has_alias else {}
    clusters = {v: f"cluster{v % cfg.n_clusters}" for v in range(cfg.n_verbs)} \
        if cfg.n_clusters > 0 else {}
    return Ontology(tuple(verbs), tuple(roles), tuple(nouns), tuple(frames), aliases, clusters)


def _synsets(cfg, rng):
    """Group real nouns into synonym sets of size one or two; the null noun stays alone."""
    n = cfg.n_nouns
    groups = {0: (0,)}
    order = [int(i) + 1 for i in rng.permutation(n)]
    i = 0
    while i < len(order):
        if i + 1 < len(order) and rng.random() < cfg.synonym_rate:
            pair = (order[i], order[i + 1])
            groups[pair[0]] = groups[pair[1]] = tuple(sorted(pair))
            i += 2
        else:
            groups[order[i]] = (order[i],)
            i += 1
    return groups


class _Codebook:
    def __init__(self, ontology, cfg, rng):
        self.verb_codes = rng.choice([-1.0, 1.0], size=(ontology.n_verbs, cfg.d_v))
        self.role_keys = rng.choice([-1.0, 1.0], size=(ontology.n_roles, cfg.d_n))
        self.noun_codes = rng.choice([-1.0, 1.0], size=(ontology.n_nouns, cfg.d_n))
        # fixed permutation of the real nouns; the null noun maps to itself
        self.partner = np.concatenate([[0], 1 + rng.permutation(cfg.n_nouns)])
        # anchor nouns that flip switched roles onto their partner
        self.flips = np.zeros(ontology.n_nouns, dtype=bool)
        self.flips[1 + rng.permutation(cfg.n_nouns)[: cfg.n_nouns // 2]] = True


def _make_instance(iid, ontology, cfg, book, synsets, rng):
    v = int(rng.integers(ontology.n_verbs))
    frame = ontology.frames[v]
    truth = {}
    shown = {}
    for pos, r in enumerate(frame):
        n = 0 if rng.random() < cfg.null_rate else int(rng.integers(1, cfg.n_nouns + 1))
        shown[r] = n
        truth[r] = n
        if pos > 0 and rng.random() < cfg.correlation and book.flips[truth[frame[0]]]:
            truth[r] = int(book.partner[n])
    phi_v = book.verb_codes[v] + cfg.noise * rng.standard_normal(cfg.d_v)
    phi_n = np.zeros(cfg.d_n)
    for r in frame:
        phi_n += book.role_keys[r] * book.noun_codes[shown[r]]
    phi_n += cfg.noise * rng.standard_normal(cfg.d_n)
    annotations = []
    for _ in range(3):
        ann = {}
        for r in sorted(frame):
            group = synsets[truth[r]]
            ann[r] = group[int(rng.integers(len(group)))]
        annotations.append(ann)
    return Instance(iid, phi_v, phi_n, v, tuple(annotations))


def generate_synthetic(config=None, seed=0):
    """Return ``(ontology, train, dev)``; identical for identical (config, seed)."""
    cfg = config or SyntheticConfig()
    cfg.check()
    rng = np.random.default_rng(seed)
    ontology = _build_ontology(cfg, rng)
    synsets = _synsets(cfg, rng)
    book = _Codebook(ontology, cfg, rng)
    train = [_make_instance(f"train-{i:05d}", ontology, cfg, book, synsets, rng)
             for i in range(cfg.n_train)]
    dev = [_make_instance(f"dev-{i:05d}", ontology, cfg, book, synsets, rng)
           for i in range(cfg.n_dev)]
    return ontology, train, dev
