import numpy as np
import pytest

from situnet.model import ModelParams
from situnet.ontology import NULL_NOUN, Instance, Ontology


def toy_ontology(n_verbs=5, n_nouns=9):
    """agent/place/teacher plus three generic roles; verb v's frame is fixed."""
    roles = ("agent", "place", "teacher", "tool", "item", "vehicle")
    frames = [(0, 1, 4), (2, 3), (0, 5), (4,), (0, 1, 3, 4, 5)]
    frames = tuple(frames[v % len(frames)] for v in range(n_verbs))
    return Ontology(
        verbs=tuple(f"v{i}" for i in range(n_verbs)),
        roles=roles,
        nouns=(NULL_NOUN,) + tuple(f"n{i}" for i in range(n_nouns)),
        frames=frames,
        agent_aliases={2: 0},
        verb_clusters={v: f"c{v % 2}" for v in range(n_verbs)},
    )


def random_instance(rng, ontology, verb=None, d_v=6, d_n=8, iid="x"):
    v = int(rng.integers(ontology.n_verbs)) if verb is None else verb
    frame = ontology.frames[v]
    anns = tuple({r: int(rng.integers(ontology.n_nouns)) for r in sorted(frame)}
                 for _ in range(3))
    return Instance(iid, rng.standard_normal(d_v), rng.standard_normal(d_n), v, anns)


def random_params(ontology, hidden=16, d_v=6, d_n=8, seed=0, scale=1.0, **kw):
    p = ModelParams.initialize(ontology, d_v, d_n, hidden=hidden, seed=seed, **kw)
    if scale != 1.0:
        rng = np.random.default_rng(seed + 100)
        for name, arr in p.arrays().items():
            p.set(name, arr * scale + (0.1 * rng.standard_normal(arr.shape) if arr.ndim == 1
                                       else 0))
    return p


@pytest.fixture
def onto():
    return toy_ontology()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
