"""Cross-entropy over all three annotations, RMSProp, clipping, and the epoch loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .model import G_KINDS, GraphBatch, ModelParams, forward_batch
from .numerics import ops
from .numerics.tensor import Tape, backward
from .ontology import MAX_ROLES
from .topology import TopologyCache, normalize_kind

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
LOG_FLOOR = math.log(PROB_FLOOR)
RMS_DECAY = 0.9
RMS_EPS = 1e-8
LOG_COLUMNS = ("epoch", "lr", "train_loss", "dev_verb", "dev_value", "dev_value_all")


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr0: float = 1e-3
    decay_start_epoch: int = 10
    decay_factor: float = 0.85
    clip_lo: float = -1.0
    clip_hi: float = 1.0
    steps: int = 4
    topology: str = "fc"
    sequential: bool = False
    epochs: int = 30
    seed: int = 0
    hidden: int = 1024
    g_kind: str = "tanh"
    use_verb_onehot: bool = True
    precision: str = "f64"
    dropout: bool = True
    dropout_verb: bool = True
    verb_loss_once: bool = False
    connect_verb: bool = False
    eval_every: int = 1
    eval_beam: int = 10

    def check(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.decay_factor <= 1:
            raise ConfigError("decay_factor must lie in (0, 1]")
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be > 0")
        if self.clip_lo > self.clip_hi:
            raise ConfigError("clip range is empty (lo > hi)")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.hidden < 1:
            raise ConfigError("hidden must be >= 1")
        if self.g_kind not in G_KINDS:
            raise ConfigError(f"g_kind must be one of {G_KINDS}, got {self.g_kind!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.eval_beam < 1:
            raise ConfigError("eval_beam must be >= 1")
        try:
            self.topology = normalize_kind(self.topology)
        except ContractError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class OptimizerState:
    sq_avg: dict
    lr: float
    epoch: int = 0
    decay: float = RMS_DECAY
    eps: float = RMS_EPS

    @classmethod
    def fresh(cls, params, lr):
        return cls({k: np.zeros_like(v) for k, v in params.arrays().items()}, lr)


@dataclass
class TrainResult:
    params: ModelParams
    opt_state: OptimizerState
    history: list = field(default_factory=list)


def learning_rate(epoch, lr0, decay_start_epoch, decay_factor):
    """Rate used during 1-indexed ``epoch``: decays once per epoch after ``decay_start_epoch``."""
    return lr0 * decay_factor ** max(0, epoch - decay_start_epoch)


def loss(p_v, p_roles, instance, verb_loss_once=False):
    """Per-instance loss from probabilities (``p_roles``: role id -> noun distribution)."""
    if len(instance.annotations) != 3:
        raise ContractError(f"expected 3 annotations, got {len(instance.annotations)}")
    verb_term = -math.log(max(float(p_v[instance.gt_verb]), PROB_FLOOR))
    total = verb_term if verb_loss_once else 0.0
    for ann in instance.annotations:
        if not verb_loss_once:
            total += verb_term
        role_terms = [-math.log(max(float(p_roles[r][n]), PROB_FLOOR)) for r, n in ann.items()]
        total += sum(role_terms) / len(role_terms)
    return total


def loss_weights(batch, instances, n_verbs, n_nouns, verb_loss_once=False, dtype=np.float64):
    """Target weights so that loss = -sum(w * log p), per instance."""
    B = len(instances)
    wv = np.zeros((B, n_verbs), dtype=dtype)
    wn = np.zeros((B, MAX_ROLES, n_nouns), dtype=dtype)
    for b, inst in enumerate(instances):
        if len(inst.annotations) != 3:
            raise ContractError(f"{inst.id}: expected 3 annotations, got {len(inst.annotations)}")
        topo = batch.topologies[b]
        wv[b, inst.gt_verb] = 1.0 if verb_loss_once else 3.0
        for ann in inst.annotations:
            k = len(ann)
            for r, n in ann.items():
                wn[b, topo.slot_of(r) - 1, n] += 1.0 / k
    return wv, wn


def batch_loss(logp_v, logp_n, wv, wn):
    """Mean over the batch of the per-instance loss (taped)."""
    B = wv.shape[0]
    lv = ops.sum(ops.mul(ops.clamp_min(logp_v, LOG_FLOOR), wv))
    ln = ops.sum(ops.mul(ops.clamp_min(logp_n, LOG_FLOOR), wn))
    return ops.scale(ops.add(lv, ln), -1.0 / B)


def clip_gradients(grads, lo=-1.0, hi=1.0):
    if lo > hi:
        raise ConfigError(f"clip range is empty: lo={lo} > hi={hi}")
    if isinstance(grads, dict):
        return {k: np.clip(g, lo, hi) for k, g in grads.items()}
    return np.clip(grads, lo, hi)


def rmsprop_step(params, grads, state):
    """In-place update of ``params`` (ModelParams or dict of arrays); returns ``params``."""
    arrays = params.arrays() if isinstance(params, ModelParams) else params
    for name, g in grads.items():
        theta = arrays[name]
        if g.shape != theta.shape:
            raise ContractError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        v = state.sq_avg[name]
        v = state.decay * v + (1 - state.decay) * g * g
        state.sq_avg[name] = v
        new = theta - state.lr * g / (np.sqrt(v) + state.eps)
        if isinstance(params, ModelParams):
            params.set(name, new.astype(theta.dtype))
        else:
            arrays[name] = new
    return params


def make_batch(instances, cache, kind, dtype):
    verbs = [i.gt_verb for i in instances]
    topos = [cache.get(kind, v) for v in verbs]
    return GraphBatch.build(instances, verbs, topos, dtype)


def compute_loss_and_grads(params, instances, cfg, cache, rng=None, train_mode=False):
    """Batch-mean loss and its gradient for every parameter block."""
    batch = make_batch(instances, cache, cfg.topology, params.dtype)
    wv, wn = loss_weights(batch, instances, params.n_verbs, params.n_nouns, cfg.verb_loss_once,
                          params.dtype)
    with Tape() as tape:
        lv, ln = forward_batch(batch, params, cfg.steps, train_mode, rng, cfg.sequential,
                               cfg.dropout_verb)
        L = batch_loss(lv, ln, wv, wn)
    grads = backward(tape, L, params.tensors)
    return float(L.data), grads


def evaluate_loss(params, instances, cfg, cache):
    batch = make_batch(instances, cache, cfg.topology, params.dtype)
    wv, wn = loss_weights(batch, instances, params.n_verbs, params.n_nouns, cfg.verb_loss_once,
                          params.dtype)
    lv, ln = forward_batch(batch, params, cfg.steps, sequential=cfg.sequential)
    return float(batch_loss(lv, ln, wv, wn).data)


def train(ontology, instances, config=None, dev=None, params=None, log_path=None,
          checkpoint_path=None, on_epoch=None):
    """Run the epoch loop; returns a :class:`TrainResult`.

    ``on_epoch(row)`` is called with each log row. When ``dev`` is given, dev
    metrics are computed every ``eval_every`` epochs.
    """
    from .checkpoint import save_checkpoint
    from .evaluation import evaluate_model

    cfg = config or TrainConfig()
    cfg.check()
    if not instances:
        raise ContractError("train: empty dataset")
    d_v, d_n = len(instances[0].phi_v), len(instances[0].phi_n)
    if params is None:
        params = ModelParams.initialize(ontology, d_v, d_n, cfg.hidden, cfg.g_kind,
                                        cfg.use_verb_onehot, cfg.seed, cfg.precision)
    cache = TopologyCache(ontology, cfg.connect_verb)
    opt = OptimizerState.fresh(params, cfg.lr0)
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
    try:
        for epoch in range(1, cfg.epochs + 1):
            opt.epoch = epoch
            opt.lr = learning_rate(epoch, cfg.lr0, cfg.decay_start_epoch, cfg.decay_factor)
            order = rng.permutation(len(instances))
            total = 0.0
            for start in range(0, len(order), cfg.batch_size):
                chunk = [instances[i] for i in order[start:start + cfg.batch_size]]
                L, grads = compute_loss_and_grads(params, chunk, cfg, cache, rng, cfg.dropout)
                grads = clip_gradients(grads, cfg.clip_lo, cfg.clip_hi)
                rmsprop_step(params, grads, opt)
                total += L * len(chunk)
            row = {"epoch": epoch, "lr": opt.lr, "train_loss": total / len(instances),
                   "dev_verb": None, "dev_value": None, "dev_value_all": None}
            if dev and cfg.eval_every > 0 and epoch % cfg.eval_every == 0:
                report = evaluate_model(params, ontology, dev, cfg.topology, cfg.steps,
                                        beam=min(cfg.eval_beam, ontology.n_verbs),
                                        sequential=cfg.sequential, cache=cache)
                row.update(dev_verb=report.top1_verb, dev_value=report.top1_value,
                           dev_value_all=report.top1_value_all)
            history.append(row)
            log.info("epoch %d lr %.3g loss %.5f", epoch, opt.lr, row["train_loss"])
            if writer is not None:
                writer.writerow(["" if row[c] is None else row[c] for c in LOG_COLUMNS])
                fh.flush()
            if on_epoch is not None:
                on_epoch(row)
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, params, ontology, cfg.to_dict(), opt)
    finally:
        if fh is not None:
            fh.close()
    return TrainResult(params, opt, history)
