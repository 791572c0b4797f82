"""Checkpoint files: a numpy ``.npz`` archive with a JSON metadata entry."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractError, DatasetError
from .model import PARAM_NAMES, ModelParams

FORMAT_VERSION = 1


def save_checkpoint(path, params, ontology, config, opt_state=None):
    meta = {
        "format_version": FORMAT_VERSION,
        "ontology_hash": ontology.digest(),
        "dims": list(params.dims),
        "hidden": params.hidden,
        "g_kind": params.g_kind,
        "use_verb_onehot": params.use_verb_onehot,
        "config": config,
    }
    arrays = {f"param/{k}": v for k, v in params.arrays().items()}
    if opt_state is not None:
        meta["optimizer"] = {"lr": opt_state.lr, "epoch": opt_state.epoch,
                             "decay": opt_state.decay, "eps": opt_state.eps}
        arrays.update({f"sq_avg/{k}": v for k, v in opt_state.sq_avg.items()})
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_checkpoint(path, ontology=None):
    """Return ``(params, meta, optimizer_state_or_None)``; rejects a mismatched ontology."""
    from .training import OptimizerState

    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode("utf-8"))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ContractError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        if ontology is not None and meta["ontology_hash"] != ontology.digest():
            raise DatasetError(f"{path}: checkpoint was trained on a different ontology")
        tensors = {k: z[f"param/{k}"] for k in PARAM_NAMES}
        params = ModelParams(tensors, *meta["dims"], meta["g_kind"], meta["use_verb_onehot"])
        opt = None
        if "optimizer" in meta:
            o = meta["optimizer"]
            opt = OptimizerState({k: z[f"sq_avg/{k}"] for k in PARAM_NAMES}, o["lr"], o["epoch"],
                                 o["decay"], o["eps"])
    return params, meta, opt
