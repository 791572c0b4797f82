"""Command-line entry point: ``situnet {gen-data,train,predict,eval,analyze}``.

Every command writes into a run directory (``--out``) holding the resolved
configuration, input data hashes, a log file and its artifacts. Options come
from three layers, later ones winning: built-in defaults, a ``--config`` JSON
file, explicit flags.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 invalid
configuration, 4 missing file, 5 invalid dataset or checkpoint.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .errors import ConfigError, ContractError, DatasetError, SituError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_DATA = 5

CONFIG_FILE = "config.json"
LOG_FILE = "run.log"
CHECKPOINT = "checkpoint.npz"
TRAIN_LOG = "train_log.csv"
DUMP = "predictions.jsonl"
REPORT = "report.csv"

log = logging.getLogger("situnet")

# flag dest -> TrainConfig field
TRAIN_FLAGS = {
    "topology": "topology", "steps": "steps", "beam": "eval_beam", "hidden": "hidden",
    "nonlin": "g_kind", "verb_onehot": "use_verb_onehot", "batch": "batch_size", "lr": "lr0",
    "epochs": "epochs", "seed": "seed", "precision": "precision", "rnn": "sequential",
}


class UsageError(SituError):
    pass


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return doc


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _setup_logging(out_dir=None):
    level_name = os.environ.get("SITU_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        raise ConfigError(f"SITU_LOG={level_name!r} is not a logging level")
    root = logging.getLogger("situnet")
    root.handlers.clear()
    root.setLevel(min(level, logging.INFO) if out_dir else level)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    stream = logging.StreamHandler(sys.stderr)
    stream.setLevel(level)
    stream.setFormatter(fmt)
    root.addHandler(stream)
    if out_dir is not None:
        fh = logging.FileHandler(Path(out_dir) / LOG_FILE, mode="a", encoding="utf-8")
        fh.setLevel(logging.INFO)
        fh.setFormatter(fmt)
        root.addHandler(fh)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_split(data, split):
    """``--data`` may name a dataset file or a directory holding ``<split>.json``."""
    p = Path(data)
    if p.is_dir():
        p = p / f"{split}.json"
    if not p.is_file():
        raise FileNotFoundError(f"dataset not found: {p}")
    return p


def _load(path):
    from .ontology import load_dataset

    return load_dataset(path)


def _checkpoint_path(args):
    if getattr(args, "checkpoint", None):
        p = Path(args.checkpoint)
    elif getattr(args, "run", None):
        p = Path(args.run) / CHECKPOINT
    else:
        raise UsageError("give --checkpoint or --run")
    if not p.is_file():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return p


def _load_model(args, ontology):
    from .checkpoint import load_checkpoint

    params, meta, _ = load_checkpoint(_checkpoint_path(args), ontology)
    return params, meta.get("config", {})


def _decode_options(args, trained):
    """Topology/steps/beam for decoding: flags first, then the training config."""
    from .topology import normalize_kind

    kind = normalize_kind(args.topology or trained.get("topology", "fc"))
    steps = args.steps if args.steps is not None else trained.get("steps", 4)
    sequential = bool(args.rnn or trained.get("sequential", False))
    if getattr(args, "greedy", False):
        beam = 1
    elif args.beam is not None:
        beam = args.beam
    else:
        beam = trained.get("eval_beam", 10)
    if beam < 1:
        raise ConfigError(f"--beam must be >= 1, got {beam}")
    if steps < 0:
        raise ConfigError(f"--steps must be >= 0, got {steps}")
    return kind, steps, beam, sequential


# ---------------------------------------------------------------- gen-data

GEN_FLAGS = ("n_verbs", "n_roles", "n_nouns", "min_roles", "max_roles", "n_train", "n_dev",
             "d_v", "d_n", "correlation", "noise", "synonym_rate", "null_rate", "n_clusters")


def cmd_gen_data(args):
    from .ontology import write_dataset
    from .synthetic import SyntheticConfig, generate_synthetic

    out = _out_dir(args)
    _setup_logging(out)
    base = _read_json(args.config) if args.config else {}
    seed = base.pop("seed", 0)
    if args.seed is not None:
        seed = args.seed
    known = {f.name for f in fields(SyntheticConfig)}
    unknown = set(base) - known
    if unknown:
        raise ConfigError(f"unknown generator options: {sorted(unknown)}")
    opts = dict(base)
    for name in GEN_FLAGS:
        val = getattr(args, name)
        if val is not None:
            opts[name] = val
    cfg = SyntheticConfig(**opts)
    ontology, train, dev = generate_synthetic(cfg, seed)
    write_dataset(out / "train.json", ontology, train)
    write_dataset(out / "dev.json", ontology, dev)
    _write_json(out / CONFIG_FILE, {
        "command": "gen-data", "seed": seed, "generator": cfg.to_dict(),
        "files": {"train.json": _sha256(out / "train.json"),
                  "dev.json": _sha256(out / "dev.json")},
    })
    log.info("wrote %d train / %d dev instances to %s", len(train), len(dev), out)
    print(f"wrote {len(train)} train and {len(dev)} dev instances to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- train

def resolve_train_config(args):
    from .training import TrainConfig

    opts = TrainConfig().to_dict()
    if args.config:
        doc = _read_json(args.config)
        # a run directory's config.json nests the options under "train"
        opts.update(doc.get("train", doc))
    for flag, name in TRAIN_FLAGS.items():
        val = getattr(args, flag, None)
        if flag == "rnn" and not val:
            continue
        if val is not None:
            opts[name] = val
    cfg = TrainConfig.from_dict(opts)
    cfg.check()
    return cfg


def cmd_train(args):
    from .evaluation import evaluate_model, write_report
    from .training import train

    out = _out_dir(args)
    _setup_logging(out)
    cfg = resolve_train_config(args)
    train_path = _resolve_split(args.data, "train")
    dev_path = Path(args.dev) if args.dev else None
    if dev_path is None and Path(args.data).is_dir() and (Path(args.data) / "dev.json").is_file():
        dev_path = Path(args.data) / "dev.json"
    if dev_path is not None and not dev_path.is_file():
        raise FileNotFoundError(f"dataset not found: {dev_path}")
    ontology, instances = _load(train_path)
    dev = None
    if dev_path is not None:
        dev_ontology, dev = _load(dev_path)
        if dev_ontology.digest() != ontology.digest():
            raise DatasetError(f"{dev_path}: ontology differs from {train_path}")
    files = {str(train_path): _sha256(train_path)}
    if dev_path is not None:
        files[str(dev_path)] = _sha256(dev_path)
    _write_json(out / CONFIG_FILE, {"command": "train", "train": cfg.to_dict(),
                                    "data": files, "ontology_hash": ontology.digest()})
    log.info("training %s T=%d D=%d on %d instances", cfg.topology, cfg.steps, cfg.hidden,
             len(instances))
    res = train(ontology, instances, cfg, dev=dev, log_path=out / TRAIN_LOG,
                checkpoint_path=out / CHECKPOINT)
    last = res.history[-1] if res.history else {}
    if dev:
        report = evaluate_model(res.params, ontology, dev, cfg.topology, cfg.steps,
                                beam=min(cfg.eval_beam, ontology.n_verbs),
                                sequential=cfg.sequential)
        write_report(out / REPORT, report)
    if not res.history:
        from .checkpoint import save_checkpoint

        save_checkpoint(out / CHECKPOINT, res.params, ontology, cfg.to_dict(), res.opt_state)
    print(f"trained {len(res.history)} epochs; final train loss "
          f"{last.get('train_loss', float('nan')):.5f}; checkpoint {out / CHECKPOINT}")
    return EXIT_OK


# ---------------------------------------------------------------- predict

def cmd_predict(args):
    from .inference import predict_many, write_dump

    out = _out_dir(args)
    _setup_logging(out)
    data_path = _resolve_split(args.data, "dev")
    ontology, instances = _load(data_path)
    params, trained = _load_model(args, ontology)
    kind, steps, beam, sequential = _decode_options(args, trained)
    beam = min(beam, ontology.n_verbs)
    records = predict_many(instances, params, ontology, kind, steps, beam,
                           sequential=sequential, score_mode=args.score)
    dump = Path(args.dump) if args.dump else out / DUMP
    write_dump(dump, records, ontology, args.score)
    _write_json(out / "predict_config.json", {
        "command": "predict", "checkpoint": str(_checkpoint_path(args)),
        "data": {str(data_path): _sha256(data_path)}, "topology": kind, "steps": steps,
        "beam": beam, "sequential": sequential, "score_mode": args.score})
    print(f"wrote {len(records)} predictions to {dump}")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def cmd_eval(args):
    from .evaluation import (confusion_matrix, score_records,
                             write_confusion_csv, write_heatmap_svg, write_report)
    from .inference import read_dump

    out = _out_dir(args)
    _setup_logging(out)
    data_path = _resolve_split(args.data, "dev")
    ontology, instances = _load(data_path)
    if args.dump:
        dump = Path(args.dump)
        if not dump.is_file():
            raise FileNotFoundError(f"prediction dump not found: {dump}")
        records = read_dump(dump, ontology)
        report = score_records(records, instances, args.strict,
                               {"source": str(dump),
                                "value_all": "strict" if args.strict else "per-role"})
    else:
        from .inference import predict_many

        params, trained = _load_model(args, ontology)
        kind, steps, beam, sequential = _decode_options(args, trained)
        beam = min(beam, ontology.n_verbs)
        records = predict_many(instances, params, ontology, kind, steps, beam,
                               sequential=sequential, score_mode=args.score)
        report = score_records(records, instances, args.strict,
                               {"beam": beam, "score_mode": args.score,
                                "value_all": "strict" if args.strict else "per-role"})
    path = Path(args.report) if args.report else out / REPORT
    write_report(path, report)
    if args.confusion is None:
        clusters = []
    elif args.confusion in ([], ["all"]):
        clusters = sorted(set(ontology.verb_clusters.values()))
    else:
        clusters = args.confusion
    for name in clusters:
        cm = confusion_matrix(records, ontology, name)
        write_confusion_csv(out / f"confusion_{name}.csv", cm, ontology)
        if args.svg:
            labels = [ontology.verbs[v] for v in cm.verbs]
            write_heatmap_svg(out / f"confusion_{name}.svg", cm.percent, labels,
                              labels + ["others"], title=name)
    print(" ".join(f"{c}={getattr(report, c):.2f}" for c in
                   ("top1_verb", "top1_value", "top1_value_all", "gt_value", "gt_value_all",
                    "mean")))
    print(f"report written to {path}")
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def cmd_analyze(args):
    from .analysis import (VERB_LABEL, export_embeddings, propagation_norm_matrix,
                           write_propagation_csv)
    from .evaluation import write_heatmap_svg
    from .topology import TopologyCache, normalize_kind

    out = _out_dir(args)
    _setup_logging(out)
    data_path = _resolve_split(args.data, "dev")
    ontology, instances = _load(data_path)
    params, trained = _load_model(args, ontology)
    kind = normalize_kind(args.topology or trained.get("topology", "fc"))
    cache = TopologyCache(ontology, trained.get("connect_verb", False))
    if args.verb:
        try:
            verbs = [ontology.verb_index[v] for v in args.verb]
        except KeyError as exc:
            raise ConfigError(f"unknown verb {exc.args[0]!r}") from None
    else:
        verbs = sorted({i.gt_verb for i in instances})
    written = 0
    for v in verbs:
        try:
            pm = propagation_norm_matrix(params, ontology, instances, v, kind,
                                         include_bias=not args.no_bias, cache=cache)
        except ContractError as exc:
            if args.verb:
                raise
            log.warning("%s", exc)
            continue
        for msg in pm.diagnostics:
            log.warning("%s: %s", ontology.verbs[v], msg)
        if pm.sources:
            write_propagation_csv(out / f"propagation_{ontology.verbs[v]}.csv", pm, ontology)
            written += 1
            if args.svg:
                rows = [VERB_LABEL if r is None else ontology.roles[r] for r in pm.sources]
                cols = [ontology.roles[r] for r in pm.roles]
                write_heatmap_svg(out / f"propagation_{ontology.verbs[v]}.svg", pm.matrix,
                                  rows, cols, title=ontology.verbs[v])
    export_embeddings(params, ontology, out)
    print(f"wrote {written} propagation matrices and embeddings to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_model_flags(p, defaults_from_checkpoint=False):
    note = " (default: from the checkpoint)" if defaults_from_checkpoint else ""
    p.add_argument("--topology", choices=("unaries", "chain", "tree", "fc", "fully_connected"),
                   help="graph structure" + note)
    p.add_argument("--steps", type=int, help="propagation steps T" + note)
    p.add_argument("--beam", type=int, help="beam width B over verbs" + note)
    p.add_argument("--rnn", action="store_true",
                   help="sequential chain/tree RNN instead of simultaneous propagation")


def build_parser():
    parser = argparse.ArgumentParser(prog="situnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="JSON file with generator options (and optional seed)")
    for name in GEN_FLAGS:
        kind = float if name in ("correlation", "noise", "synonym_rate", "null_rate") else int
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True, help="train file, or a directory with train.json")
    t.add_argument("--dev", help="dev file (default: dev.json next to the train file)")
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--config", help="JSON file with training options")
    _add_model_flags(t)
    t.add_argument("--hidden", type=int, help="hidden size D")
    t.add_argument("--nonlin", choices=("tanh", "relu"), help="initialization nonlinearity g")
    t.add_argument("--verb-onehot", dest="verb_onehot", type=_on_off, metavar="{on,off}",
                   help="verb factor in role initialization")
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--precision", choices=("f32", "f64"))
    t.set_defaults(func=cmd_train)

    for name, func, help_text in (("predict", cmd_predict, "decode situations"),
                                  ("eval", cmd_eval, "score predictions")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True, help="dataset file, or a directory with dev.json")
        p.add_argument("--out", required=True, help="run directory for outputs")
        p.add_argument("--run", help="training run directory (uses its checkpoint)")
        p.add_argument("--checkpoint", help="checkpoint file")
        _add_model_flags(p, defaults_from_checkpoint=True)
        p.add_argument("--greedy", action="store_true", help="greedy decoding (beam width 1)")
        p.add_argument("--score", choices=("mean", "sum"), default="mean",
                       help="beam candidate score over role log-probs")
        if name == "predict":
            p.add_argument("--dump", help=f"output JSON-lines file (default: OUT/{DUMP})")
        else:
            p.add_argument("--dump", help="score an existing prediction dump")
            p.add_argument("--report", help=f"report path (default: OUT/{REPORT})")
            p.add_argument("--strict", action="store_true",
                           help="value-all needs one annotator to match every role")
            p.add_argument("--confusion", nargs="*", metavar="CLUSTER",
                           help="verb clusters for confusion matrices (none given or 'all': every one)")
            p.add_argument("--svg", action="store_true", help="also write SVG heatmaps")
        p.set_defaults(func=func)

    a = sub.add_parser("analyze", help="propagation-norm matrices and embedding export")
    a.add_argument("--data", required=True, help="dataset file, or a directory with dev.json")
    a.add_argument("--out", required=True)
    a.add_argument("--run")
    a.add_argument("--checkpoint")
    a.add_argument("--topology", choices=("unaries", "chain", "tree", "fc", "fully_connected"))
    a.add_argument("--verb", nargs="*", help="verb names (default: every verb in the data)")
    a.add_argument("--no-bias", action="store_true", help="leave b_p out of message norms")
    a.add_argument("--svg", action="store_true")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"situnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"situnet {args.command}: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"situnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DatasetError, ContractError) as exc:
        print(f"situnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SituError as exc:
        print(f"situnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
