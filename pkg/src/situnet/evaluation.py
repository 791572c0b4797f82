"""verb / value / value-all under top-1, top-5 and ground-truth verbs, plus verb confusion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

METRICS = ("top1_verb", "top1_value", "top1_value_all",
           "top5_verb", "top5_value", "top5_value_all",
           "gt_value", "gt_value_all")
COLUMNS = METRICS[:3] + METRICS[3:6] + METRICS[6:] + ("mean",)
OTHERS = "others"


@dataclass
class MetricReport:
    top1_verb: float
    top1_value: float
    top1_value_all: float
    top5_verb: float
    top5_value: float
    top5_value_all: float
    gt_value: float
    gt_value_all: float
    mean: float
    n_instances: int
    notes: dict = field(default_factory=dict)

    def row(self):
        return [getattr(self, c) for c in COLUMNS]

    def as_dict(self):
        return {c: getattr(self, c) for c in COLUMNS} | {"n_instances": self.n_instances}


def _role_credit(assignments, annotations):
    """Per role: does the predicted noun appear in any annotation for that role."""
    return [any(ann.get(r) == n for ann in annotations) for r, n in assignments]


def _all_credit(assignments, annotations, strict):
    if strict:
        return any(all(ann.get(r) == n for r, n in assignments) for ann in annotations)
    return all(_role_credit(assignments, annotations))


def _frame_scores(assignments, instance, strict):
    credit = _role_credit(assignments, instance.annotations)
    n_roles = len(instance.annotations[0])
    value = sum(credit) / n_roles
    return value, float(_all_credit(assignments, instance.annotations, strict))


def score_instance(record, instance, strict=False):
    """Indicator or fraction for each metric on one instance.

    ``strict`` makes value-all require a single annotator to agree on every role.
    """
    if record.gt_decode is None or record.situation is None or not record.top5:
        raise ContractError(f"{record.id}: prediction bundle needs top-5 verbs, a top-1 situation "
                            f"and the ground-truth-verb decode")
    gt = instance.gt_verb
    frame = set(instance.annotations[0])
    gt_pairs = record.gt_decode[0]
    if {r for r, _ in gt_pairs} != frame:
        raise ContractError(f"{record.id}: ground-truth decode does not cover the frame")
    gt_value, gt_all = _frame_scores(gt_pairs, instance, strict)
    out = dict.fromkeys(METRICS, 0.0)
    out["gt_value"], out["gt_value_all"] = gt_value, gt_all
    if record.situation.verb == gt:
        out["top1_verb"] = 1.0
        out["top1_value"], out["top1_value_all"] = _frame_scores(
            record.situation.assignments, instance, strict)
    if gt in record.top5:
        out["top5_verb"] = 1.0
        out["top5_value"], out["top5_value_all"] = gt_value, gt_all
    return out


def aggregate(scores, notes=None):
    if not scores:
        raise ContractError("aggregate: no instances")
    vals = {m: 100.0 * float(np.mean([s[m] for s in scores])) for m in METRICS}
    mean = float(np.mean([vals[m] for m in METRICS]))
    return MetricReport(**vals, mean=mean, n_instances=len(scores), notes=dict(notes or {}))


def score_records(records, instances, strict=False, notes=None):
    by_id = {i.id: i for i in instances}
    scores = []
    for rec in records:
        inst = by_id.get(rec.id)
        if inst is None:
            raise ContractError(f"prediction for unknown instance {rec.id!r}")
        scores.append(score_instance(rec, inst, strict))
    return aggregate(scores, notes)


def evaluate_model(params, ontology, instances, kind="fc", steps=4, beam=10, sequential=False,
                   cache=None, score_mode="mean", strict=False):
    from .inference import predict_many

    records = predict_many(instances, params, ontology, kind, steps, beam, cache, sequential,
                           score_mode)
    return score_records(records, instances, strict,
                         {"beam": beam, "score_mode": score_mode,
                          "value_all": "strict" if strict else "per-role"})


def write_report(path, report):
    with open(path, "w", newline="") as fh:
        fh.write(f"# mean = arithmetic mean of the {len(METRICS)} metric columns\n")
        for k, v in sorted(report.notes.items()):
            fh.write(f"# {k} = {v}\n")
        w = csv.writer(fh)
        w.writerow(list(COLUMNS) + ["n_instances"])
        w.writerow([f"{x:.4f}" for x in report.row()] + [report.n_instances])


def read_report(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, values = rows[0], rows[1]
    d = dict(zip(header, values))
    return MetricReport(**{c: float(d[c]) for c in COLUMNS}, n_instances=int(d["n_instances"]))


# ---------------------------------------------------------------- confusion matrices

@dataclass
class ConfusionMatrix:
    cluster: str
    verbs: list  # row order (verb ids); columns are these verbs then OTHERS
    percent: np.ndarray  # (len(verbs), len(verbs) + 1)
    counts: np.ndarray
    empty_rows: list  # verbs with no instances; their rows stay zero


def confusion_matrix(records, ontology, cluster, gt_verbs=None):
    """Row-normalized verb confusion restricted to one cluster.

    ``gt_verbs`` maps record id to ground-truth verb when the dump lacks it.
    """
    members = sorted(v for v, c in ontology.verb_clusters.items() if c == cluster)
    if not members:
        raise ContractError(f"unknown verb cluster {cluster!r}")
    col = {v: i for i, v in enumerate(members)}
    counts = np.zeros((len(members), len(members) + 1))
    for rec in records:
        gt = rec.gt_verb if rec.gt_verb is not None else (gt_verbs or {}).get(rec.id)
        if gt is None:
            raise ContractError(f"{rec.id}: ground-truth verb unknown")
        if gt not in col:
            continue
        counts[col[gt], col.get(rec.situation.verb, len(members))] += 1
    totals = counts.sum(axis=1, keepdims=True)
    percent = np.divide(100.0 * counts, totals, out=np.zeros_like(counts), where=totals > 0)
    empty = [members[i] for i in np.flatnonzero(totals[:, 0] == 0)]
    return ConfusionMatrix(cluster, members, percent, counts, empty)


def write_confusion_csv(path, cm, ontology):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gt_verb"] + [ontology.verbs[v] for v in cm.verbs] + [OTHERS])
        for v, row in zip(cm.verbs, cm.percent):
            w.writerow([ontology.verbs[v]] + [f"{x:.6f}" for x in row])


def write_heatmap_svg(path, matrix, row_labels, col_labels, title=""):
    """Heatmap via matplotlib; blue for high, green for zero."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.colors import LinearSegmentedColormap

    cmap = LinearSegmentedColormap.from_list("green_blue", ["#2ca25f", "#2b8cbe", "#08306b"])
    fig, ax = plt.subplots(figsize=(1 + 0.6 * len(col_labels), 1 + 0.5 * len(row_labels)))
    ax.imshow(matrix, cmap=cmap, aspect="auto")
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=45, ha="right")
    ax.set_yticks(range(len(row_labels)), row_labels)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
