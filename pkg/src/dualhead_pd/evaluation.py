"""Confusion-matrix metrics, split evaluation with breakdowns, and embedding
export with a 2-D principal-component projection."""

import csv
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


class UsageError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Counts with PD as the positive class."""

    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0

    @property
    def total(self):
        return self.tp + self.fn + self.tn + self.fp

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fn + other.fn, self.tn + other.tn, self.fp + other.fp)

    def as_dict(self):
        return {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp}


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    f1_positive: float
    f1_negative: float
    sensitivity: float
    specificity: float
    undefined: tuple = ()  # names of ratios whose denominator was 0

    FIELDS = ("accuracy", "macro_f1", "f1_positive", "f1_negative", "sensitivity", "specificity")

    def rendered(self):
        return {k: f"{getattr(self, k):.2f}" for k in self.FIELDS}


def confusion(probabilities, labels, threshold=0.5):
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels)
    if p.size == 0:
        raise UsageError("confusion() needs at least one prediction")
    if p.shape != y.shape:
        raise UsageError(f"length mismatch: {p.shape} predictions vs {y.shape} labels")
    if not np.isin(y, (0, 1)).all():
        raise UsageError("labels must be 0 (HC) or 1 (PD)")
    pred = p >= threshold
    pos = y == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & pos)),
        fn=int(np.sum(~pred & pos)),
        tn=int(np.sum(~pred & ~pos)),
        fp=int(np.sum(pred & ~pos)),
    )


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def _f1(tp, fp, fn, name, undefined):
    precision = _ratio(tp, tp + fp, f"precision_{name}", undefined)
    recall = _ratio(tp, tp + fn, f"recall_{name}", undefined)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics(cm):
    """Percentages; ratios with empty denominators are 0 and listed in
    ``undefined``."""
    if cm.total < 1:
        raise UsageError("metrics() needs a non-empty confusion matrix")
    undefined = []
    sens = _ratio(cm.tp, cm.tp + cm.fn, "sensitivity", undefined)
    spec = _ratio(cm.tn, cm.tn + cm.fp, "specificity", undefined)
    f1_pos = _f1(cm.tp, cm.fp, cm.fn, "pd", undefined)
    f1_neg = _f1(cm.tn, cm.fn, cm.fp, "hc", undefined)
    return MetricsReport(
        accuracy=100.0 * (cm.tp + cm.tn) / cm.total,
        macro_f1=100.0 * (f1_pos + f1_neg) / 2,
        f1_positive=100.0 * f1_pos,
        f1_negative=100.0 * f1_neg,
        sensitivity=100.0 * sens,
        specificity=100.0 * spec,
        undefined=tuple(undefined),
    )


# ---------------------------------------------------------------------------
# running a model over a split


@dataclass
class Evaluation:
    overall: ConfusionMatrix
    cells: dict  # (dataset, task) -> ConfusionMatrix
    probabilities: np.ndarray
    labels: np.ndarray
    per_dataset: dict = field(default_factory=dict)

    @property
    def report(self):
        return metrics(self.overall)


def predict(model, utterances, lang_map=None, batch_size=64):
    """Probabilities and pooled embeddings for each utterance, in input order."""
    probs = np.zeros(len(utterances))
    embeds = [None] * len(utterances)
    for start in range(0, len(utterances), batch_size):
        chunk = utterances[start : start + batch_size]
        lang = [model.languages.index(u.dataset, lang_map) for u in chunk]
        outs = model.forward_batch(
            [u.ssl for u in chunk], [u.wav for u in chunk], lang, [u.task for u in chunk]
        )
        for h in outs:
            for pos, i in enumerate(h.index):
                probs[start + i] = h.prob.value[pos]
                embeds[start + i] = h.embedding.value[pos]
    return probs, embeds


def speaker_vote(utterances, probs, threshold=0.5):
    """Majority vote of utterance decisions per speaker (ties count as PD)."""
    votes = defaultdict(list)
    for u, p in zip(utterances, probs):
        votes[(u.dataset, u.speaker_id)].append((p >= threshold, u.label, u.task))
    out_p, out_y = [], []
    for v in votes.values():
        out_p.append(1.0 if np.mean([d for d, _, _ in v]) >= 0.5 else 0.0)
        out_y.append(v[0][1])
    return np.array(out_p), np.array(out_y)


def evaluate(model, utterances, lang_map=None, threshold=0.5, batch_size=64):
    if not utterances:
        raise UsageError("evaluate() needs a non-empty split")
    probs, _ = predict(model, utterances, lang_map, batch_size)
    labels = np.array([u.label for u in utterances])
    cells = {}
    for key in sorted({(u.dataset, u.task.value) for u in utterances}):
        sel = [i for i, u in enumerate(utterances) if (u.dataset, u.task.value) == key]
        cells[key] = confusion(probs[sel], labels[sel], threshold)
    per_dataset = {}
    for (ds, _), cm in cells.items():
        per_dataset[ds] = per_dataset.get(ds, ConfusionMatrix()) + cm
    return Evaluation(confusion(probs, labels, threshold), cells, probs, labels, per_dataset)


def format_table(rows, title=None):
    """rows: list of (name, MetricsReport)."""
    head = f"{'split':<24}" + "".join(f"{k:>13}" for k in MetricsReport.FIELDS)
    lines = [title] if title else []
    lines += [head, "-" * len(head)]
    for name, rep in rows:
        r = rep.rendered()
        lines.append(f"{name:<24}" + "".join(f"{r[k]:>13}" for k in MetricsReport.FIELDS))
    return "\n".join(lines)


def write_metrics(path, evaluation):
    """Key=value lines: overall metrics, counts, then per-dataset/per-cell."""
    lines = []

    def emit(prefix, cm):
        for k, v in cm.as_dict().items():
            lines.append(f"{prefix}{k}={v}")
        for k, v in metrics(cm).rendered().items():
            lines.append(f"{prefix}{k}={v}")

    emit("", evaluation.overall)
    for ds, cm in sorted(evaluation.per_dataset.items()):
        emit(f"{ds}.", cm)
    for (ds, task), cm in evaluation.cells.items():
        emit(f"{ds}.{task}.", cm)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# embedding export


def pca_2d(x):
    """Project onto the top two principal components.

    Returns (projection (n, 2), components (2, D)). Each component's sign is
    fixed so its largest-magnitude loading is positive.
    """
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = np.zeros((2, x.shape[1]))
    k = min(2, vt.shape[0])
    comps[:k] = vt[:k]
    for c in comps:
        if np.any(c):
            lead = np.argmax(np.abs(c))
            if c[lead] < 0:
                c *= -1
    return centered @ comps.T, comps


def export_embeddings(model, utterances, task=None, lang_map=None):
    """Rows of (id, dataset, label, task, embedding, 2-D projection)."""
    if task is not None:
        utterances = [u for u in utterances if u.task == task]
    if not utterances:
        raise UsageError("no utterances match the export selection")
    _, embeds = predict(model, utterances, lang_map)
    emb = np.stack(embeds)
    proj, _ = pca_2d(emb)
    return [
        {
            "utterance_id": u.utterance_id,
            "dataset": u.dataset,
            "label": u.label,
            "task": u.task.value,
            "embedding": emb[i],
            "projection": proj[i],
        }
        for i, u in enumerate(utterances)
    ]


def write_embeddings_csv(path, rows):
    dim = len(rows[0]["embedding"])
    header = ["utterance_id", "dataset", "label", "task"] + [f"e{i}" for i in range(dim)] + ["pc1", "pc2"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(
                [r["utterance_id"], r["dataset"], r["label"], r["task"]]
                + [f"{v:.8g}" for v in r["embedding"]]
                + [f"{v:.8g}" for v in r["projection"]]
            )
