"""Metrics: per-site accuracy, confusion matrices, AVG/WAVG/macro-F1, cross matrices.

Summary statistics are accumulated with exact rational arithmetic and converted
to float once, so hand-computed expectations match to the last bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .cohort import AGE_THRESHOLD, NUM_CLASSES, Example, SiteDataset
from .nn import ModelSpec, ParameterVector, _activate, forward


@dataclass(eq=False)
class MetricsReport:
    """Per-site accuracies with their unweighted and size-weighted means."""

    per_site_accuracy: dict[str, float]
    avg: float
    wavg: float
    macro_f1: float
    site_sizes: dict[str, int] = field(default_factory=dict)


@dataclass(eq=False)
class CrossMatrix:
    """Holdout accuracy of every model on every site."""

    model_ids: tuple[str, ...]
    site_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.model_ids), len(self.site_ids)):
            raise ValueError("matrix shape must be (models, sites)")

    def row(self, model_id: str) -> np.ndarray:
        return self.values[self.model_ids.index(model_id)]


def predict(params: ParameterVector, spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    return np.argmax(forward(params, spec, features), axis=1)


def _examples_to_arrays(examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([ex.features for ex in examples])
    y = np.array([ex.label for ex in examples], dtype=int)
    return X, y


def confusion_from_predictions(
    y_true: np.ndarray, y_pred: np.ndarray, num_classes: int = NUM_CLASSES
) -> np.ndarray:
    conf = np.zeros((num_classes, num_classes), dtype=int)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


def evaluate(
    params: ParameterVector, spec: ModelSpec, holdout: Sequence[Example]
) -> tuple[float, np.ndarray]:
    """Accuracy and confusion matrix (rows true, cols predicted) on a holdout set."""
    if not holdout:
        raise ValueError("holdout set is empty")
    X, y = _examples_to_arrays(holdout)
    preds = predict(params, spec, X)
    conf = confusion_from_predictions(y, preds, spec.num_classes)
    accuracy = float(Fraction(int(conf.trace()), int(conf.sum())))
    return accuracy, conf


def prepare_eval_sets(sites: Sequence[SiteDataset]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Stack holdout arrays once per site; sites with empty holdouts are skipped."""
    sets = {}
    for site in sites:
        if site.holdout:
            sets[site.site_id] = _examples_to_arrays(site.holdout)
    if not sets:
        raise ValueError("no site has holdout data")
    return sets


def unweighted_mean(values: Mapping[str, float]) -> float:
    """Exact mean of floats (rational accumulation, rounded once)."""
    if not values:
        raise ValueError("nothing to average")
    return float(sum(Fraction(v) for v in values.values()) / len(values))


def weighted_mean(values: Mapping[str, float], weights: Mapping[str, int]) -> float:
    """Exact weight-by-size mean over shared keys."""
    if set(values) != set(weights):
        raise ValueError("values and weights must share keys")
    total = sum(int(weights[k]) for k in values)
    if total <= 0:
        raise ValueError("weights must be positive in total")
    return float(sum(int(weights[k]) * Fraction(values[k]) for k in values) / total)


def macro_f1_from_confusion(conf: np.ndarray) -> float:
    """Macro F1 over classes; a class with no truth and no predictions scores 0."""
    conf = np.asarray(conf)
    k = conf.shape[0]
    total = Fraction(0)
    for c in range(k):
        tp = int(conf[c, c])
        pred = int(conf[:, c].sum())
        true = int(conf[c, :].sum())
        precision = Fraction(tp, pred) if pred else Fraction(0)
        recall = Fraction(tp, true) if true else Fraction(0)
        if precision + recall > 0:
            total += 2 * precision * recall / (precision + recall)
    return float(total / k)


def summarize(
    accuracies: Mapping[str, float],
    site_sizes: Mapping[str, int],
    confusions: Mapping[str, np.ndarray],
) -> MetricsReport:
    """AVG, size-weighted WAVG, and macro-F1 of the pooled confusion matrix."""
    keys = set(accuracies)
    if keys != set(site_sizes) or keys != set(confusions):
        raise ValueError("accuracies, site_sizes and confusions must share keys")
    if not keys:
        raise ValueError("nothing to summarize")
    accs = {sid: Fraction(accuracies[sid]) for sid in accuracies}
    avg = float(sum(accs.values()) / len(accs))
    total_size = sum(int(site_sizes[sid]) for sid in accs)
    if total_size <= 0:
        raise ValueError("site sizes must be positive")
    wavg = float(sum(int(site_sizes[sid]) * accs[sid] for sid in accs) / total_size)
    pooled = sum(np.asarray(confusions[sid], dtype=int) for sid in accs)
    return MetricsReport(
        per_site_accuracy={sid: float(accuracies[sid]) for sid in accuracies},
        avg=avg,
        wavg=wavg,
        macro_f1=macro_f1_from_confusion(pooled),
        site_sizes={sid: int(site_sizes[sid]) for sid in accuracies},
    )


def fleet_metrics(
    params: ParameterVector,
    spec: ModelSpec,
    eval_sets: Mapping[str, tuple[np.ndarray, np.ndarray]],
) -> MetricsReport:
    """Evaluate one model across prepared per-site holdout arrays and summarize."""
    accuracies: dict[str, float] = {}
    sizes: dict[str, int] = {}
    confusions: dict[str, np.ndarray] = {}
    for sid, (X, y) in eval_sets.items():
        preds = predict(params, spec, X)
        conf = confusion_from_predictions(y, preds, spec.num_classes)
        accuracies[sid] = float(Fraction(int(conf.trace()), int(conf.sum())))
        sizes[sid] = len(y)
        confusions[sid] = conf
    return summarize(accuracies, sizes, confusions)


def cross_evaluate(
    models: Mapping[str, ParameterVector], sites: Sequence[SiteDataset], spec: ModelSpec
) -> CrossMatrix:
    """Holdout accuracy of every model on every site with holdout data."""
    if not models:
        raise ValueError("no models to evaluate")
    eval_sets = prepare_eval_sets(sites)
    model_ids = tuple(sorted(models))
    site_ids = tuple(eval_sets)
    values = np.zeros((len(model_ids), len(site_ids)))
    for i, mid in enumerate(model_ids):
        for j, sid in enumerate(site_ids):
            X, y = eval_sets[sid]
            preds = predict(models[mid], spec, X)
            values[i, j] = float(Fraction(int((preds == y).sum()), len(y)))
    return CrossMatrix(model_ids, site_ids, values)


SUBGROUP_KEYS = ("F", "M", "age_lt_55", "age_ge_55",
                 "F_lt_55", "F_ge_55", "M_lt_55", "M_ge_55")


def _subgroup_member(ex: Example, key: str) -> bool:
    checks = {
        "F": ex.sex == "F",
        "M": ex.sex == "M",
        "age_lt_55": ex.age < AGE_THRESHOLD,
        "age_ge_55": ex.age >= AGE_THRESHOLD,
        "F_lt_55": ex.sex == "F" and ex.age < AGE_THRESHOLD,
        "F_ge_55": ex.sex == "F" and ex.age >= AGE_THRESHOLD,
        "M_lt_55": ex.sex == "M" and ex.age < AGE_THRESHOLD,
        "M_ge_55": ex.sex == "M" and ex.age >= AGE_THRESHOLD,
    }
    return checks[key]


def subgroup_report(
    params: ParameterVector, spec: ModelSpec, sites: Sequence[SiteDataset]
) -> dict[str, MetricsReport]:
    """Holdout metrics restricted to sex and age-55 subgroups (marginals and cells).

    Subgroups that are empty everywhere are absent from the result; sites that
    are empty for a subgroup are skipped within it.
    """
    reports: dict[str, MetricsReport] = {}
    for key in SUBGROUP_KEYS:
        accuracies: dict[str, float] = {}
        sizes: dict[str, int] = {}
        confusions: dict[str, np.ndarray] = {}
        for site in sites:
            members = [ex for ex in site.holdout if _subgroup_member(ex, key)]
            if not members:
                continue
            acc, conf = evaluate(params, spec, members)
            accuracies[site.site_id] = acc
            sizes[site.site_id] = len(members)
            confusions[site.site_id] = conf
        if accuracies:
            reports[key] = summarize(accuracies, sizes, confusions)
    return reports


def penultimate_activations(
    params: ParameterVector, spec: ModelSpec, features: np.ndarray
) -> np.ndarray:
    """Activations after the last hidden nonlinearity; requires a hidden layer."""
    if not spec.hidden_dims:
        raise ValueError("model has no hidden layer to take activations from")
    X = np.asarray(features, dtype=np.float64)
    h = X
    for i in range(len(spec.hidden_dims)):
        h = _activate(h @ params.block(f"W{i}") + params.block(f"b{i}"), spec.activation)
    return h


@dataclass(eq=False)
class EmbeddingExport:
    """Penultimate activations per example plus per-subgroup activation spread."""

    columns: tuple[str, ...]
    rows: list[tuple]
    group_std: dict[str, tuple[int, float]]  # subgroup -> (count, mean per-dim std)


def export_embeddings(
    params: ParameterVector, spec: ModelSpec, examples: Sequence[Example]
) -> EmbeddingExport:
    """One activation row per example, with a per-subgroup spread summary.

    The summary reports, for each sex/age subgroup, the standard deviation of
    the activations of correctly classified examples per dimension, averaged
    over dimensions.
    """
    if not examples:
        raise ValueError("no examples to export")
    X, y = _examples_to_arrays(examples)
    acts = penultimate_activations(params, spec, X)
    preds = predict(params, spec, X)
    correct = preds == y
    width = acts.shape[1]
    columns = ("site_id", "sex", "age", "label", "correct",
               *(f"h{i}" for i in range(width)))
    rows = [
        (ex.site_id, ex.sex, ex.age, ex.label, int(correct[i]), *map(float, acts[i]))
        for i, ex in enumerate(examples)
    ]
    group_std: dict[str, tuple[int, float]] = {}
    for key in SUBGROUP_KEYS:
        mask = np.array(
            [correct[i] and _subgroup_member(ex, key) for i, ex in enumerate(examples)]
        )
        count = int(mask.sum())
        if count >= 2:
            group_std[key] = (count, float(acts[mask].std(axis=0, ddof=1).mean()))
    return EmbeddingExport(columns, rows, group_std)


# ---------------------------------------------------------------------------
# CSV serialization. Floats are written with repr() so reruns are byte-stable.


def write_cross_matrix_csv(matrix: CrossMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", *matrix.site_ids])
        for i, mid in enumerate(matrix.model_ids):
            writer.writerow([mid, *(repr(float(v)) for v in matrix.values[i])])


def read_cross_matrix_csv(path) -> CrossMatrix:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        site_ids = tuple(header[1:])
        model_ids = []
        rows = []
        for row in reader:
            model_ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return CrossMatrix(tuple(model_ids), site_ids, np.array(rows))


def write_metrics_report_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["section", "key", "value"])
        writer.writerow(["summary", "avg", repr(report.avg)])
        writer.writerow(["summary", "wavg", repr(report.wavg)])
        writer.writerow(["summary", "macro_f1", repr(report.macro_f1)])
        for sid in sorted(report.per_site_accuracy):
            writer.writerow(["site_accuracy", sid, repr(report.per_site_accuracy[sid])])
        for sid in sorted(report.site_sizes):
            writer.writerow(["site_size", sid, str(report.site_sizes[sid])])


def read_metrics_report_csv(path) -> MetricsReport:
    per_site: dict[str, float] = {}
    sizes: dict[str, int] = {}
    summary: dict[str, float] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for section, key, value in reader:
            if section == "summary":
                summary[key] = float(value)
            elif section == "site_accuracy":
                per_site[key] = float(value)
            elif section == "site_size":
                sizes[key] = int(value)
    return MetricsReport(per_site, summary["avg"], summary["wavg"], summary["macro_f1"], sizes)


def write_embeddings_csv(export: EmbeddingExport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(export.columns)
        for row in export.rows:
            writer.writerow(
                [repr(v) if isinstance(v, float) else v for v in row]
            )


def write_embedding_groups_csv(export: EmbeddingExport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subgroup", "count", "mean_activation_std"])
        for key in SUBGROUP_KEYS:
            if key in export.group_std:
                count, spread = export.group_std[key]
                writer.writerow([key, count, repr(spread)])
