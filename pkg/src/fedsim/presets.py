"""Shipped experiment presets: one command per headline comparison.

Each preset runs a bundle of experiment configs over the requested seeds and
writes a combined comparison artifact next to the per-run outputs.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .cohort import PUBLIC_SITE_ID
from .evaluation import read_metrics_report_csv
from .experiments import (
    DEFAULT_SEEDS,
    ExperimentConfig,
    RunManifest,
    run_experiment,
)


def _cfg(
    out_root: Path,
    name: str,
    strategy: str,
    seeds: Sequence[int],
    cohort: str = "default",
    params: Mapping | None = None,
    transforms: Sequence[Mapping] | None = None,
    report_subgroups: bool = False,
    export_embeddings: bool = False,
) -> ExperimentConfig:
    return ExperimentConfig(
        name=name,
        strategy=strategy,
        cohort=cohort,
        params=dict(params or {}),
        transforms=tuple(dict(t) for t in (transforms or ())),
        seeds=tuple(seeds),
        output_dir=str(out_root),
        report_subgroups=report_subgroups,
        export_embeddings=export_embeddings,
    )


def _seed_reports(out_root: Path, name: str, manifests: Sequence[RunManifest]):
    for manifest in sorted(manifests, key=lambda m: m.seed):
        yield manifest.seed, read_metrics_report_csv(
            out_root / name / f"seed_{manifest.seed}" / "metrics_report.csv"
        )


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def _write_comparison_csv(path: Path, rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["experiment", "wavg_mean", "wavg_std", "avg_mean", "avg_std",
             "macro_f1_mean", "macro_f1_std"]
        )
        for row in rows:
            writer.writerow([row[0], *(repr(float(v)) for v in row[1:])])


def _run_bundle(
    out_root: Path, configs: Sequence[ExperimentConfig], jobs: int, table_name: str
) -> None:
    rows = []
    for cfg in configs:
        manifests = run_experiment(cfg, jobs=jobs)
        reports = [r for _, r in _seed_reports(out_root, cfg.name, manifests)]
        wavg = _mean_std([r.wavg for r in reports])
        avg = _mean_std([r.avg for r in reports])
        f1 = _mean_std([r.macro_f1 for r in reports])
        rows.append([cfg.name, wavg[0], wavg[1], avg[0], avg[1], f1[0], f1[1]])
    _write_comparison_csv(out_root / table_name, rows)


# ---------------------------------------------------------------------------
# Individual presets


def preset_table2(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Strategy comparison table: best siloed, CDS, FedAvg E=1/E=4, synthetic FL."""
    configs = [
        _cfg(out_root, "best_siloed", "siloed", seeds,
             params={"exclude_sites": [PUBLIC_SITE_ID]}),
        _cfg(out_root, "cds", "cds", seeds),
        _cfg(out_root, "fedavg_e1", "fedavg", seeds,
             params={"rounds": 40, "local_epochs": 1}),
        _cfg(out_root, "fedavg_e4", "fedavg", seeds,
             params={"rounds": 40, "local_epochs": 4}),
        _cfg(out_root, "fedavg_synth_only", "fedavg_synth_only", seeds,
             params={"rounds": 40, "local_epochs": 1}),
        _cfg(out_root, "fedavg_real_plus_synth", "fedavg_real_plus_synth", seeds,
             params={"rounds": 40, "local_epochs": 1}),
    ]
    _run_bundle(out_root, configs, jobs, "table2.csv")


def preset_fig_s1(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Siloed cross-evaluation matrices, with and without public-site pretraining."""
    configs = [
        _cfg(out_root, "siloed", "siloed", seeds,
             params={"exclude_sites": [PUBLIC_SITE_ID]}),
        _cfg(out_root, "siloed_pretrained", "siloed_pretrained", seeds),
    ]
    _run_bundle(out_root, configs, jobs, "fig_s1.csv")


def preset_fig3b(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Incremental-path comparison: IIL direction, public inclusion, CIIL on IID data."""
    configs = [
        _cfg(out_root, "iil_asc", "iil", seeds,
             params={"direction": "asc", "include_public": False}),
        _cfg(out_root, "iil_desc", "iil", seeds,
             params={"direction": "desc", "include_public": False}),
        _cfg(out_root, "iil_desc_with_public", "iil", seeds,
             params={"direction": "desc", "include_public": True}),
        _cfg(out_root, "ciil_desc_r3", "ciil", seeds,
             params={"direction": "desc", "rounds": 3, "include_public": False}),
        _cfg(out_root, "ciil_desc_r3_iid", "ciil", seeds,
             params={"direction": "desc", "rounds": 3, "include_public": False},
             transforms=[{"name": "repartition_iid"}]),
    ]
    _run_bundle(out_root, configs, jobs, "fig3b.csv")
    _write_fig3b_matrix(out_root, configs)


def _write_fig3b_matrix(out_root: Path, configs: Sequence[ExperimentConfig]) -> None:
    # Per-site final accuracies averaged over seeds, one row per path config.
    rows = []
    site_ids: list[str] = []
    for cfg in configs:
        reports = [
            read_metrics_report_csv(out_root / cfg.name / f"seed_{s}" / "metrics_report.csv")
            for s in cfg.seeds
        ]
        if not site_ids:
            site_ids = sorted(reports[0].per_site_accuracy)
        means = [
            float(np.mean([r.per_site_accuracy[sid] for r in reports])) for sid in site_ids
        ]
        rows.append([cfg.name, *means])
    with open(out_root / "fig3b_matrix.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_config", *site_ids])
        for row in rows:
            writer.writerow([row[0], *(repr(v) for v in row[1:])])


def preset_fig4_c_sweep(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Client-fraction sweep on the heterogeneous cohort and its IID repartition."""
    configs = []
    for label, transforms in (("noniid", []), ("iid", [{"name": "repartition_iid"}])):
        for c in (0.25, 0.5, 1.0):
            configs.append(
                _cfg(out_root, f"{label}_c{str(c).replace('.', '')}", "fedavg", seeds,
                     params={"rounds": 40, "client_fraction": c}, transforms=transforms)
            )
    _run_bundle(out_root, configs, jobs, "fig4_c_sweep.csv")


def preset_fig4c(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Effect of splitting every site in two, on heterogeneous vs IID cohorts."""
    configs = [
        _cfg(out_root, "noniid_baseline", "fedavg", seeds, params={"rounds": 40}),
        _cfg(out_root, "noniid_split2", "fedavg", seeds, params={"rounds": 40},
             transforms=[{"name": "split_k_ways", "k": 2}]),
        _cfg(out_root, "iid_baseline", "fedavg", seeds, params={"rounds": 40},
             transforms=[{"name": "repartition_iid"}]),
        _cfg(out_root, "iid_split2", "fedavg", seeds, params={"rounds": 40},
             transforms=[{"name": "repartition_iid"}, {"name": "split_k_ways", "k": 2}]),
    ]
    _run_bundle(out_root, configs, jobs, "fig4c.csv")


def preset_fig4d(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Local-epoch budget: many short rounds vs fewer long rounds vs one-shot drift."""
    configs = [
        _cfg(out_root, "e1_r100", "fedavg", seeds,
             params={"rounds": 100, "local_epochs": 1}),
        _cfg(out_root, "e4_r25", "fedavg", seeds,
             params={"rounds": 25, "local_epochs": 4}),
        _cfg(out_root, "drift_e100_r1", "fedavg", seeds,
             params={"rounds": 1, "local_epochs": 100}),
        _cfg(out_root, "e1_r100_iid", "fedavg", seeds,
             params={"rounds": 100, "local_epochs": 1},
             transforms=[{"name": "repartition_iid"}]),
    ]
    _run_bundle(out_root, configs, jobs, "fig4d.csv")


def preset_fig5cd(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Subgroup training: female-only and age-banded federations plus a control."""
    fed = {"rounds": 30, "local_epochs": 1}
    configs = [
        _cfg(out_root, "train_female", "fedavg", seeds, params=fed,
             transforms=[{"name": "filter_subgroup", "predicate": "sex_f"}],
             report_subgroups=True),
        _cfg(out_root, "train_age_lt_55", "fedavg", seeds, params=fed,
             transforms=[{"name": "filter_subgroup", "predicate": "age_lt_55"}],
             report_subgroups=True),
        _cfg(out_root, "train_age_ge_55", "fedavg", seeds, params=fed,
             transforms=[{"name": "filter_subgroup", "predicate": "age_ge_55"}],
             report_subgroups=True),
        _cfg(out_root, "train_female_control", "fedavg", seeds, params=fed,
             cohort="default_no_sex_shift",
             transforms=[{"name": "filter_subgroup", "predicate": "sex_f"}],
             report_subgroups=True),
    ]
    _run_bundle(out_root, configs, jobs, "fig5cd.csv")
    _write_fig5cd_gaps(out_root, configs)


def _write_fig5cd_gaps(out_root: Path, configs: Sequence[ExperimentConfig]) -> None:
    rows = []
    for cfg in configs:
        for seed in cfg.seeds:
            path = out_root / cfg.name / f"seed_{seed}" / "subgroup_report.csv"
            values: dict[tuple[str, str], float] = {}
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.reader(fh)
                next(reader)
                for group, metric, value in reader:
                    values[(group, metric)] = float(value)
            rows.append(
                [cfg.name, seed,
                 values.get(("F", "wavg"), float("nan")),
                 values.get(("M", "wavg"), float("nan")),
                 values.get(("age_lt_55", "wavg"), float("nan")),
                 values.get(("age_ge_55", "wavg"), float("nan"))]
            )
    with open(out_root / "fig5cd_subgroups.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment", "seed", "wavg_F", "wavg_M",
                         "wavg_age_lt_55", "wavg_age_ge_55"])
        for row in rows:
            writer.writerow([row[0], row[1], *(repr(v) for v in row[2:])])


def preset_embeddings(out_root: Path, seeds: Sequence[int], jobs: int) -> None:
    """Train on the first ten sites and export penultimate activations for all holdouts."""
    excluded = [f"site{i:02d}" for i in range(11, 17)]
    configs = [
        _cfg(out_root, "embeddings", "fedavg", seeds,
             params={"rounds": 30, "exclude_sites": excluded},
             export_embeddings=True),
    ]
    _run_bundle(out_root, configs, jobs, "embeddings_summary.csv")


PRESETS: dict[str, Callable[[Path, Sequence[int], int], None]] = {
    "table2": preset_table2,
    "fig_s1": preset_fig_s1,
    "fig3b": preset_fig3b,
    "fig4_c_sweep": preset_fig4_c_sweep,
    "fig4c": preset_fig4c,
    "fig4d": preset_fig4d,
    "fig5cd": preset_fig5cd,
    "embeddings": preset_embeddings,
}


def run_preset(
    name: str, out_dir: str, seeds: Sequence[int] | None = None, jobs: int = 1
) -> Path:
    """Run a named preset; returns the directory holding its artifacts."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r} (valid: {', '.join(sorted(PRESETS))})")
    out_root = Path(out_dir) / name
    out_root.mkdir(parents=True, exist_ok=True)
    PRESETS[name](out_root, tuple(seeds) if seeds else DEFAULT_SEEDS, jobs)
    return out_root
