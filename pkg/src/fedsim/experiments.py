"""Declarative experiment runner: config parsing/validation, dispatch, reports.

Configs are JSON. Every run is fully determined by (config, seed): named
cohorts regenerate per seed, transforms and strategies derive their streams
from the run seed, and all report files are byte-stable across reruns.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .augment import (
    DEFAULT_NOISE_FACTOR,
    equalize_classes,
    fit_generator,
    synthetic_only_training_set,
)
from .cohort import (
    PUBLIC_SITE_ID,
    CohortConfig,
    CohortError,
    SiteDataset,
    SiteProfile,
    SUBGROUP_PREDICATES,
    default_cohort_config,
    filter_subgroup,
    generate_cohort,
    load_cohort,
    repartition_iid,
    save_cohort,
    split_sites_k_ways,
)
from .evaluation import (
    MetricsReport,
    cross_evaluate,
    export_embeddings,
    fleet_metrics,
    prepare_eval_sets,
    subgroup_report,
    unweighted_mean,
    weighted_mean,
    write_cross_matrix_csv,
    write_embedding_groups_csv,
    write_embeddings_csv,
    write_metrics_report_csv,
    read_metrics_report_csv,
)
from .federation import FederationConfig, RoundLog, run_cds, run_fedavg, run_siloed
from .incremental import PathSchedule, VisitLog, order_by_size, run_ciil, run_iil
from .nn import ModelSpec, ParameterVector
from .seeding import derive_seed

STRATEGIES = (
    "siloed",
    "siloed_pretrained",
    "cds",
    "fedavg",
    "fedavg_synth_only",
    "fedavg_real_plus_synth",
    "iil",
    "ciil",
)

TRANSFORM_NAMES = ("repartition_iid", "split_k_ways", "filter_subgroup", "equalize_classes")

NAMED_COHORTS = ("default", "default_no_sex_shift")

DEFAULT_MODEL = {
    "input_dim": 16,
    "hidden_dims": [32],
    "num_classes": 3,
    "activation": "relu",
}

_FEDAVG_DEFAULTS = {
    "rounds": 40,
    "local_epochs": 1,
    "client_fraction": 1.0,
    "batch_size": 32,
    "weighting": "by_train_size",
    "exclude_sites": [],
}

STRATEGY_DEFAULTS: dict[str, dict[str, Any]] = {
    "siloed": {"epochs": 12, "batch_size": 32, "exclude_sites": []},
    "siloed_pretrained": {
        "epochs": 12,
        "batch_size": 32,
        "pretrain_epochs": 12,
        "public_site": PUBLIC_SITE_ID,
        "exclude_sites": [],
    },
    "cds": {"epochs": 12, "batch_size": 32},
    "fedavg": dict(_FEDAVG_DEFAULTS),
    "fedavg_synth_only": {
        **_FEDAVG_DEFAULTS,
        "public_site": PUBLIC_SITE_ID,
        "noise_factor": DEFAULT_NOISE_FACTOR,
    },
    "fedavg_real_plus_synth": {
        **_FEDAVG_DEFAULTS,
        "public_site": PUBLIC_SITE_ID,
        "noise_factor": DEFAULT_NOISE_FACTOR,
    },
    "iil": {
        "direction": "asc",
        "path": None,
        "batch_size": 32,
        "include_public": True,
        "public_site": PUBLIC_SITE_ID,
    },
    "ciil": {
        "direction": "desc",
        "path": None,
        "rounds": 3,
        "batch_size": 32,
        "include_public": True,
        "public_site": PUBLIC_SITE_ID,
    },
}

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class ConfigError(ValueError):
    """Invalid experiment config; carries the full list of field errors."""

    def __init__(self, errors: Sequence[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass(frozen=True, eq=True)
class ExperimentConfig:
    name: str
    strategy: str
    cohort: Any = "default"  # named cohort, path to a cohort file, or inline dict
    model: Mapping[str, Any] = field(default_factory=lambda: dict(DEFAULT_MODEL))
    params: Mapping[str, Any] = field(default_factory=dict)
    transforms: tuple[Mapping[str, Any], ...] = ()
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    output_dir: str = "runs"
    report_subgroups: bool = False
    export_embeddings: bool = False


@dataclass(eq=False)
class RunManifest:
    config_hash: str
    seed: int
    strategy: str
    artifacts: dict[str, str]
    duration_seconds: float


# ---------------------------------------------------------------------------
# Validation


def _check_positive_int(errors: list[str], params: Mapping, key: str, path: str) -> None:
    value = params.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        errors.append(f"{path}.{key}: must be a positive integer")


def _validate_params(strategy: str, raw: Mapping[str, Any], errors: list[str]) -> dict:
    defaults = STRATEGY_DEFAULTS[strategy]
    unknown = set(raw) - set(defaults)
    for key in sorted(unknown):
        errors.append(f"params.{key}: unknown parameter for strategy {strategy!r}")
    params = {**defaults, **{k: v for k, v in raw.items() if k in defaults}}

    if strategy in ("siloed", "siloed_pretrained", "cds"):
        _check_positive_int(errors, params, "epochs", "params")
        _check_positive_int(errors, params, "batch_size", "params")
        if strategy == "siloed_pretrained":
            _check_positive_int(errors, params, "pretrain_epochs", "params")
    if strategy.startswith("fedavg"):
        _check_positive_int(errors, params, "rounds", "params")
        _check_positive_int(errors, params, "local_epochs", "params")
        _check_positive_int(errors, params, "batch_size", "params")
        c = params.get("client_fraction")
        if not isinstance(c, (int, float)) or isinstance(c, bool) or not 0.0 < float(c) <= 1.0:
            errors.append("params.client_fraction: must be in (0,1]")
        if params.get("weighting") not in ("by_train_size", "uniform"):
            errors.append("params.weighting: must be 'by_train_size' or 'uniform'")
    if strategy in ("iil", "ciil"):
        _check_positive_int(errors, params, "batch_size", "params")
        if params.get("path") is not None:
            path = params["path"]
            if not isinstance(path, (list, tuple)) or not all(isinstance(s, str) for s in path):
                errors.append("params.path: must be a list of site ids")
        elif params.get("direction") not in ("asc", "desc"):
            errors.append("params.direction: must be 'asc' or 'desc'")
        if strategy == "ciil":
            _check_positive_int(errors, params, "rounds", "params")
    return params


def _validate_transforms(raw: Sequence[Any], errors: list[str]) -> tuple[dict, ...]:
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, Mapping) or "name" not in entry:
            errors.append(f"transforms[{i}]: must be an object with a 'name' field")
            continue
        name = entry["name"]
        if name not in TRANSFORM_NAMES:
            errors.append(
                f"transforms[{i}].name: unknown transform {name!r} "
                f"(valid: {', '.join(TRANSFORM_NAMES)})"
            )
            continue
        entry = dict(entry)
        if name == "split_k_ways" and entry.get("k") not in (2, 3):
            errors.append(f"transforms[{i}].k: must be 2 or 3")
        if name == "filter_subgroup" and entry.get("predicate") not in SUBGROUP_PREDICATES:
            errors.append(
                f"transforms[{i}].predicate: must be one of "
                f"{', '.join(sorted(SUBGROUP_PREDICATES))}"
            )
        if name == "equalize_classes":
            entry.setdefault("public_site", PUBLIC_SITE_ID)
            entry.setdefault("noise_factor", DEFAULT_NOISE_FACTOR)
            nf = entry["noise_factor"]
            if not isinstance(nf, (int, float)) or isinstance(nf, bool) or nf < 0:
                errors.append(f"transforms[{i}].noise_factor: must be nonnegative")
        out.append(entry)
    return tuple(out)


def cohort_config_from_dict(raw: Mapping[str, Any]) -> CohortConfig:
    """Build an inline CohortConfig; raises CohortError/ValueError on bad fields."""
    profiles = []
    for entry in raw["sites"]:
        profiles.append(
            SiteProfile(
                site_id=entry["site_id"],
                n_patients=int(entry["n_patients"]),
                class_mix=tuple(entry["class_mix"]),
                style_offset=np.asarray(entry.get("style_offset", np.zeros(raw["input_dim"]))),
                sex_shift=np.asarray(entry.get("sex_shift", np.zeros(raw["input_dim"]))),
                noise_scale=float(entry.get("noise_scale", 1.0)),
                sex_ratio_f=float(entry.get("sex_ratio_f", 0.5)),
                age_mean=float(entry.get("age_mean", 55.0)),
                age_sd=float(entry.get("age_sd", 15.0)),
                severity_scale=float(entry.get("severity_scale", 1.0)),
            )
        )
    return CohortConfig(
        sites=tuple(profiles),
        input_dim=int(raw["input_dim"]),
        class_anchors=np.asarray(raw["class_anchors"]),
        global_seed=int(raw.get("global_seed", 0)),
        sex_shift_older_scale=float(raw.get("sex_shift_older_scale", 1.0)),
    )


def _validate_cohort(raw: Any, errors: list[str]) -> Any:
    if isinstance(raw, str):
        return raw
    if isinstance(raw, Mapping):
        try:
            cohort_config_from_dict(raw)
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"cohort: invalid inline cohort config ({exc})")
        return dict(raw)
    errors.append("cohort: must be a cohort name, a file path, or an inline object")
    return raw


def config_from_dict(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Normalize and validate a raw config mapping; all errors reported at once."""
    errors: list[str] = []
    if not isinstance(raw, Mapping):
        raise ConfigError(["config: must be a JSON object"])
    known = {"name", "strategy", "cohort", "model", "params", "transforms",
             "seeds", "output_dir", "report_subgroups", "export_embeddings"}
    for key in sorted(set(raw) - known):
        errors.append(f"{key}: unknown config field")

    name = raw.get("name")
    if not isinstance(name, str) or not name:
        errors.append("name: must be a nonempty string")
        name = "experiment"

    strategy = raw.get("strategy")
    if strategy not in STRATEGIES:
        errors.append(
            f"strategy: unknown strategy {strategy!r} (valid: {', '.join(STRATEGIES)})"
        )
        raise ConfigError(errors)

    model = {**DEFAULT_MODEL, **dict(raw.get("model", {}))}
    try:
        _model_spec(model)
    except (ValueError, TypeError) as exc:
        errors.append(f"model: {exc}")

    params = _validate_params(strategy, raw.get("params", {}), errors)
    transforms = _validate_transforms(raw.get("transforms", []), errors)
    cohort = _validate_cohort(raw.get("cohort", "default"), errors)

    seeds_raw = raw.get("seeds", list(DEFAULT_SEEDS))
    if (
        not isinstance(seeds_raw, (list, tuple))
        or not seeds_raw
        or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds_raw)
    ):
        errors.append("seeds: must be a nonempty list of integers")
        seeds_raw = list(DEFAULT_SEEDS)

    output_dir = raw.get("output_dir", "runs")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append("output_dir: must be a nonempty string")
        output_dir = "runs"

    for flag in ("report_subgroups", "export_embeddings"):
        if not isinstance(raw.get(flag, False), bool):
            errors.append(f"{flag}: must be a boolean")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        name=name,
        strategy=strategy,
        cohort=cohort,
        model=model,
        params=params,
        transforms=transforms,
        seeds=tuple(seeds_raw),
        output_dir=output_dir,
        report_subgroups=bool(raw.get("report_subgroups", False)),
        export_embeddings=bool(raw.get("export_embeddings", False)),
    )


def validate_config(raw_text: str) -> ExperimentConfig:
    """Parse and validate a JSON config; parse errors carry line and column."""
    try:
        raw = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            [f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    return config_from_dict(raw)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON form; parsing it back yields an equal config."""
    payload = {
        "name": cfg.name,
        "strategy": cfg.strategy,
        "cohort": cfg.cohort,
        "model": dict(cfg.model),
        "params": dict(cfg.params),
        "transforms": [dict(t) for t in cfg.transforms],
        "seeds": list(cfg.seeds),
        "output_dir": cfg.output_dir,
        "report_subgroups": cfg.report_subgroups,
        "export_embeddings": cfg.export_embeddings,
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Execution


def _model_spec(model: Mapping[str, Any]) -> ModelSpec:
    return ModelSpec(
        input_dim=int(model["input_dim"]),
        hidden_dims=tuple(model["hidden_dims"]),
        num_classes=int(model["num_classes"]),
        activation=str(model["activation"]),
    )


def resolve_cohort(cohort: Any, run_seed: int) -> list[SiteDataset]:
    """Materialize the cohort for one run seed.

    Named and inline cohorts regenerate per seed (fresh draws of the same
    multi-site world); file cohorts are frozen data shared by all seeds.
    """
    if isinstance(cohort, str):
        if cohort == "default":
            return generate_cohort(default_cohort_config(run_seed))
        if cohort == "default_no_sex_shift":
            return generate_cohort(default_cohort_config(run_seed, sex_shift_scale=0.0))
        return load_cohort(cohort)
    base = cohort_config_from_dict(cohort)
    seeded = replace(base, global_seed=derive_seed(base.global_seed, "run", run_seed))
    return generate_cohort(seeded)


def apply_transforms(
    sites: list[SiteDataset], transforms: Sequence[Mapping[str, Any]], seed: int
) -> list[SiteDataset]:
    for i, t in enumerate(transforms):
        tseed = derive_seed(seed, "transform", i, t["name"])
        if t["name"] == "repartition_iid":
            sites = repartition_iid(sites, tseed)
        elif t["name"] == "split_k_ways":
            sites = split_sites_k_ways(sites, t["k"], tseed)
        elif t["name"] == "filter_subgroup":
            sites = filter_subgroup(sites, t["predicate"])
        elif t["name"] == "equalize_classes":
            public_id = t.get("public_site", PUBLIC_SITE_ID)
            public = _find_site(sites, public_id)
            gen = fit_generator(public)
            include_public = t.get("include_public", True)
            sites = [
                site
                if (site.site_id == public_id and not include_public)
                else equalize_classes(site, gen, derive_seed(tseed, site.site_id),
                                      t.get("noise_factor", DEFAULT_NOISE_FACTOR))
                for site in sites
            ]
    return sites


def _find_site(sites: Sequence[SiteDataset], site_id: str) -> SiteDataset:
    for site in sites:
        if site.site_id == site_id:
            return site
    raise CohortError(f"site {site_id!r} not present in cohort")


def _round_log_record(log: RoundLog) -> dict:
    return {
        "round": log.round_index,
        "active": list(log.active_site_ids),
        "local_losses": {k: log.local_losses[k] for k in sorted(log.local_losses)},
        "wavg": log.metrics.wavg,
        "avg": log.metrics.avg,
        "macro_f1": log.metrics.macro_f1,
        "per_site_accuracy": {
            k: log.metrics.per_site_accuracy[k] for k in sorted(log.metrics.per_site_accuracy)
        },
    }


def _visit_log_record(log: VisitLog) -> dict:
    return {
        "round": log.round_index,
        "path_index": log.path_index,
        "site_id": log.site_id,
        "local_loss": log.local_loss,
        "wavg": log.metrics.wavg,
        "avg": log.metrics.avg,
        "macro_f1": log.metrics.macro_f1,
        "per_site_accuracy": {
            k: log.metrics.per_site_accuracy[k] for k in sorted(log.metrics.per_site_accuracy)
        },
    }


def _write_jsonl(records: Sequence[Mapping], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _fedavg_training_sites(
    cfg: ExperimentConfig, sites: list[SiteDataset], seed: int
) -> list[SiteDataset]:
    """Site list the federation trains on (synthetic variants exclude the public site)."""
    strategy = cfg.strategy
    excluded = set(cfg.params.get("exclude_sites", ()))
    sites = [s for s in sites if s.site_id not in excluded]
    if strategy == "fedavg":
        return sites
    public_id = cfg.params["public_site"]
    public = _find_site(sites, public_id)
    gen = fit_generator(public)
    noise_factor = cfg.params["noise_factor"]
    rest = [s for s in sites if s.site_id != public_id]
    sseed = derive_seed(seed, "strategy-synth")
    if strategy == "fedavg_synth_only":
        return [
            synthetic_only_training_set(s, gen, derive_seed(sseed, s.site_id), noise_factor)
            for s in rest
        ]
    return [
        equalize_classes(s, gen, derive_seed(sseed, s.site_id), noise_factor) for s in rest
    ]


def _build_path(cfg: ExperimentConfig, sites: list[SiteDataset]) -> PathSchedule:
    params = cfg.params
    include_public = bool(params["include_public"])
    candidates = sites
    if not include_public:
        candidates = [s for s in sites if s.site_id != params["public_site"]]
        if not candidates:
            raise CohortError("path excludes every site")
    if params.get("path"):
        schedule = PathSchedule(tuple(params["path"]), rounds=1)
    else:
        schedule = order_by_size(candidates, params["direction"])
    rounds = params["rounds"] if cfg.strategy == "ciil" else 1
    return PathSchedule(schedule.site_ids, rounds=rounds, include_public=include_public)


def run_one_seed(cfg: ExperimentConfig, seed: int) -> RunManifest:
    """Execute one (config, seed) pipeline and write its artifacts."""
    started = time.perf_counter()
    out = Path(cfg.output_dir) / cfg.name / f"seed_{seed}"
    out.mkdir(parents=True, exist_ok=True)
    spec = _model_spec(cfg.model)

    original = resolve_cohort(cfg.cohort, seed)
    sites = apply_transforms(list(original), cfg.transforms, seed)
    eval_sets = prepare_eval_sets(sites)

    artifacts: dict[str, str] = {}
    final_params: ParameterVector

    if cfg.strategy in ("siloed", "siloed_pretrained"):
        params = cfg.params
        train_sites = [s for s in sites if s.site_id not in set(params["exclude_sites"])]
        pretrain = None
        if cfg.strategy == "siloed_pretrained":
            public = _find_site(sites, params["public_site"])
            pretrain = run_cds([public], spec, params["pretrain_epochs"],
                               params["batch_size"], seed)
            train_sites = [s for s in train_sites if s.site_id != params["public_site"]]
        models = run_siloed(train_sites, spec, params["epochs"], seed,
                            pretrain_from=pretrain, batch_size=params["batch_size"])
        matrix = cross_evaluate(models, sites, spec)
        write_cross_matrix_csv(matrix, out / "cross_matrix.csv")
        artifacts["cross_matrix"] = str(out / "cross_matrix.csv")
        sizes = {sid: len(y) for sid, (_, y) in eval_sets.items()}
        per_model = {
            mid: weighted_mean(
                dict(zip(matrix.site_ids, matrix.values[i])), sizes
            )
            for i, mid in enumerate(matrix.model_ids)
        }
        _write_jsonl(
            [
                {"model_id": mid, "wavg": per_model[mid],
                 "avg": unweighted_mean(dict(zip(matrix.site_ids, matrix.values[i])))}
                for i, mid in enumerate(matrix.model_ids)
            ],
            out / "models_summary.jsonl",
        )
        artifacts["models_summary"] = str(out / "models_summary.jsonl")
        best = max(per_model, key=lambda mid: (per_model[mid], mid))
        final_params = models[best]
    elif cfg.strategy == "cds":
        final_params = run_cds(sites, spec, cfg.params["epochs"], cfg.params["batch_size"], seed)
    elif cfg.strategy.startswith("fedavg"):
        train_sites = _fedavg_training_sites(cfg, sites, seed)
        fed = FederationConfig(
            rounds=cfg.params["rounds"],
            local_epochs=cfg.params["local_epochs"],
            client_fraction=float(cfg.params["client_fraction"]),
            batch_size=cfg.params["batch_size"],
            seed=seed,
            weighting=cfg.params["weighting"],
        )
        final_params, logs = run_fedavg(fed, train_sites, spec)
        _write_jsonl([_round_log_record(l) for l in logs], out / "round_log.jsonl")
        artifacts["round_log"] = str(out / "round_log.jsonl")
    else:  # iil / ciil
        schedule = _build_path(cfg, sites)
        runner = run_ciil if cfg.strategy == "ciil" else run_iil
        final_params, visits = runner(schedule, sites, spec, seed,
                                      batch_size=cfg.params["batch_size"])
        _write_jsonl([_visit_log_record(v) for v in visits], out / "visit_log.jsonl")
        artifacts["visit_log"] = str(out / "visit_log.jsonl")

    report = fleet_metrics(final_params, spec, eval_sets)
    write_metrics_report_csv(report, out / "metrics_report.csv")
    artifacts["metrics_report"] = str(out / "metrics_report.csv")

    if cfg.report_subgroups:
        groups = subgroup_report(final_params, spec, original)
        _write_subgroups_csv(groups, out / "subgroup_report.csv")
        artifacts["subgroup_report"] = str(out / "subgroup_report.csv")

    if cfg.export_embeddings:
        examples = [ex for site in original for ex in site.holdout]
        export = export_embeddings(final_params, spec, examples)
        write_embeddings_csv(export, out / "embeddings.csv")
        write_embedding_groups_csv(export, out / "embedding_groups.csv")
        artifacts["embeddings"] = str(out / "embeddings.csv")
        artifacts["embedding_groups"] = str(out / "embedding_groups.csv")

    manifest = RunManifest(
        config_hash=config_hash(cfg),
        seed=seed,
        strategy=cfg.strategy,
        artifacts=artifacts,
        duration_seconds=time.perf_counter() - started,
    )
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "config_hash": manifest.config_hash,
                "seed": manifest.seed,
                "strategy": manifest.strategy,
                "artifacts": manifest.artifacts,
                "duration_seconds": manifest.duration_seconds,
            },
            fh,
            sort_keys=True,
            indent=2,
        )
    return manifest


def _write_subgroups_csv(groups: Mapping[str, MetricsReport], path: Path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subgroup", "metric", "value"])
        for key in sorted(groups):
            report = groups[key]
            writer.writerow([key, "wavg", repr(report.wavg)])
            writer.writerow([key, "avg", repr(report.avg)])
            writer.writerow([key, "macro_f1", repr(report.macro_f1)])
            writer.writerow([key, "holdout_size", str(sum(report.site_sizes.values()))])


def _summarize_seeds(cfg: ExperimentConfig, manifests: Sequence[RunManifest]) -> Path:
    # Cross-seed statistics are recomputed from the per-seed report files on
    # disk, not from in-memory results.
    root = Path(cfg.output_dir) / cfg.name
    rows = []
    for manifest in manifests:
        report = read_metrics_report_csv(Path(manifest.artifacts["metrics_report"]))
        rows.append((manifest.seed, report.wavg, report.avg, report.macro_f1))
    rows.sort()
    lines = [
        f"experiment: {cfg.name}",
        f"strategy: {cfg.strategy}",
        f"config_hash: {config_hash(cfg)}",
        f"seeds: {','.join(str(r[0]) for r in rows)}",
    ]
    for label, idx in (("wavg", 1), ("avg", 2), ("macro_f1", 3)):
        values = np.array([r[idx] for r in rows])
        std = values.std(ddof=1) if len(values) > 1 else 0.0
        lines.append(f"{label}: mean={values.mean()!r} std={float(std)!r}")
    for seed, wavg, avg, f1 in rows:
        lines.append(f"seed {seed}: wavg={wavg!r} avg={avg!r} macro_f1={f1!r}")
    path = root / "summary.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[RunManifest]:
    """Run every seed of the experiment and write the cross-seed summary."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            manifests = list(pool.map(_run_seed_task, [(cfg, s) for s in cfg.seeds]))
    else:
        manifests = [run_one_seed(cfg, seed) for seed in cfg.seeds]
    _summarize_seeds(cfg, manifests)
    return manifests


def _run_seed_task(task: tuple[ExperimentConfig, int]) -> RunManifest:
    cfg, seed = task
    return run_one_seed(cfg, seed)


def export_cohort_file(cfg: ExperimentConfig, path: str) -> None:
    """Materialize the config's cohort for its first seed and save it."""
    sites = resolve_cohort(cfg.cohort, cfg.seeds[0])
    save_cohort(sites, path)
