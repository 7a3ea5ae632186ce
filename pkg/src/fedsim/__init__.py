"""Deterministic simulator of collaborative training strategies on multi-site cohorts.

Strategies: per-site siloed training (optionally pretrained), centralized data
sharing, federated averaging with client sampling, and incremental site-to-site
traversal (single-pass and cyclic). Cohorts are synthetic, with explicit
heterogeneity knobs that mirror real multi-hospital skew.
"""

from .augment import (
    AugmentationPlan,
    GeneratorModel,
    equalize_classes,
    fit_generator,
    plan_equalization,
    synthesize,
)
from .cohort import (
    CohortConfig,
    CohortError,
    Example,
    SiteDataset,
    SiteProfile,
    default_cohort_config,
    filter_subgroup,
    generate_cohort,
    load_cohort,
    repartition_iid,
    save_cohort,
    split_sites_k_ways,
)
from .evaluation import (
    CrossMatrix,
    MetricsReport,
    cross_evaluate,
    evaluate,
    export_embeddings,
    fleet_metrics,
    prepare_eval_sets,
    subgroup_report,
    summarize,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    RunManifest,
    run_experiment,
    validate_config,
)
from .federation import (
    FederationConfig,
    RoundLog,
    aggregate_weighted,
    decode_weights,
    encode_weights,
    run_cds,
    run_fedavg,
    run_siloed,
    sample_active_sites,
)
from .incremental import PathSchedule, VisitLog, order_by_size, run_ciil, run_iil
from .nn import (
    AdamState,
    Gradients,
    ModelSpec,
    ParameterVector,
    adam_step,
    backward,
    cross_entropy,
    forward,
    fresh_adam_state,
    init_model,
    train_local_epochs,
)
from .presets import PRESETS, run_preset

__version__ = "0.1.0"
