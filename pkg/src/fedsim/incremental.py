"""Incremental site-to-site training: one model walks an ordered site path.

Unlike federated averaging there is no server and no aggregation; the model
weights and the optimizer state are handed from site to site. Each visit is
exactly one local epoch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import SiteDataset
from .evaluation import MetricsReport, fleet_metrics, prepare_eval_sets
from .federation import _local_stream, site_train_arrays
from .nn import AdamState, ModelSpec, ParameterVector, fresh_adam_state, init_model, train_local_epochs


@dataclass(frozen=True)
class PathSchedule:
    """Ordered site traversal; rounds=1 is a single pass (IIL), more is cyclic (CIIL)."""

    site_ids: tuple[str, ...]
    rounds: int = 1
    include_public: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "site_ids", tuple(self.site_ids))
        if not self.site_ids:
            raise ValueError("path must visit at least one site")
        if len(set(self.site_ids)) != len(self.site_ids):
            raise ValueError("path must not repeat a site within a round")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")


@dataclass(eq=False)
class TraversalState:
    """Weights plus optimizer state carried between sites, with the current position."""

    params: ParameterVector
    adam: AdamState
    position: tuple[int, int]  # (round, path index)


@dataclass(eq=False)
class VisitLog:
    """Metrics after one site visit; holdout metrics cover all sites, not just the visited one."""

    round_index: int
    path_index: int
    site_id: str
    local_loss: float
    metrics: MetricsReport


def order_by_size(sites: Sequence[SiteDataset], direction: str) -> PathSchedule:
    """Single-pass path ordered by training-set size; ties break lexicographically."""
    if not sites:
        raise ValueError("no sites to order")
    if direction not in ("asc", "desc"):
        raise ValueError("direction must be 'asc' or 'desc'")
    if direction == "asc":
        ordered = sorted(sites, key=lambda s: (s.train_size, s.site_id))
    else:
        ordered = sorted(sites, key=lambda s: (-s.train_size, s.site_id))
    return PathSchedule(tuple(s.site_id for s in ordered), rounds=1)


def _run_path(
    path: PathSchedule,
    sites: Sequence[SiteDataset],
    spec: ModelSpec,
    seed: int,
    batch_size: int,
) -> tuple[ParameterVector, list[VisitLog]]:
    site_map = {site.site_id: site for site in sites}
    missing = [sid for sid in path.site_ids if sid not in site_map]
    if missing:
        raise ValueError(f"path visits unknown sites: {missing}")
    data = {sid: site_train_arrays(site_map[sid]) for sid in path.site_ids}
    eval_sets = prepare_eval_sets(sites)
    base = _local_stream(seed)

    state = TraversalState(
        params=init_model(spec, seed),
        adam=fresh_adam_state(spec.num_params()),
        position=(0, 0),
    )
    logs: list[VisitLog] = []
    visit = 0
    for round_index in range(path.rounds):
        for path_index, sid in enumerate(path.site_ids):
            state.position = (round_index, path_index)
            params, adam, history = train_local_epochs(
                state.params,
                spec,
                state.adam,
                data[sid],
                epochs=1,
                batch_size=batch_size,
                seed=base,
                epoch_offset=visit,
            )
            state.params = params
            state.adam = adam
            visit += 1
            logs.append(
                VisitLog(round_index, path_index, sid, history[-1],
                         fleet_metrics(params, spec, eval_sets))
            )
    return state.params, logs


def run_iil(
    path: PathSchedule,
    sites: Sequence[SiteDataset],
    spec: ModelSpec,
    seed: int,
    batch_size: int = 32,
) -> tuple[ParameterVector, list[VisitLog]]:
    """Single pass over the path: one local epoch per site, state carried throughout."""
    if path.rounds != 1:
        raise ValueError("IIL uses a single round; use run_ciil for multiple")
    return _run_path(path, sites, spec, seed, batch_size)


def run_ciil(
    path: PathSchedule,
    sites: Sequence[SiteDataset],
    spec: ModelSpec,
    seed: int,
    batch_size: int = 32,
) -> tuple[ParameterVector, list[VisitLog]]:
    """Cyclic traversal: the IIL pass repeated path.rounds times without resets."""
    return _run_path(path, sites, spec, seed, batch_size)
