"""FedAvg orchestration plus siloed and centralized (pooled) baselines.

Model exchange goes through an explicit wire codec that carries weights only;
optimizer state never leaves its site. All local-training randomness is keyed
by (run seed, round, epoch), so results are independent of execution order.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .cohort import SiteDataset
from .evaluation import MetricsReport, fleet_metrics, prepare_eval_sets
from .nn import (
    AdamState,
    ModelSpec,
    ParameterVector,
    fresh_adam_state,
    init_model,
    train_local_epochs,
)
from .seeding import derive_seed

WEIGHTINGS = ("by_train_size", "uniform")


@dataclass(frozen=True)
class FederationConfig:
    """FedAvg hyperparameters: rounds, local epochs, client fraction, weighting."""

    rounds: int
    local_epochs: int = 1
    client_fraction: float = 1.0
    batch_size: int = 32
    seed: int = 0
    weighting: str = "by_train_size"

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be a positive integer")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be a positive integer")
        if not 0.0 < self.client_fraction <= 1.0:
            raise ValueError("client_fraction must be in (0,1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        if self.weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")


@dataclass(eq=False)
class RoundLog:
    """Audit record for one reduction round (metrics are post-broadcast)."""

    round_index: int
    active_site_ids: tuple[str, ...]
    local_losses: dict[str, float]
    metrics: MetricsReport


# ---------------------------------------------------------------------------
# Wire codec. The payload carries the flat weight values and their layout,
# nothing else, which keeps optimizer state out of every inter-site message.


def encode_weights(params: ParameterVector) -> bytes:
    if not isinstance(params, ParameterVector):
        raise TypeError("only ParameterVector payloads can be sent between sites")
    payload = {
        "shape_index": {k: list(v) for k, v in params.shape_index.items()},
        "dtype": "float64",
        "values": base64.b64encode(np.ascontiguousarray(params.values).tobytes()).decode(),
    }
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def decode_weights(blob: bytes) -> ParameterVector:
    payload = json.loads(blob.decode("utf-8"))
    if set(payload) != {"shape_index", "dtype", "values"}:
        raise ValueError("unexpected fields in weight message")
    values = np.frombuffer(base64.b64decode(payload["values"]), dtype=payload["dtype"]).copy()
    shape_index = {k: tuple(v) for k, v in payload["shape_index"].items()}
    return ParameterVector(values, shape_index)


def sample_active_sites(
    site_ids: Sequence[str], client_fraction: float, round_index: int, seed: int
) -> tuple[str, ...]:
    """Draw ceil(C * n) sites without replacement, deterministic in (seed, round)."""
    if not 0.0 < client_fraction <= 1.0:
        raise ValueError("client_fraction must be in (0,1]")
    ids = sorted(site_ids)
    count = math.ceil(client_fraction * len(ids))
    if count >= len(ids):
        return tuple(ids)
    rng = np.random.default_rng(derive_seed(seed, "active", round_index))
    chosen = rng.choice(len(ids), size=count, replace=False)
    return tuple(sorted(ids[i] for i in chosen))


def aggregate_weighted(
    weighted_models: Sequence[tuple[ParameterVector, float]]
) -> ParameterVector:
    """Coordinatewise weighted average of parameter vectors.

    The result is clamped to the per-coordinate hull of the inputs, which keeps
    the convexity invariant exact: identical inputs aggregate to themselves
    bit-for-bit regardless of the weights.
    """
    if not weighted_models:
        raise ValueError("nothing to aggregate")
    first = weighted_models[0][0]
    for params, _ in weighted_models[1:]:
        if not params.same_layout(first):
            raise ValueError("models with different layouts cannot be aggregated")
    weights = np.array([w for _, w in weighted_models], dtype=np.float64)
    if (weights < 0).any():
        raise ValueError("weights must be nonnegative")
    if weights.sum() == 0:
        raise ValueError("at least one weight must be positive")
    stack = np.stack([p.values for p, _ in weighted_models])
    average = (weights[:, None] * stack).sum(axis=0) / weights.sum()
    clipped = np.clip(average, stack.min(axis=0), stack.max(axis=0))
    return ParameterVector(clipped, dict(first.shape_index))


def site_train_arrays(site: SiteDataset) -> tuple[np.ndarray, np.ndarray]:
    if not site.train:
        raise ValueError(f"site {site.site_id} has no training data")
    X = np.stack([ex.features for ex in site.train])
    y = np.array([ex.label for ex in site.train], dtype=int)
    return X, y


def _local_stream(seed: int) -> int:
    # One shared shuffle stream keyed by (seed, round * E + epoch). Keeping it
    # site-independent makes identical-data sites train identically and makes
    # a single-site federation bit-identical to siloed training.
    return derive_seed(seed, "local")


def run_siloed(
    sites: Sequence[SiteDataset],
    spec: ModelSpec,
    epochs: int,
    seed: int,
    pretrain_from: ParameterVector | None = None,
    batch_size: int = 32,
) -> dict[str, ParameterVector]:
    """Train one independent model per site on its local data only."""
    if not sites:
        raise ValueError("no sites to train")
    base = _local_stream(seed)
    models: dict[str, ParameterVector] = {}
    for site in sites:
        params = pretrain_from.copy() if pretrain_from is not None else init_model(spec, seed)
        state = fresh_adam_state(params.values.size)
        params, _, _ = train_local_epochs(
            params, spec, state, site_train_arrays(site), epochs, batch_size, base
        )
        models[site.site_id] = params
    return models


def run_cds(
    sites: Sequence[SiteDataset],
    spec: ModelSpec,
    epochs: int,
    batch_size: int,
    seed: int,
) -> ParameterVector:
    """Centralized baseline: train one model on the union of all training sets."""
    pooled = [ex for site in sites for ex in site.train]
    if not pooled:
        raise ValueError("pooled training set is empty")
    X = np.stack([ex.features for ex in pooled])
    y = np.array([ex.label for ex in pooled], dtype=int)
    params = init_model(spec, seed)
    state = fresh_adam_state(params.values.size)
    params, _, _ = train_local_epochs(
        params, spec, state, (X, y), epochs, batch_size, _local_stream(seed)
    )
    return params


def run_fedavg(
    config: FederationConfig,
    sites: Sequence[SiteDataset],
    spec: ModelSpec,
    on_round: Callable[[RoundLog, ParameterVector, Mapping[str, ParameterVector]], None]
    | None = None,
) -> tuple[ParameterVector, list[RoundLog]]:
    """Federated averaging over the given sites.

    Every round: sample active sites, train each from the broadcast weights with
    its own persistent Adam state, average the returned weights (by training size
    or uniformly), then broadcast. Optimizer state is never transmitted; inactive
    sites keep theirs stale. Holdout metrics are logged after each broadcast.
    """
    if not sites:
        raise ValueError("no sites to federate")
    site_map = {site.site_id: site for site in sites}
    if len(site_map) != len(sites):
        raise ValueError("site ids must be unique")
    data = {sid: site_train_arrays(site) for sid, site in site_map.items()}
    eval_sets = prepare_eval_sets(sites)
    num_params = spec.num_params()
    adam = {sid: fresh_adam_state(num_params) for sid in site_map}
    base = _local_stream(config.seed)

    server = init_model(spec, config.seed)
    wire = encode_weights(server)
    resident = {sid: decode_weights(wire) for sid in site_map}

    logs: list[RoundLog] = []
    for round_index in range(config.rounds):
        active = sample_active_sites(
            list(site_map), config.client_fraction, round_index, config.seed
        )
        updates: list[tuple[ParameterVector, float]] = []
        local_losses: dict[str, float] = {}
        for sid in active:
            params, state, history = train_local_epochs(
                resident[sid],
                spec,
                adam[sid],
                data[sid],
                config.local_epochs,
                config.batch_size,
                base,
                epoch_offset=round_index * config.local_epochs,
            )
            adam[sid] = state
            weight = float(len(data[sid][1])) if config.weighting == "by_train_size" else 1.0
            updates.append((decode_weights(encode_weights(params)), weight))
            local_losses[sid] = history[-1]
        server = aggregate_weighted(updates)
        wire = encode_weights(server)
        resident = {sid: decode_weights(wire) for sid in site_map}
        log = RoundLog(round_index, active, local_losses, fleet_metrics(server, spec, eval_sets))
        logs.append(log)
        if on_round is not None:
            on_round(log, server, resident)
    return server, logs
