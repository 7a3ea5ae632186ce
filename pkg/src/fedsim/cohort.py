"""Synthetic multi-site cohorts: generation, partition transforms, and file IO.

Sites differ along explicit, parametric heterogeneity axes: size, class mix
(including missing classes), an additive per-site style offset, a multiplicative
severity scale on the class anchors, noise level, and demographic (sex/age)
composition with a sex-conditional feature shift.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .seeding import derive_seed

log = logging.getLogger(__name__)

CLASS_NAMES = ("normal", "PNA", "COVID")
NUM_CLASSES = 3
SEXES = ("F", "M")
AGE_THRESHOLD = 55

DEFAULT_INPUT_DIM = 16
PUBLIC_SITE_ID = "site01"


class CohortError(ValueError):
    """Raised when a cohort config or transform cannot produce a usable cohort."""


@dataclass(frozen=True, eq=False)
class Example:
    """One patient record: feature vector, class label, and demographics."""

    features: np.ndarray
    label: int
    sex: str
    age: int
    site_id: str
    synthetic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        if self.label not in range(NUM_CLASSES):
            raise ValueError(f"label must be in [0, {NUM_CLASSES})")
        if self.sex not in SEXES:
            raise ValueError("sex must be 'F' or 'M'")
        if self.age < 0:
            raise ValueError("age must be nonnegative")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")


@dataclass(frozen=True, eq=False)
class SiteProfile:
    """Generative description of one site's data distribution."""

    site_id: str
    n_patients: int
    class_mix: tuple[float, float, float]
    style_offset: np.ndarray
    sex_shift: np.ndarray
    noise_scale: float = 1.0
    sex_ratio_f: float = 0.5
    age_mean: float = 55.0
    age_sd: float = 15.0
    severity_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.n_patients < 2:
            raise ValueError("n_patients must be at least 2")
        mix = np.asarray(self.class_mix, dtype=np.float64)
        if mix.shape != (NUM_CLASSES,) or (mix < 0).any():
            raise ValueError("class_mix must be 3 nonnegative reals")
        total = mix.sum()
        if total <= 0:
            raise ValueError("class_mix must have positive mass")
        object.__setattr__(self, "class_mix", tuple(mix / total))
        object.__setattr__(self, "style_offset", np.asarray(self.style_offset, dtype=np.float64))
        object.__setattr__(self, "sex_shift", np.asarray(self.sex_shift, dtype=np.float64))
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")
        if self.severity_scale <= 0:
            raise ValueError("severity_scale must be positive")
        if not 0.0 <= self.sex_ratio_f <= 1.0:
            raise ValueError("sex_ratio_f must be in [0, 1]")


@dataclass(frozen=True, eq=False)
class CohortConfig:
    """Full multi-site generation setup: profiles, shared class anchors, seed."""

    sites: tuple[SiteProfile, ...]
    input_dim: int
    class_anchors: np.ndarray
    global_seed: int
    sex_shift_older_scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        anchors = np.asarray(self.class_anchors, dtype=np.float64)
        object.__setattr__(self, "class_anchors", anchors)
        if len(self.sites) < 2:
            raise CohortError("cohort needs at least 2 sites")
        ids = [p.site_id for p in self.sites]
        if len(set(ids)) != len(ids):
            raise CohortError("site ids must be unique")
        if anchors.shape != (NUM_CLASSES, self.input_dim):
            raise CohortError(f"class_anchors must be ({NUM_CLASSES}, {self.input_dim})")
        for p in self.sites:
            if p.style_offset.shape != (self.input_dim,):
                raise CohortError(f"{p.site_id}: style_offset must have length {self.input_dim}")
            if p.sex_shift.shape != (self.input_dim,):
                raise CohortError(f"{p.site_id}: sex_shift must have length {self.input_dim}")


@dataclass(eq=False)
class SiteDataset:
    """One site's examples with a frozen train/holdout split."""

    site_id: str
    train: tuple[Example, ...]
    holdout: tuple[Example, ...]

    def __post_init__(self) -> None:
        self.train = tuple(self.train)
        self.holdout = tuple(self.holdout)

    @property
    def train_size(self) -> int:
        return len(self.train)

    @property
    def holdout_size(self) -> int:
        return len(self.holdout)

    def train_class_counts(self) -> np.ndarray:
        counts = np.zeros(NUM_CLASSES, dtype=int)
        for ex in self.train:
            counts[ex.label] += 1
        return counts


def generate_cohort(config: CohortConfig) -> list[SiteDataset]:
    """Draw every site's examples and apply the per-site 50/50 train/holdout split.

    Train size rounds up on odd counts. Bit-stable for a fixed config.
    """
    datasets = []
    for profile in config.sites:
        rng = np.random.default_rng(derive_seed(config.global_seed, "site", profile.site_id))
        n = profile.n_patients
        d = config.input_dim
        labels = rng.choice(NUM_CLASSES, size=n, p=np.asarray(profile.class_mix))
        sexes = np.where(rng.random(n) < profile.sex_ratio_f, "F", "M")
        ages = np.clip(
            np.rint(rng.normal(profile.age_mean, profile.age_sd, n)), 0, 99
        ).astype(int)
        noise = rng.normal(0.0, 1.0, (n, d)) * profile.noise_scale

        feats = (
            config.class_anchors[labels] * profile.severity_scale
            + profile.style_offset
            + noise
        )
        male = sexes == "M"
        shift_scale = np.where(ages >= AGE_THRESHOLD, config.sex_shift_older_scale, 1.0)
        feats[male] += np.outer(shift_scale[male], profile.sex_shift)

        examples = [
            Example(feats[i], int(labels[i]), str(sexes[i]), int(ages[i]), profile.site_id)
            for i in range(n)
        ]
        n_train = (n + 1) // 2
        datasets.append(
            SiteDataset(profile.site_id, examples[:n_train], examples[n_train:])
        )
    return datasets


def repartition_iid(sites: Sequence[SiteDataset], seed: int) -> list[SiteDataset]:
    """Pool all training data, shuffle, and deal it back in near-equal partitions.

    Holdout sets are left untouched; partition sizes differ by at most 1 and the
    training multiset is conserved.
    """
    if not sites:
        raise CohortError("no sites to repartition")
    pool = [ex for site in sites for ex in site.train]
    rng = np.random.default_rng(derive_seed(seed, "repartition"))
    order = rng.permutation(len(pool))
    k = len(sites)
    base, extra = divmod(len(pool), k)
    out = []
    cursor = 0
    for i, site in enumerate(sites):
        size = base + (1 if i < extra else 0)
        chunk = [pool[j] for j in order[cursor : cursor + size]]
        cursor += size
        out.append(SiteDataset(site.site_id, chunk, site.holdout))
    return out


def split_sites_k_ways(sites: Sequence[SiteDataset], k: int, seed: int) -> list[SiteDataset]:
    """Split each site's training data into k disjoint child sites.

    Total sample count is conserved. The parent holdout stays with child 1;
    the other children carry empty holdouts and evaluation keeps using the
    original per-site holdout data.
    """
    if k not in (2, 3):
        raise ValueError("k must be 2 or 3")
    out = []
    for site in sites:
        n = site.train_size
        if n < k:
            raise CohortError(f"{site.site_id}: {n} training examples cannot split {k} ways")
        rng = np.random.default_rng(derive_seed(seed, "split", site.site_id))
        order = rng.permutation(n)
        base, extra = divmod(n, k)
        cursor = 0
        for j in range(k):
            size = base + (1 if j < extra else 0)
            chunk = [site.train[i] for i in order[cursor : cursor + size]]
            cursor += size
            holdout = site.holdout if j == 0 else ()
            out.append(SiteDataset(f"{site.site_id}.{j + 1}", chunk, holdout))
    return out


SUBGROUP_PREDICATES: dict[str, Callable[[Example], bool]] = {
    "sex_f": lambda ex: ex.sex == "F",
    "sex_m": lambda ex: ex.sex == "M",
    "age_lt_55": lambda ex: ex.age < AGE_THRESHOLD,
    "age_ge_55": lambda ex: ex.age >= AGE_THRESHOLD,
}


def filter_subgroup(sites: Sequence[SiteDataset], predicate: str) -> list[SiteDataset]:
    """Keep only examples matching a subgroup predicate, in train and holdout.

    Sites left without training data are dropped with a warning; an error is
    raised if the predicate removes every site.
    """
    try:
        keep = SUBGROUP_PREDICATES[predicate]
    except KeyError:
        valid = ", ".join(sorted(SUBGROUP_PREDICATES))
        raise ValueError(f"unknown subgroup predicate {predicate!r} (valid: {valid})") from None
    out = []
    for site in sites:
        train = tuple(ex for ex in site.train if keep(ex))
        holdout = tuple(ex for ex in site.holdout if keep(ex))
        if not train:
            log.warning("subgroup %s leaves site %s without training data; dropping it",
                        predicate, site.site_id)
            continue
        out.append(SiteDataset(site.site_id, train, holdout))
    if not out:
        raise CohortError(f"subgroup {predicate!r} removed all data across all sites")
    return out


# ---------------------------------------------------------------------------
# Cohort file format: one example per line,
#   site_id,split,label,sex,age,synthetic,<feature values>
# Floats are written with repr() so a round-trip is bit-exact.

_HEADER = "# fedsim cohort v1: site_id,split,label,sex,age,synthetic,features..."


def save_cohort(sites: Sequence[SiteDataset], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_HEADER + "\n")
        for site in sites:
            for split, examples in (("train", site.train), ("holdout", site.holdout)):
                for ex in examples:
                    feats = ",".join(repr(float(v)) for v in ex.features)
                    fh.write(
                        f"{ex.site_id},{split},{ex.label},{ex.sex},{ex.age},"
                        f"{'true' if ex.synthetic else 'false'},{feats}\n"
                    )


def load_cohort(path) -> list[SiteDataset]:
    buckets: dict[str, dict[str, list[Example]]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 7:
                raise CohortError(f"{path}:{lineno}: malformed record")
            site_id, split, label, sex, age, synthetic = parts[:6]
            if split not in ("train", "holdout"):
                raise CohortError(f"{path}:{lineno}: bad split {split!r}")
            features = np.array([float(v) for v in parts[6:]])
            ex = Example(features, int(label), sex, int(age), site_id,
                         synthetic=synthetic == "true")
            if site_id not in buckets:
                buckets[site_id] = {"train": [], "holdout": []}
                order.append(site_id)
            buckets[site_id][split].append(ex)
    if not order:
        raise CohortError(f"{path}: no examples found")
    return [SiteDataset(sid, buckets[sid]["train"], buckets[sid]["holdout"]) for sid in order]


# ---------------------------------------------------------------------------
# Default 16-site cohort. Geometry (anchors, per-site style directions) is
# fixed; only the sampled patients vary with global_seed, so reruns with
# different seeds act as fresh splits of the same multi-site world.

_ANCHOR_SEED = 1234
_ANCHOR_SEPARATION = 3.0
_DISEASE_ANGLE_DEG = 55.0

# site_id, n, class_mix, style_off_plane, style_in_plane, noise, sex_ratio_f,
# age_mean, age_sd, severity
# Large sites keep broader class coverage; the small tail is skewed or missing
# classes outright. Off-plane style moves a site's clusters into its own region
# of feature space; in-plane style displaces its class boundaries; severity
# scales class separation per site. site12 sits far off-distribution.
_DEFAULT_SITE_TABLE = (
    ("site01", 2700, (0.34, 0.33, 0.33), 0.0, 0.0, 1.00, 0.50, 52, 16, 1.00),
    ("site02", 395, (0.62, 0.04, 0.34), 2.8, 1.6, 1.10, 0.46, 53, 17, 0.70),
    ("site03", 925, (0.12, 0.58, 0.30), 2.6, 1.2, 1.00, 0.53, 60, 16, 1.30),
    ("site04", 270, (0.08, 0.60, 0.32), 2.5, 1.5, 0.90, 0.42, 52, 15, 0.75),
    ("site05", 235, (0.00, 0.58, 0.42), 2.9, 1.4, 1.00, 0.44, 57, 16, 1.25),
    ("site06", 1510, (0.20, 0.52, 0.28), 2.4, 1.0, 1.00, 0.45, 55, 15, 1.15),
    ("site07", 91, (0.12, 0.00, 0.88), 4.0, 2.0, 1.20, 0.55, 60, 15, 1.30),
    ("site08", 293, (0.18, 0.24, 0.58), 2.6, 1.4, 1.00, 0.40, 56, 16, 0.80),
    ("site09", 317, (0.20, 0.14, 0.66), 3.0, 1.8, 0.95, 0.45, 52, 17, 1.35),
    ("site10", 820, (0.30, 0.00, 0.70), 2.8, 1.3, 1.05, 0.41, 54, 17, 1.25),
    ("site11", 550, (0.00, 0.28, 0.72), 2.6, 1.6, 1.00, 0.50, 53, 16, 0.70),
    ("site12", 120, (0.32, 0.34, 0.34), 8.0, 3.0, 0.90, 0.47, 42, 14, 0.85),
    ("site13", 60, (0.00, 0.00, 1.00), 5.0, 2.8, 1.10, 0.43, 64, 14, 1.25),
    ("site14", 51, (0.25, 0.00, 0.75), 5.0, 3.0, 1.30, 0.55, 61, 20, 0.60),
    ("site15", 203, (0.62, 0.00, 0.38), 2.5, 1.3, 1.00, 0.50, 50, 15, 0.75),
    ("site16", 810, (0.30, 0.00, 0.70), 2.9, 1.2, 1.00, 0.56, 47, 14, 1.20),
)

DEFAULT_SEX_SHIFT_SCALE = 1.0
DEFAULT_SEX_SHIFT_OLDER_SCALE = 0.25


def _anchor_basis(input_dim: int) -> np.ndarray:
    rng = np.random.default_rng(_ANCHOR_SEED)
    basis, _ = np.linalg.qr(rng.normal(size=(input_dim, 3)))
    return basis.T  # rows are orthonormal directions


def default_class_anchors(input_dim: int = DEFAULT_INPUT_DIM) -> np.ndarray:
    """Normal lung at the origin; PNA and COVID anchors at a fixed angle."""
    q = _anchor_basis(input_dim)
    angle = math.radians(_DISEASE_ANGLE_DEG)
    normal = np.zeros(input_dim)
    pna = _ANCHOR_SEPARATION * q[0]
    covid = _ANCHOR_SEPARATION * (math.cos(angle) * q[0] + math.sin(angle) * q[1])
    return np.stack([normal, pna, covid])


def default_sex_shift(input_dim: int = DEFAULT_INPUT_DIM,
                      scale: float = DEFAULT_SEX_SHIFT_SCALE) -> np.ndarray:
    """Male feature shift: mostly along the PNA/COVID axis plus an off-anchor part."""
    anchors = default_class_anchors(input_dim)
    q = _anchor_basis(input_dim)
    axis = anchors[2] - anchors[1]
    axis = axis / np.linalg.norm(axis)
    return scale * (1.5 * axis + 0.8 * q[2])


def _style_offset(site_id: str, off_plane: float, in_plane: float, input_dim: int) -> np.ndarray:
    # The off-plane component (orthogonal to the class-anchor plane) moves the
    # site's clusters into a region of their own: pooled training can still
    # separate classes there, but locally trained models extrapolate poorly.
    # The in-plane component displaces the site's class boundaries, which is
    # what makes one site's decision rule wrong at another site.
    if off_plane == 0.0 and in_plane == 0.0:
        return np.zeros(input_dim)
    rng = np.random.default_rng(derive_seed("default-style", site_id))
    q = _anchor_basis(input_dim)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    u_in = math.cos(angle) * q[0] + math.sin(angle) * q[1]
    g = rng.normal(size=input_dim)
    g -= (g @ q[0]) * q[0] + (g @ q[1]) * q[1]
    u_off = g / np.linalg.norm(g)
    return in_plane * u_in + off_plane * u_off


def default_cohort_config(
    global_seed: int,
    sex_shift_scale: float = DEFAULT_SEX_SHIFT_SCALE,
    input_dim: int = DEFAULT_INPUT_DIM,
) -> CohortConfig:
    """The 16-site heterogeneous cohort used by presets and acceptance runs.

    site01 is the large balanced "public" site; site12 carries an extreme style
    offset; several sites lack the PNA class entirely; sizes span ~50 to ~2700.
    Setting sex_shift_scale=0 yields the no-sex-effect control cohort.
    """
    shift = default_sex_shift(input_dim, sex_shift_scale)
    profiles = [
        SiteProfile(
            site_id=sid,
            n_patients=n,
            class_mix=mix,
            style_offset=_style_offset(sid, off_plane, in_plane, input_dim),
            sex_shift=shift,
            noise_scale=noise,
            sex_ratio_f=ratio_f,
            age_mean=age_mean,
            age_sd=age_sd,
            severity_scale=severity,
        )
        for sid, n, mix, off_plane, in_plane, noise, ratio_f, age_mean, age_sd, severity
        in _DEFAULT_SITE_TABLE
    ]
    return CohortConfig(
        sites=tuple(profiles),
        input_dim=input_dim,
        class_anchors=default_class_anchors(input_dim),
        global_seed=global_seed,
        sex_shift_older_scale=DEFAULT_SEX_SHIFT_OLDER_SCALE,
    )
