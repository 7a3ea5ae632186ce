"""Class-equalizing augmentation via a conditional generator fit on the public site.

The generator is a per-class moment model (mean + diagonal variance) estimated
from the public site's training split only. Synthesis transfers a real example's
style residual onto a target class anchor, so synthetic examples stay
representative of the site they are generated for.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import NUM_CLASSES, Example, SiteDataset
from .seeding import derive_seed

VAR_FLOOR = 1e-6
DEFAULT_NOISE_FACTOR = 0.25


@dataclass(eq=False)
class GeneratorModel:
    """Per-class feature means and diagonal variances from one site's training split."""

    class_means: np.ndarray
    class_vars: np.ndarray
    fitted_on: str

    def __post_init__(self) -> None:
        self.class_means = np.asarray(self.class_means, dtype=np.float64)
        self.class_vars = np.asarray(self.class_vars, dtype=np.float64)
        if self.class_means.shape != self.class_vars.shape:
            raise ValueError("means and variances must share a shape")
        if self.class_means.shape[0] != NUM_CLASSES:
            raise ValueError(f"generator must cover all {NUM_CLASSES} classes")
        if (self.class_vars <= 0).any():
            raise ValueError("variances must be positive")


@dataclass(frozen=True)
class AugmentationPlan:
    """Per-class training-count targets for one site; never below current counts."""

    site_id: str
    current_counts: tuple[int, int, int]
    target_counts: tuple[int, int, int]
    mark_synthetic: bool = True

    def __post_init__(self) -> None:
        if any(t < c for t, c in zip(self.target_counts, self.current_counts)):
            raise ValueError("targets must not fall below current counts")


def fit_generator(public_site: SiteDataset) -> GeneratorModel:
    """Estimate class-conditional moments from the public training split only."""
    by_class: list[list[np.ndarray]] = [[] for _ in range(NUM_CLASSES)]
    for ex in public_site.train:
        by_class[ex.label].append(ex.features)
    for cls, rows in enumerate(by_class):
        if len(rows) < 2:
            raise ValueError(
                f"public site {public_site.site_id} needs at least 2 training "
                f"examples of every class, class {cls} has {len(rows)}"
            )
    means = np.stack([np.mean(rows, axis=0) for rows in by_class])
    variances = np.stack([np.var(rows, axis=0, ddof=1) for rows in by_class])
    variances = np.maximum(variances, VAR_FLOOR)
    return GeneratorModel(means, variances, public_site.site_id)


def synthesize(
    gen: GeneratorModel,
    style_source: Example,
    target_class: int,
    seed: int,
    noise_factor: float = DEFAULT_NOISE_FACTOR,
) -> Example:
    """Generate one synthetic example of target_class styled after a real one.

    Output features are the source features translated between class means,
    plus Gaussian noise with the target class variance scaled by noise_factor.
    The source's site, sex and age carry over; the result is flagged synthetic.
    """
    if target_class not in range(NUM_CLASSES):
        raise ValueError(f"target_class must be in [0, {NUM_CLASSES})")
    if noise_factor < 0:
        raise ValueError("noise_factor must be nonnegative")
    shift = gen.class_means[target_class] - gen.class_means[style_source.label]
    features = style_source.features + shift
    if noise_factor > 0:
        rng = np.random.default_rng(seed)
        features = features + rng.normal(size=features.shape) * np.sqrt(
            gen.class_vars[target_class] * noise_factor
        )
    return Example(
        features=features,
        label=target_class,
        sex=style_source.sex,
        age=style_source.age,
        site_id=style_source.site_id,
        synthetic=True,
    )


def plan_equalization(site: SiteDataset) -> AugmentationPlan:
    """Raise every class to the site's current maximum training count."""
    counts = tuple(int(c) for c in site.train_class_counts())
    target = max(counts)
    return AugmentationPlan(site.site_id, counts, (target,) * NUM_CLASSES)


def equalize_classes(
    site: SiteDataset,
    gen: GeneratorModel,
    seed: int,
    noise_factor: float = DEFAULT_NOISE_FACTOR,
) -> SiteDataset:
    """Top up underrepresented classes with synthetic examples.

    Style sources cycle round-robin over the site's real training examples.
    Real examples are never modified or removed and the holdout is untouched.
    """
    if not site.train:
        raise ValueError(f"site {site.site_id} has no training data")
    plan = plan_equalization(site)
    real = [ex for ex in site.train if not ex.synthetic]
    if not real:
        raise ValueError(f"site {site.site_id} has no real training examples to style from")
    additions: list[Example] = []
    for cls in range(NUM_CLASSES):
        need = plan.target_counts[cls] - plan.current_counts[cls]
        for i in range(need):
            src = real[i % len(real)]
            additions.append(
                synthesize(gen, src, cls, derive_seed(seed, site.site_id, cls, i), noise_factor)
            )
    if not additions:
        return SiteDataset(site.site_id, site.train, site.holdout)
    return SiteDataset(site.site_id, site.train + tuple(additions), site.holdout)


def synthetic_only_training_set(
    site: SiteDataset,
    gen: GeneratorModel,
    seed: int,
    noise_factor: float = DEFAULT_NOISE_FACTOR,
) -> SiteDataset:
    """Replace a site's training data with synthetic examples only.

    Per class, the equalization target count (the site's max real class count)
    is synthesized, styled round-robin on the site's real training examples.
    The holdout is untouched.
    """
    if not site.train:
        raise ValueError(f"site {site.site_id} has no training data")
    plan = plan_equalization(site)
    real = [ex for ex in site.train if not ex.synthetic]
    target = max(plan.target_counts)
    synth: list[Example] = []
    for cls in range(NUM_CLASSES):
        for i in range(target):
            src = real[i % len(real)]
            synth.append(
                synthesize(gen, src, cls, derive_seed(seed, site.site_id, "only", cls, i),
                           noise_factor)
            )
    return SiteDataset(site.site_id, tuple(synth), site.holdout)
