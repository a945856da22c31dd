"""Exhaustive l2 attacks on 1-D synthetic classifiers.

In one dimension the l2 ball of radius R around ``x`` is the interval
``[x - R, x + R]`` and the smoothed label probabilities are exact, so the
minimum intersection ``|L & g_k(x + delta)|`` can be found by scanning a fine
grid of shifts. The grid is augmented with both endpoints and with every
base-classifier breakpoint inside the ball.

:func:`randomized_attack_2d` is a much weaker Monte Carlo check for 2-D
classifiers: it only probes a finite set of directions and estimates the
smoothed prediction from samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import SmoothingConfig
from .synthetic_model import (
    IntervalPartition,
    SyntheticClassifier,
    exact_label_logits_batch,
    partition_line,
    predict_topk_batch,
)

__all__ = [
    "AttackSweep",
    "smoothed_topk_exact",
    "exhaustive_attack",
    "attack_profile",
    "randomized_attack_2d",
]


@dataclass(frozen=True)
class AttackSweep:
    radius: float
    grid_step: float
    worst_intersection: int
    worst_delta: float

    def __post_init__(self):
        if abs(self.worst_delta) > self.radius:
            raise ValueError("worst_delta lies outside the perturbation ball")


def _topk_mask(probs: np.ndarray, k: int) -> np.ndarray:
    # any strictly increasing transform of the probabilities ranks identically
    idx = np.argsort(-probs, axis=-1, kind="stable")[..., :k]
    mask = np.zeros(probs.shape, dtype=bool)
    np.put_along_axis(mask, idx, True, axis=-1)
    return mask


def smoothed_topk_exact(classifier: SyntheticClassifier, center: float, sigma: float, k: int,
                        partition: IntervalPartition | None = None) -> frozenset:
    """Top-k labels by exact label probability; ties go to the smaller index."""
    if classifier.dimension != 1:
        raise ValueError("smoothed_topk_exact requires a 1-D classifier")
    if not 1 <= k <= classifier.num_labels:
        raise ValueError(f"k={k} must lie in [1, {classifier.num_labels}]")
    probs = exact_label_logits_batch(classifier, [center], sigma, partition)
    return frozenset(int(j) for j in np.flatnonzero(_topk_mask(probs, k)[0]))


def _intersections(classifier, x, labels, sigma, k, deltas, partition) -> np.ndarray:
    probs = exact_label_logits_batch(classifier, x + deltas, sigma, partition)
    gt = np.zeros(classifier.num_labels, dtype=bool)
    gt[list(labels)] = True
    return (_topk_mask(probs, k) & gt).sum(axis=1)


def _candidate_deltas(x, r_max, radii, grid_step, partition) -> np.ndarray:
    steps = int(np.floor(r_max / grid_step + 1e-9)) if r_max > 0 else 0
    grid = np.arange(-steps, steps + 1) * grid_step
    bps = np.asarray(partition.breakpoints, dtype=float) - x
    bps = bps[np.abs(bps) <= r_max]
    radii = np.asarray(radii, dtype=float)
    return np.unique(np.concatenate([grid, bps, radii, -radii, [0.0]]))


def exhaustive_attack(classifier: SyntheticClassifier, x: float, labels, config: SmoothingConfig,
                      R: float, grid_step: float | None = None,
                      partition: IntervalPartition | None = None) -> AttackSweep:
    """Minimum of ``|labels & g_k(x + delta)|`` over ``|delta| <= R``."""
    return attack_profile(classifier, x, labels, config, [R], grid_step, partition)[0]


def attack_profile(classifier: SyntheticClassifier, x: float, labels, config: SmoothingConfig,
                   radii, grid_step: float | None = None,
                   partition: IntervalPartition | None = None) -> list[AttackSweep]:
    """Run :func:`exhaustive_attack` for several radii on one shared candidate set.

    ``grid_step`` defaults to 1/100 of the smallest positive radius.
    """
    if classifier.dimension != 1:
        raise ValueError("exhaustive_attack requires a 1-D classifier")
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii):
        raise ValueError("radii must be nonnegative")
    positive = [r for r in radii if r > 0]
    if grid_step is None:
        grid_step = min(positive) / 100.0 if positive else 1.0
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if positive and grid_step > min(positive) / 100.0 * (1 + 1e-9):
        raise ValueError("grid_step must not exceed R/100")
    part = partition if partition is not None else partition_line(classifier)
    r_max = max(radii) if radii else 0.0
    deltas = _candidate_deltas(x, r_max, radii, grid_step, part)
    inter = _intersections(classifier, x, labels, config.sigma, config.k, deltas, part)
    out = []
    for r in radii:
        inside = np.abs(deltas) <= r
        vals = np.where(inside, inter, np.iinfo(np.int64).max)
        i = int(np.argmin(vals))
        out.append(AttackSweep(r, grid_step, int(inter[i]), float(deltas[i])))
    return out


def randomized_attack_2d(classifier: SyntheticClassifier, x, labels, config: SmoothingConfig,
                         R: float, num_directions: int = 64, num_fractions: int = 4,
                         num_samples: int = 20_000, seed: int = 0) -> AttackSweep:
    """Probe perturbations on a few circles of radius <= R; Monte Carlo estimates only.

    A weak, non-exhaustive check: it can miss the worst perturbation and the
    smoothed prediction carries sampling error. The same noise is reused at
    every probe point.
    """
    if classifier.dimension != 2:
        raise ValueError("randomized_attack_2d requires a 2-D classifier")
    rng = np.random.default_rng(seed)
    noise = config.sigma * rng.standard_normal((num_samples, 2))
    x = np.asarray(x, dtype=float)
    gt = np.zeros(classifier.num_labels, dtype=bool)
    gt[list(labels)] = True
    probes = [np.zeros(2)]
    if R > 0:
        angles = rng.uniform(0.0, 2 * np.pi, num_directions)
        for frac in np.linspace(1.0 / num_fractions, 1.0, num_fractions):
            probes += [R * frac * np.array([np.cos(a), np.sin(a)]) for a in angles]
    worst, worst_delta = None, probes[0]
    for delta in probes:
        freq = predict_topk_batch(classifier, x + delta + noise).mean(axis=0)
        inter = int((_topk_mask(freq[None, :], config.k)[0] & gt).sum())
        if worst is None or inter < worst:
            worst, worst_delta = inter, delta
    # AttackSweep stores a scalar shift; report its norm
    return AttackSweep(R, R / num_fractions if R > 0 else 0.0, worst,
                       min(float(np.linalg.norm(worst_delta)), R))
