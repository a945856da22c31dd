"""Simultaneous label-probability bounds from label frequencies.

Each of the ``c`` labels gets a one-sided Clopper-Pearson bound at level
``alpha / c`` (Bonferroni), so the lower bounds of the ground-truth labels and
the upper bounds of all other labels hold jointly with probability at least
``1 - alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .numerics import beta_quantile
from .sampler import CertificationInstance

__all__ = [
    "ProbabilityBounds",
    "clopper_pearson_lower",
    "clopper_pearson_upper",
    "estimate_bounds",
    "bounds_from_probabilities",
    "joint_lower_sum",
    "joint_upper_sum",
]


@lru_cache(maxsize=65536)
def clopper_pearson_lower(count: int, n: int, level: float) -> float:
    """One-sided lower endpoint ``Beta(level; count, n - count + 1)``; 0 when count == 0."""
    if count == 0:
        return 0.0
    return beta_quantile(level, count, n - count + 1)


@lru_cache(maxsize=65536)
def clopper_pearson_upper(count: int, n: int, level: float, strict_paper: bool = False) -> float:
    """One-sided upper endpoint at confidence ``1 - level``.

    The standard endpoint is ``Beta(1 - level; count + 1, n - count)`` (1 when
    ``count == n``). ``strict_paper=True`` evaluates the alternative parameterization
    ``Beta(1 - level; count, n - count + 1)`` instead, which is 0 when
    ``count == 0`` and is not a valid upper confidence bound in general.
    """
    if strict_paper:
        if count == 0:
            return 0.0
        return beta_quantile(1.0 - level, count, n - count + 1)
    if count == n:
        return 1.0
    return beta_quantile(1.0 - level, count + 1, n - count)


def _descending(labels, values) -> tuple[int, ...]:
    return tuple(sorted(labels, key=lambda j: (-values[j], j)))


@dataclass(frozen=True, eq=False)
class ProbabilityBounds:
    """Lower bounds for ground-truth labels, upper bounds for the rest.

    ``lower_all`` and ``upper_all`` hold both bounds for every label so that
    single-label certificates (where other ground-truth labels become
    competitors) can be derived with :meth:`restrict`.
    """

    ground_truth: tuple[int, ...]
    lower_all: np.ndarray
    upper_all: np.ndarray
    k_prime: int
    lower_sorted: tuple[int, ...] = field(init=False)
    upper_sorted: tuple[int, ...] = field(init=False)
    _lower_values: tuple[float, ...] = field(init=False, repr=False)
    _upper_values: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        lo = np.clip(np.asarray(self.lower_all, dtype=float), 0.0, 1.0)
        hi = np.clip(np.asarray(self.upper_all, dtype=float), 0.0, 1.0)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower_all and upper_all must be vectors of equal length")
        gt = tuple(sorted(int(g) for g in self.ground_truth))
        if not gt or len(set(gt)) != len(gt) or gt[0] < 0 or gt[-1] >= lo.shape[0]:
            raise ValueError("ground_truth must be a nonempty set of valid label indices")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower_all", lo)
        object.__setattr__(self, "upper_all", hi)
        object.__setattr__(self, "ground_truth", gt)
        others = [j for j in range(lo.shape[0]) if j not in set(gt)]
        object.__setattr__(self, "lower_sorted", _descending(gt, lo))
        object.__setattr__(self, "upper_sorted", _descending(others, hi))
        object.__setattr__(self, "_lower_values",
                           tuple(float(lo[j]) for j in self.lower_sorted))
        object.__setattr__(self, "_upper_values",
                           tuple(float(hi[j]) for j in self.upper_sorted))

    @property
    def c(self) -> int:
        return self.lower_all.shape[0]

    @property
    def d(self) -> int:
        return len(self.ground_truth)

    @property
    def lower(self) -> dict[int, float]:
        return {j: float(self.lower_all[j]) for j in self.ground_truth}

    @property
    def upper(self) -> dict[int, float]:
        return {j: float(self.upper_all[j]) for j in self.upper_sorted}

    @property
    def lower_values(self) -> tuple[float, ...]:
        """Lower bounds in ``lower_sorted`` order (descending)."""
        return self._lower_values

    @property
    def upper_values(self) -> tuple[float, ...]:
        """Upper bounds in ``upper_sorted`` order (descending)."""
        return self._upper_values

    @property
    def lower_total(self) -> float:
        return math.fsum(self._lower_values)

    def restrict(self, label: int) -> "ProbabilityBounds":
        """Bounds for the single-label ground truth ``{label}``."""
        return ProbabilityBounds((label,), self.lower_all, self.upper_all, self.k_prime)


def estimate_bounds(instance: CertificationInstance, alpha: float,
                    strict_paper: bool = False) -> ProbabilityBounds:
    """Bonferroni-corrected Clopper-Pearson bounds for every label of ``instance``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    level = alpha / instance.c
    lower = [clopper_pearson_lower(cnt, instance.n, level) for cnt in instance.counts]
    upper = [clopper_pearson_upper(cnt, instance.n, level, strict_paper) for cnt in instance.counts]
    return ProbabilityBounds(instance.ground_truth, np.array(lower), np.array(upper), instance.k_prime)


def bounds_from_probabilities(probabilities, ground_truth, k_prime: int,
                              upper=None) -> ProbabilityBounds:
    """Use known label probabilities directly as bounds.

    With ``upper`` given, ``probabilities`` is read as the lower end of an
    enclosure and ``upper`` as its upper end.
    """
    lo = np.asarray(probabilities, dtype=float)
    hi = lo if upper is None else np.asarray(upper, dtype=float)
    return ProbabilityBounds(tuple(ground_truth), lo, hi, k_prime)


def joint_lower_sum(bounds: ProbabilityBounds, e_prime: int, u: int) -> float:
    """Sum of the sorted lower bounds at positions ``e_prime .. e_prime + u - 1`` (1-based)."""
    d = bounds.d
    if not 1 <= e_prime <= d or not 1 <= u <= d - e_prime + 1:
        raise IndexError(f"need 1 <= e'={e_prime} <= d={d} and 1 <= u={u} <= {d - e_prime + 1}")
    return math.fsum(bounds.lower_values[e_prime - 1:e_prime - 1 + u])


def joint_upper_sum(bounds: ProbabilityBounds, e_prime: int, v: int, k: int, k_prime: int) -> float:
    """Tightened joint upper bound over sorted positions ``s - v + 1 .. s``.

    ``s = k - e_prime + 1``; the partial sum is capped by
    ``k_prime - sum(lower bounds)`` and floored at 0.
    """
    s = k - e_prime + 1
    if s < 1 or s > bounds.c - bounds.d:
        raise IndexError(f"s={s} must lie in [1, c-d={bounds.c - bounds.d}]")
    if not 1 <= v <= s:
        raise IndexError(f"v={v} must lie in [1, {s}]")
    partial = math.fsum(bounds.upper_values[s - v:s])
    return max(0.0, min(partial, k_prime - bounds.lower_total))
