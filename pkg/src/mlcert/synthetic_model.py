"""Affine-score multi-label classifiers with an exact smoothing oracle.

Label ``j`` scores a point ``w`` as ``weights[j] @ w + bias[j]``; the base
classifier returns the ``k_prime`` highest-scoring labels, ties going to the
smaller label index. In one dimension the real line splits into finitely many
intervals with a constant top set, which makes the probability that a label
is predicted under Gaussian noise exactly computable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_ndtr, logsumexp

__all__ = [
    "SyntheticClassifier",
    "IntervalPartition",
    "predict_topk",
    "predict_topk_batch",
    "partition_line",
    "exact_label_probabilities",
    "exact_label_probabilities_batch",
    "exact_log_label_probabilities_batch",
    "exact_label_logits_batch",
    "exact_probability_bounds",
    "random_affine_classifier",
    "load_classifier",
    "save_classifier",
    "SyntheticInput",
    "load_dataset",
    "save_dataset",
    "random_problem",
]


@dataclass(frozen=True, eq=False)
class SyntheticClassifier:
    """Immutable linear-score multi-label classifier.

    ``weights`` has shape ``(c, dimension)`` and ``bias`` shape ``(c,)``.
    """

    weights: np.ndarray
    bias: np.ndarray
    k_prime: int

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2 or w.shape[1] not in (1, 2):
            raise ValueError(f"weights must have shape (c, 1) or (c, 2), got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias must have shape ({w.shape[0]},), got {b.shape}")
        if w.shape[0] < 1:
            raise ValueError("classifier needs at least one label")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("weights and bias must be finite")
        if not 1 <= int(self.k_prime) <= w.shape[0]:
            raise ValueError(f"k_prime={self.k_prime} must lie in [1, {w.shape[0]}]")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "k_prime", int(self.k_prime))

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    @property
    def num_labels(self) -> int:
        return self.weights.shape[0]

    def scores(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1 and self.dimension == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ValueError(f"points must have shape (m, {self.dimension}), got {pts.shape}")
        return pts @ self.weights.T + self.bias

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "num_labels": self.num_labels,
            "k_prime": self.k_prime,
            "labels": [
                {"weights": [float(v) for v in self.weights[j]], "bias": float(self.bias[j])}
                for j in range(self.num_labels)
            ],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "SyntheticClassifier":
        try:
            labels = spec["labels"]
            dim = int(spec["dimension"])
            clf = cls(
                weights=np.array([lab["weights"] for lab in labels], dtype=float).reshape(len(labels), dim),
                bias=np.array([lab["bias"] for lab in labels], dtype=float),
                k_prime=int(spec["k_prime"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"invalid classifier specification: {exc}") from exc
        if "num_labels" in spec and int(spec["num_labels"]) != clf.num_labels:
            raise ValueError(
                f"num_labels={spec['num_labels']} does not match {clf.num_labels} label entries"
            )
        return clf


@dataclass(frozen=True)
class IntervalPartition:
    """Breakpoints of the real line and the top-k' set on each interval.

    Interval ``i`` is ``(breakpoints[i-1], breakpoints[i])`` with the outer
    intervals extending to -inf and +inf.
    """

    breakpoints: tuple[float, ...]
    top_sets: tuple[frozenset, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.top_sets) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one top set per interval")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    def locate(self, w: float) -> int:
        """Index of the interval containing ``w`` (breakpoints belong to the right)."""
        return int(np.searchsorted(self.breakpoints, w, side="right"))

    def membership(self, num_labels: int) -> np.ndarray:
        """Boolean matrix of shape (intervals, c): label j predicted on interval i."""
        m = np.zeros((len(self.top_sets), num_labels), dtype=bool)
        for i, s in enumerate(self.top_sets):
            m[i, list(s)] = True
        return m


def _topk_indices(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on negated scores keeps smaller indices first among ties
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


def predict_topk(classifier: SyntheticClassifier, point) -> frozenset:
    """Labels of the ``k_prime`` largest scores at ``point``."""
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    if pt.shape != (classifier.dimension,):
        raise ValueError(f"point has shape {pt.shape}, classifier expects ({classifier.dimension},)")
    idx = _topk_indices(classifier.scores(pt[None, :])[0], classifier.k_prime)
    return frozenset(int(i) for i in idx)


def predict_topk_batch(classifier: SyntheticClassifier, points) -> np.ndarray:
    """Boolean membership matrix of shape (m, c) for a batch of points."""
    scores = classifier.scores(points)
    idx = _topk_indices(scores, classifier.k_prime)
    out = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(out, idx, True, axis=1)
    return out


def _crossings(classifier: SyntheticClassifier) -> list[float]:
    a = classifier.weights[:, 0]
    b = classifier.bias
    pts = set()
    c = classifier.num_labels
    for i in range(c):
        for j in range(i + 1, c):
            if a[i] != a[j]:
                w = (b[j] - b[i]) / (a[i] - a[j])
                if math.isfinite(w):
                    pts.add(float(w))
    return sorted(pts)


def partition_line(classifier: SyntheticClassifier) -> IntervalPartition:
    """Split the line where the top-k' set changes.

    Candidate breakpoints are all pairwise score crossings; a candidate is
    kept only if the top set differs on its two sides.
    """
    if classifier.dimension != 1:
        raise ValueError("partition_line requires a 1-D classifier")
    cands = _crossings(classifier)
    if not cands:
        return IntervalPartition((), (predict_topk(classifier, [0.0]),))
    # one representative point strictly inside every candidate interval
    reps = [cands[0] - 1.0]
    reps += [0.5 * (lo + hi) for lo, hi in zip(cands, cands[1:])]
    reps.append(cands[-1] + 1.0)
    sets = [predict_topk(classifier, [r]) for r in reps]
    breakpoints = []
    top_sets = [sets[0]]
    for w, s in zip(cands, sets[1:]):
        if s != top_sets[-1]:
            breakpoints.append(w)
            top_sets.append(s)
    return IntervalPartition(tuple(breakpoints), tuple(top_sets))


def exact_label_probabilities(classifier: SyntheticClassifier, center: float, sigma: float,
                              partition: IntervalPartition | None = None) -> np.ndarray:
    """``p_j = Pr(j in f_{k'}(center + eps))`` with ``eps ~ N(0, sigma^2)``.

    Interval masses are taken from whichever Gaussian tail keeps relative
    precision, so tiny probabilities do not collapse to 0.
    """
    return exact_label_probabilities_batch(classifier, [center], sigma, partition)[0]


def _log_interval_mass(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``log(Phi(hi) - Phi(lo))`` evaluated on the tail side that keeps precision."""
    with np.errstate(invalid="ignore"):
        left = (lo + hi) < 0
    upper = np.where(left, hi, -lo)
    lower = np.where(left, lo, -hi)
    log_up = log_ndtr(upper)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(log_ndtr(lower) - log_up)
        return log_up + np.log1p(-ratio)


def _log_masses(classifier, centers, sigma, partition):
    if classifier.dimension != 1:
        raise ValueError("exact label probabilities are only available in 1-D")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    part = partition if partition is not None else partition_line(classifier)
    centers = np.asarray(centers, dtype=float).reshape(-1)
    edges = np.array([-np.inf, *part.breakpoints, np.inf])
    z = (edges[None, :] - centers[:, None]) / sigma
    return _log_interval_mass(z[:, :-1], z[:, 1:]), part.membership(classifier.num_labels)


def _grouped_logsumexp(log_mass: np.ndarray, member: np.ndarray) -> np.ndarray:
    out = np.full((log_mass.shape[0], member.shape[1]), -np.inf)
    for j in range(member.shape[1]):
        if member[:, j].any():
            out[:, j] = logsumexp(log_mass[:, member[:, j]], axis=1)
    return out


def exact_log_label_probabilities_batch(classifier: SyntheticClassifier, centers, sigma: float,
                                        partition: IntervalPartition | None = None) -> np.ndarray:
    """Natural log of the exact label probabilities, shape (m, c).

    Far-tail masses that underflow in linear space stay strictly above
    ``-inf`` here; labels that are never predicted get ``-inf``.
    """
    log_mass, member = _log_masses(classifier, centers, sigma, partition)
    return _grouped_logsumexp(log_mass, member)


def exact_label_logits_batch(classifier: SyntheticClassifier, centers, sigma: float,
                             partition: IntervalPartition | None = None) -> np.ndarray:
    """``log(p_j) - log(1 - p_j)`` with both terms summed in log space.

    Monotone in ``p_j`` and resolved at both ends of [0, 1], so it ranks
    labels correctly even when several probabilities round to 0.0 or 1.0.
    """
    log_mass, member = _log_masses(classifier, centers, sigma, partition)
    log_p = _grouped_logsumexp(log_mass, member)
    log_q = _grouped_logsumexp(log_mass, ~member)
    with np.errstate(invalid="ignore"):
        return log_p - log_q


def exact_probability_bounds(classifier: SyntheticClassifier, center: float, sigma: float,
                             partition: IntervalPartition | None = None,
                             rel_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Floating-point enclosure ``(lower, upper)`` of the exact label probabilities.

    Both ends are rounded outward: a probability within one ulp of 1 whose
    complement is positive gets a lower end strictly below 1, and so on.
    """
    log_mass, member = _log_masses(classifier, [center], sigma, partition)
    p = np.exp(_grouped_logsumexp(log_mass, member)[0])
    q = np.exp(_grouped_logsumexp(log_mass, ~member)[0])
    lower = np.minimum(p * (1 - rel_tol), 1.0 - q * (1 + rel_tol))
    upper = np.maximum(p * (1 + rel_tol), 1.0 - q * (1 - rel_tol))
    lower = np.where(q > 0, np.minimum(lower, np.nextafter(1.0, 0.0)), lower)
    upper = np.where(p > 0, np.maximum(upper, np.nextafter(p, 1.0)), upper)
    return np.clip(lower, 0.0, 1.0), np.clip(upper, 0.0, 1.0)


def exact_label_probabilities_batch(classifier: SyntheticClassifier, centers, sigma: float,
                                    partition: IntervalPartition | None = None) -> np.ndarray:
    """Vectorized :func:`exact_label_probabilities`; returns shape (m, c)."""
    return np.exp(exact_log_label_probabilities_batch(classifier, centers, sigma, partition))


def random_affine_classifier(rng: np.random.Generator, num_labels: int, k_prime: int,
                             dimension: int = 1, scale: float = 1.0) -> SyntheticClassifier:
    """Classifier with standard-normal slopes and biases times ``scale``."""
    return SyntheticClassifier(
        weights=rng.normal(size=(num_labels, dimension)) * scale,
        bias=rng.normal(size=num_labels) * scale,
        k_prime=k_prime,
    )


def load_classifier(path) -> SyntheticClassifier:
    with open(path, encoding="utf-8") as fh:
        return SyntheticClassifier.from_dict(json.load(fh))


def save_classifier(classifier: SyntheticClassifier, path) -> None:
    Path(path).write_text(json.dumps(classifier.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class SyntheticInput:
    """One test input for a synthetic classifier: a point and its ground-truth labels."""

    id: str
    point: tuple[float, ...]
    ground_truth: tuple[int, ...]


def load_dataset(path, classifier: SyntheticClassifier | None = None) -> list[SyntheticInput]:
    """Read ``{"inputs": [{"id", "point", "ground_truth"}, ...]}`` from JSON."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    items = []
    seen = set()
    try:
        for i, rec in enumerate(spec["inputs"]):
            item = SyntheticInput(str(rec["id"]), tuple(float(v) for v in rec["point"]),
                                  tuple(sorted(int(g) for g in rec["ground_truth"])))
            if item.id in seen:
                raise ValueError(f"duplicate id {item.id!r}")
            seen.add(item.id)
            if not item.ground_truth:
                raise ValueError(f"input {item.id!r} has an empty ground truth")
            if classifier is not None:
                if len(item.point) != classifier.dimension:
                    raise ValueError(f"input {item.id!r} has dimension {len(item.point)}")
                if any(not 0 <= g < classifier.num_labels for g in item.ground_truth):
                    raise ValueError(f"input {item.id!r} has labels outside [0, {classifier.num_labels})")
            items.append(item)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"invalid dataset specification: {exc}") from exc
    return items


def save_dataset(items, path) -> None:
    payload = {"inputs": [{"id": it.id, "point": list(it.point), "ground_truth": list(it.ground_truth)}
                          for it in items]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def random_problem(rng: np.random.Generator, sigma: float, k_prime: int | None = None,
                   k: int | None = None, max_labels: int = 8, scale: float = 2.0):
    """Random 1-D classifier, input point and ground truth.

    The ground truth is the ``d`` most probable labels at the point, with one
    label swapped for a random other label about a third of the time.
    Returns ``(classifier, x, ground_truth, k)``.
    """
    lo = max(2, k_prime or 1, k or 1)
    c = int(rng.integers(lo, max(lo, max_labels) + 1))
    kp = k_prime if k_prime is not None else int(rng.integers(1, min(3, c) + 1))
    kk = k if k is not None else int(rng.integers(1, c + 1))
    clf = random_affine_classifier(rng, c, kp, scale=scale)
    x = float(rng.uniform(-2.0, 2.0))
    p = exact_label_probabilities(clf, x, sigma)
    d = int(rng.integers(1, c))
    order = np.argsort(-p, kind="stable")
    gt = list(order[:d])
    if rng.random() < 1 / 3:
        gt[int(rng.integers(d))] = int(order[int(rng.integers(d, c))])
    return clf, x, tuple(sorted(int(g) for g in gt)), kk
