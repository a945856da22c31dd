"""Gaussian noise sampling, label-frequency counting and counts files.

Noise for sample ``t`` of instance ``id`` under ``seed`` is fully determined
by that triple: samples are grouped in fixed blocks of ``BLOCK_SIZE`` and
block ``t // BLOCK_SIZE`` is drawn from a Philox stream keyed by
``(seed, id)`` whose counter starts at the block index. Any split of the
blocks across workers therefore yields the same noise and the same counts.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from .synthetic_model import SyntheticClassifier, predict_topk_batch

logger = logging.getLogger(__name__)

__all__ = [
    "BLOCK_SIZE",
    "COUNTS_HEADER",
    "CountsFileError",
    "SmoothingConfig",
    "CertificationInstance",
    "random_sample",
    "count_frequencies",
    "read_counts_file",
    "write_counts_file",
]

BLOCK_SIZE = 4096
COUNTS_HEADER = "# mlcert-counts v1"


@dataclass(frozen=True)
class SmoothingConfig:
    """Certification hyperparameters; defaults are sigma=0.5, n=1000, alpha=0.001, k'=1, k=3."""

    sigma: float = 0.5
    n: int = 1000
    alpha: float = 0.001
    k_prime: int = 1
    k: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if int(self.n) < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.k_prime) < 1 or int(self.k) < 1:
            raise ValueError("k_prime and k must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def check_labels(self, c: int) -> None:
        if self.k_prime > c or self.k > c:
            raise ValueError(f"k_prime={self.k_prime} and k={self.k} must not exceed c={c}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CertificationInstance:
    """Label frequencies of one input plus its ground-truth label set."""

    id: str
    c: int
    k_prime: int
    n: int
    ground_truth: tuple[int, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ground_truth", tuple(sorted(int(g) for g in self.ground_truth)))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        self.validate()

    @property
    def d(self) -> int:
        return len(self.ground_truth)

    def validate(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("id must be a nonempty string")
        if self.c < 1 or self.n < 1 or not 1 <= self.k_prime <= self.c:
            raise ValueError(f"bad sizes c={self.c}, n={self.n}, k_prime={self.k_prime}")
        if len(self.counts) != self.c:
            raise ValueError(f"expected {self.c} counts, got {len(self.counts)}")
        if any(v < 0 or v > self.n for v in self.counts):
            raise ValueError(f"every count must lie in [0, n={self.n}]")
        if sum(self.counts) != self.n * self.k_prime:
            raise ValueError(
                f"counts sum to {sum(self.counts)}, expected n*k_prime={self.n * self.k_prime}"
            )
        if not self.ground_truth:
            raise ValueError("ground_truth must be nonempty")
        if len(set(self.ground_truth)) != len(self.ground_truth):
            raise ValueError("ground_truth has duplicate labels")
        if any(g < 0 or g >= self.c for g in self.ground_truth):
            raise ValueError(f"ground_truth labels must lie in [0, {self.c})")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "c": self.c,
            "k_prime": self.k_prime,
            "n": self.n,
            "ground_truth": list(self.ground_truth),
            "counts": list(self.counts),
        }


def _stream_key(seed: int, instance_id: str) -> np.ndarray:
    digest = hashlib.blake2b(f"{int(seed)}\x00{instance_id}".encode(), digest_size=16).digest()
    return np.frombuffer(digest, dtype="<u8").astype(np.uint64)


def _block_noise(key: np.ndarray, block: int, size: int, dim: int) -> np.ndarray:
    bitgen = np.random.Philox(key=key, counter=np.array([0, 0, 0, block], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal((size, dim))


def _blocks(n: int):
    for b in range(0, (n + BLOCK_SIZE - 1) // BLOCK_SIZE):
        start = b * BLOCK_SIZE
        yield b, min(BLOCK_SIZE, n - start)


def random_sample(point, config: SmoothingConfig, instance_id: str = "") -> np.ndarray:
    """``config.n`` noisy copies of ``point``; returns shape (n, dim)."""
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    key = _stream_key(config.seed, instance_id)
    out = np.empty((config.n, pt.shape[0]))
    for b, size in _blocks(config.n):
        start = b * BLOCK_SIZE
        out[start:start + size] = pt + config.sigma * _block_noise(key, b, size, pt.shape[0])
    return out


def count_frequencies(classifier: SyntheticClassifier, point, config: SmoothingConfig,
                      ground_truth, instance_id: str = "x", workers: int = 1) -> CertificationInstance:
    """Run the base classifier on ``config.n`` noisy copies and count labels."""
    if classifier.k_prime != config.k_prime:
        raise ValueError(
            f"classifier k_prime={classifier.k_prime} differs from config k_prime={config.k_prime}"
        )
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    if pt.shape != (classifier.dimension,):
        raise ValueError(f"point has shape {pt.shape}, classifier expects ({classifier.dimension},)")
    key = _stream_key(config.seed, instance_id)

    def block_counts(job):
        b, size = job
        noisy = pt + config.sigma * _block_noise(key, b, size, pt.shape[0])
        return predict_topk_batch(classifier, noisy).sum(axis=0, dtype=np.int64)

    jobs = list(_blocks(config.n))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(block_counts, jobs))
    else:
        parts = [block_counts(j) for j in jobs]
    counts = np.sum(parts, axis=0)
    return CertificationInstance(
        id=instance_id,
        c=classifier.num_labels,
        k_prime=classifier.k_prime,
        n=config.n,
        ground_truth=tuple(ground_truth),
        counts=tuple(int(v) for v in counts),
    )


class CountsFileError(ValueError):
    """Malformed or invalid counts file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None, record_id: str | None = None):
        self.line = line
        self.record_id = record_id
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


_FIELDS = ("id", "c", "k_prime", "n", "ground_truth", "counts")


def write_counts_file(instances, path, provenance: dict | None = None) -> None:
    """Write a header line, an optional provenance comment and one JSON record per line."""
    lines = [COUNTS_HEADER]
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    seen = set()
    for inst in instances:
        if inst.id in seen:
            raise CountsFileError(f"duplicate id {inst.id!r}", record_id=inst.id)
        seen.add(inst.id)
        lines.append(json.dumps(inst.to_record(), separators=(",", ":")))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_counts_file(path) -> list[CertificationInstance]:
    """Parse and validate a counts file written by :func:`write_counts_file`."""
    instances = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != COUNTS_HEADER:
            raise CountsFileError(f"expected header {COUNTS_HEADER!r}, got {header!r}", line=1)
        for lineno, raw in enumerate(fh, start=2):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CountsFileError(f"malformed record: {exc.msg}", line=lineno) from None
            if not isinstance(rec, dict) or set(rec) != set(_FIELDS):
                raise CountsFileError(f"record must have exactly the fields {list(_FIELDS)}", line=lineno)
            rid = rec["id"]
            if not isinstance(rid, str):
                raise CountsFileError("id must be a string", line=lineno)
            if rid in seen:
                raise CountsFileError(f"duplicate id {rid!r}", line=lineno, record_id=rid)
            ints = [rec["c"], rec["k_prime"], rec["n"], *rec["ground_truth"], *rec["counts"]] \
                if isinstance(rec["ground_truth"], list) and isinstance(rec["counts"], list) else None
            if ints is None or any(isinstance(v, bool) or not isinstance(v, int) for v in ints):
                raise CountsFileError("c, k_prime, n, ground_truth and counts must be integers",
                                      line=lineno, record_id=rid)
            try:
                inst = CertificationInstance(**rec)
            except ValueError as exc:
                raise CountsFileError(f"record {rid!r}: {exc}", line=lineno, record_id=rid) from None
            seen.add(rid)
            instances.append(inst)
    return instances
