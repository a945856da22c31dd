"""Certified top-k precision, recall and f1 at a perturbation radius.

Per instance: ``precision = e / k``, ``recall = e / d``, ``f1 = 2 e / (d + k)``;
dataset metrics are plain means over instances.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .certifier import MODES, CertifiedResult, certify_batch
from .sampler import SmoothingConfig

__all__ = [
    "MetricsRow",
    "ResultsFileError",
    "RESULTS_HEADER",
    "METRICS_HEADER",
    "default_r_grid",
    "parse_r_grid",
    "instance_metrics",
    "aggregate",
    "sweep",
    "config_hash",
    "write_results_file",
    "read_results_file",
    "write_metrics_file",
    "read_metrics_file",
]

RESULTS_HEADER = "# mlcert-results v1"
METRICS_HEADER = "# mlcert-metrics v1"
_RESULT_COLUMNS = ["id", "mode", "R", "e", "d", "k"]
_METRIC_COLUMNS = ["mode", "R", "precision", "recall", "f1", "n"]


@dataclass(frozen=True)
class MetricsRow:
    R: float
    mode: str
    certified_precision: float
    certified_recall: float
    certified_f1: float
    num_instances: int


class ResultsFileError(ValueError):
    pass


def parse_r_grid(spec: str) -> list[float]:
    """Parse ``"start:stop:step"`` (stop inclusive) or a comma-separated list."""
    try:
        if ":" in spec:
            start, stop, step = (float(v) for v in spec.split(":"))
            if step <= 0 or stop < start or start < 0:
                raise ValueError
            count = int(np.floor((stop - start) / step + 1e-9))
            return [round(start + i * step, 12) for i in range(count + 1)]
        values = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"invalid R grid {spec!r}; expected start:stop:step or a list") from None
    if not values or any(v < 0 for v in values) or values != sorted(values):
        raise ValueError(f"R grid {spec!r} must be nonempty, nonnegative and ascending")
    return values


def default_r_grid() -> list[float]:
    return parse_r_grid("0:2:0.05")


def instance_metrics(e: int, d: int, k: int) -> tuple[float, float, float]:
    if d < 1 or k < 1:
        raise ValueError("d and k must be >= 1")
    if not 0 <= e <= min(d, k):
        raise ValueError(f"e={e} must lie in [0, min(d={d}, k={k})]")
    return e / k, e / d, 2 * e / (d + k)


def aggregate(results) -> list[MetricsRow]:
    """Average per-instance metrics for every (mode, R); rows sorted by (mode, R)."""
    groups = defaultdict(list)
    for r in results:
        if r.d is None or r.k is None:
            raise ValueError(f"result for {r.instance_id!r} lacks d or k")
        groups[(r.mode, r.radius)].append(instance_metrics(r.certified_size, r.d, r.k))
    if not groups:
        raise ValueError("no results to aggregate")
    rows = []
    for (mode, R) in sorted(groups):
        vals = np.array(groups[(mode, R)])
        p, rc, f1 = vals.mean(axis=0)
        rows.append(MetricsRow(R, mode, float(p), float(rc), float(f1), len(vals)))
    return rows


def sweep(instances, config: SmoothingConfig, r_grid, modes=("multiguard",),
          strict_paper_cp: bool = False, workers: int = 1) -> list[MetricsRow]:
    """Certify every instance on ``r_grid`` under each mode and aggregate."""
    instances = list(instances)
    if not instances:
        raise ValueError("sweep needs at least one instance")
    r_grid = [float(r) for r in r_grid]
    if r_grid != sorted(r_grid):
        raise ValueError("R grid must be sorted ascending")
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    results = certify_batch(instances, config, r_grid, modes, strict_paper_cp, workers)
    return aggregate(results)


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _write_table(path, header_line, provenance, columns, rows) -> None:
    buf = io.StringIO()
    buf.write(header_line + "\n")
    if provenance is not None:
        buf.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _read_table(path, header_line, columns):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != header_line:
        raise ResultsFileError(f"{path}: line 1: expected header {header_line!r}")
    body = [(i, ln) for i, ln in enumerate(lines, start=1) if ln and not ln.startswith("#")]
    if not body:
        raise ResultsFileError(f"{path}: missing column header")
    head_no, head = body[0]
    if next(csv.reader([head])) != columns:
        raise ResultsFileError(f"{path}: line {head_no}: expected columns {columns}")
    return [(i, next(csv.reader([ln]))) for i, ln in body[1:]]


def write_results_file(results, path, provenance: dict | None = None) -> None:
    rows = [[r.instance_id, r.mode, repr(float(r.radius)), r.certified_size, r.d, r.k] for r in results]
    _write_table(path, RESULTS_HEADER, provenance, _RESULT_COLUMNS, rows)


def read_results_file(path) -> list[CertifiedResult]:
    out = []
    for lineno, row in _read_table(path, RESULTS_HEADER, _RESULT_COLUMNS):
        rid = row[0] if row else None
        try:
            if len(row) != len(_RESULT_COLUMNS):
                raise ValueError(f"expected {len(_RESULT_COLUMNS)} fields, got {len(row)}")
            out.append(CertifiedResult(row[0], float(row[2]), int(row[3]), row[1], int(row[4]), int(row[5])))
        except ValueError as exc:
            raise ResultsFileError(f"{path}: line {lineno} (id {rid!r}): {exc}") from None
    if not out:
        raise ResultsFileError(f"{path}: results file contains no records")
    return out


def write_metrics_file(rows, path, provenance: dict | None = None) -> None:
    table = [[r.mode, repr(float(r.R)), f"{r.certified_precision:.10f}", f"{r.certified_recall:.10f}",
              f"{r.certified_f1:.10f}", r.num_instances] for r in rows]
    _write_table(path, METRICS_HEADER, provenance, _METRIC_COLUMNS, table)


def read_metrics_file(path) -> list[MetricsRow]:
    out = []
    for lineno, row in _read_table(path, METRICS_HEADER, _METRIC_COLUMNS):
        try:
            out.append(MetricsRow(float(row[1]), row[0], float(row[2]), float(row[3]),
                                  float(row[4]), int(row[5])))
        except (ValueError, IndexError) as exc:
            raise ResultsFileError(f"{path}: line {lineno}: {exc}") from None
    return out
