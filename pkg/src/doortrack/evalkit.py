"""Trajectory-error metrics and ECDF reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class ErrorSummary:
    samples: tuple[float, ...]
    median: float
    mean: float
    p90: float


@dataclass(frozen=True)
class ImprovementReport:
    """How much smaller the adaptive run's errors are than the fixed run's."""

    median_improvement_m: float
    mean_improvement_m: float


def summarize(samples: Sequence[float]) -> ErrorSummary:
    """Summary statistics; the median uses lower interpolation on even counts
    and p90 is the classical nearest-rank percentile."""
    if len(samples) == 0:
        raise InvalidInputError("no samples to summarize")
    vals = sorted(float(s) for s in samples)
    n = len(vals)
    median = vals[(n - 1) // 2]
    p90 = vals[max(0, int(np.ceil(0.9 * n)) - 1)]
    return ErrorSummary(
        samples=tuple(samples),
        median=median,
        mean=float(np.mean(vals)),
        p90=p90,
    )


def point_polyline_distance(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Minimum distance from each point to any polyline segment (clamped to
    segment ends)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(polyline, dtype=float).reshape(-1, 2)
    a = ref[:-1]  # (S, 2)
    d = ref[1:] - a
    len2 = np.maximum((d * d).sum(axis=1), 1e-300)
    rel = pts[:, None, :] - a[None, :, :]  # (N, S, 2)
    t = np.clip((rel * d[None, :, :]).sum(axis=2) / len2[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.sqrt(((pts[:, None, :] - closest) ** 2).sum(axis=2))
    return dist.min(axis=1)


def trajectory_error(fixes: Sequence, reference: Sequence) -> ErrorSummary:
    """Distance of every fix to the nearest point of the reference polyline."""
    if len(fixes) == 0:
        raise InvalidInputError("no fixes to evaluate")
    if len(reference) < 2:
        raise InvalidInputError("reference polyline needs >= 2 vertices")
    pts = np.array([[p[0], p[1]] for p in fixes], dtype=float)
    ref = np.array([[p[0], p[1]] for p in reference], dtype=float)
    return summarize(point_polyline_distance(pts, ref).tolist())


def ecdf(samples: Sequence[float]) -> list[tuple[float, float]]:
    """Step points (value, P(X <= value)); duplicate values collapse and the
    final probability is exactly 1."""
    if len(samples) == 0:
        raise InvalidInputError("no samples for an ECDF")
    vals, counts = np.unique(np.asarray(samples, dtype=float), return_counts=True)
    n = counts.sum()
    cum = np.cumsum(counts)
    return [(float(v), float(k) / float(n)) for v, k in zip(vals, cum)]


def compare(adaptive: ErrorSummary, fixed: ErrorSummary) -> ImprovementReport:
    """Positive numbers mean the adaptive run is better."""
    return ImprovementReport(
        median_improvement_m=fixed.median - adaptive.median,
        mean_improvement_m=fixed.mean - adaptive.mean,
    )


# --------------------------------------------------------------------------
# CSV exports


def write_ecdf_csv(samples: Sequence[float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["error_m", "probability"])
        for v, p in ecdf(samples):
            w.writerow([repr(v), repr(p)])


def write_summary_csv(rows: Sequence[tuple[str, ErrorSummary]], path) -> None:
    """One row per labeled run."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["run", "n_samples", "median_m", "mean_m", "p90_m"])
        for label, s in rows:
            w.writerow([label, len(s.samples), repr(s.median), repr(s.mean), repr(s.p90)])
