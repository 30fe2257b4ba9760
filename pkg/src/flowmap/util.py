"""Shared numeric helpers: Monte-Carlo L^p error with deterministic reduction."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = ["MeasureResult", "mc_lp_error", "worker_count", "collision_counts",
           "rank_spread"]


def collision_counts(points) -> list:
    """Per coordinate: number of unordered point pairs sharing that value exactly."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = []
    for i in range(pts.shape[1]):
        _, counts = np.unique(pts[:, i], return_counts=True)
        out.append(int(sum(c * (c - 1) // 2 for c in counts)))
    return out


def rank_spread(values, delta: float) -> np.ndarray:
    """Deterministic perturbation making values pairwise distinct.

    Sorted values gain delta per rank step, so the minimum gap becomes at
    least delta while no value moves by more than (len - 1) * delta.
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    out = values.copy()
    out[order] += delta * np.arange(len(values))
    return out


@dataclass(frozen=True)
class MeasureResult:
    value: float
    stderr: float
    samples: int
    seed: int

    def __float__(self):
        return self.value


def worker_count() -> int:
    raw = os.environ.get("FLOWMAP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def mc_lp_error(f_approx, f_true, domain, p: float, samples: int, seed: int) -> MeasureResult:
    """Monte-Carlo estimate of the L^p(K) distance between two maps on a box.

    The sample set is fixed by the seed and split into chunks whose partial
    sums are combined in a fixed order, so the result is byte-identical for a
    given (seed, samples) regardless of the worker count (FLOWMAP_THREADS).
    """
    domain = np.asarray(domain, dtype=float)
    n = domain.shape[0]
    rng = np.random.default_rng(seed)
    pts = rng.uniform(domain[:, 0], domain[:, 1], size=(samples, n))
    vol = float(np.prod(domain[:, 1] - domain[:, 0]))
    workers = worker_count()
    chunks = np.array_split(pts, max(1, min(64, workers * 4)))

    def moment(chunk):
        gap = np.asarray(f_approx(chunk), dtype=float) - np.asarray(f_true(chunk), dtype=float)
        r = np.linalg.norm(np.atleast_2d(gap.reshape(len(chunk), -1)), axis=1)
        return r ** p

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(moment, chunks))
    else:
        parts = [moment(c) for c in chunks]
    vals = np.concatenate(parts)
    mean = math.fsum(vals.tolist()) / samples
    var = math.fsum(((vals - mean) ** 2).tolist()) / max(1, samples - 1)
    se_mean = math.sqrt(var / samples)
    value = (mean * vol) ** (1.0 / p) if mean > 0 else 0.0
    if mean > 0:
        stderr = (vol ** (1.0 / p)) * (1.0 / p) * mean ** (1.0 / p - 1.0) * se_mean
    else:
        stderr = 0.0
    return MeasureResult(value=float(value), stderr=float(stderr), samples=samples, seed=seed)
