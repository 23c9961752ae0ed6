"""Post-hoc test oracle.

A generated input only counts if it stays within a distance bound of some
trusted reference input (validity); a valid input is adversarial when the
network labels it differently from its nearest reference. The oracle runs
over a finished suite and never steers generation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .logic import Requirement, coverage, satisfies
from .network import ActivationCache, Network


def _dist(a: np.ndarray, b: np.ndarray, norm: str) -> float:
    diff = np.ravel(a) - np.ravel(b)
    if norm == "linf":
        return float(np.max(np.abs(diff)))
    if norm == "l0":
        from .l0search import l0_distance

        return float(l0_distance(a, b))
    if norm == "l2":
        return float(np.linalg.norm(diff))
    if norm == "l1":
        return float(np.sum(np.abs(diff)))
    raise ValueError(f"unknown norm {norm!r}")


@dataclass
class ReferenceSet:
    """Inputs with trusted labels, queried for nearest neighbours under ``norm``."""

    inputs: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,)
    norm: str = "linf"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] == 0:
            raise ValueError("reference set must be a non-empty (N, d) array")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("one label per reference input is required")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def nearest(refs: ReferenceSet, t: np.ndarray) -> tuple[int, float]:
    """Linear-scan nearest reference; ties go to the earliest index."""
    t = np.ravel(np.asarray(t, dtype=np.float64))
    best_idx, best_dist = 0, _dist(refs.inputs[0], t, refs.norm)
    for i in range(1, len(refs)):
        d = _dist(refs.inputs[i], t, refs.norm)
        if d < best_dist:
            best_idx, best_dist = i, d
    return best_idx, best_dist


def validity_check(refs: ReferenceSet, t: np.ndarray, bound: float) -> bool:
    """A test is valid when some reference input lies within ``bound`` of it."""
    if bound <= 0:
        raise ValueError("validity bound must be positive")
    _, dist = nearest(refs, t)
    return dist <= bound


@dataclass
class AdversarialRecord:
    """A valid test whose network label disagrees with its nearest reference's.

    ``trusted_label`` is the reference set's label, recorded for diagnostics;
    the pass/fail rule compares the network's labels at both points.
    """

    test_index: int
    input: np.ndarray
    nearest_index: int
    distance: float
    label: int
    nearest_label: int
    trusted_label: int
    norm: str


def robustness_check(
    net: Network,
    refs: ReferenceSet,
    t: np.ndarray,
    test_index: int = -1,
    cache: Optional[ActivationCache] = None,
) -> tuple[bool, Optional[AdversarialRecord]]:
    """Compare the network's label on ``t`` with its label on the nearest reference."""
    cache = cache or ActivationCache(net)
    idx, dist = nearest(refs, t)
    label = cache.get(t).label
    ref_label = cache.get(refs.inputs[idx]).label
    if label == ref_label:
        return True, None
    record = AdversarialRecord(
        test_index=test_index,
        input=np.ravel(np.asarray(t, dtype=np.float64)).copy(),
        nearest_index=idx,
        distance=dist,
        label=label,
        nearest_label=ref_label,
        trusted_label=int(refs.labels[idx]),
        norm=refs.norm,
    )
    return False, record


@dataclass
class CoverageReport:
    coverage: float
    satisfied: int
    open: int
    failed: int
    requirement_status: list[dict]
    adversarial: list[AdversarialRecord]
    adversary_pct: float
    distance_min: Optional[float]
    distance_mean: Optional[float]
    suite_size: int


def suite_report(
    net: Network,
    refs: ReferenceSet,
    suite: Sequence[np.ndarray],
    reqs: Sequence[Requirement],
    bound: float,
    cache: Optional[ActivationCache] = None,
) -> CoverageReport:
    """Evaluate a finished suite: coverage, per-requirement status, adversarial records.

    Requirement statuses are reconciled against the final suite: anything the
    suite satisfies is marked satisfied (even if generation had given up on
    it), so satisfied / open / failed always partition the requirement set.
    """
    cache = cache or ActivationCache(net)
    for r in reqs:
        if satisfies(suite, r, net, cache):
            r.status = "satisfied"
        elif r.status == "satisfied":
            r.status = "open"
    status_list = [{"tag": r.tag.label(), "status": r.status} for r in reqs]
    n_sat = sum(1 for r in reqs if r.status == "satisfied")
    n_failed = sum(1 for r in reqs if r.status == "failed")
    records: list[AdversarialRecord] = []
    for i, t in enumerate(suite):
        if not validity_check(refs, t, bound):
            continue
        ok, record = robustness_check(net, refs, t, test_index=i, cache=cache)
        if not ok:
            records.append(record)
    distances = [r.distance for r in records]
    return CoverageReport(
        coverage=coverage(suite, reqs, net, cache) if reqs else 0.0,
        satisfied=n_sat,
        open=len(reqs) - n_sat - n_failed,
        failed=n_failed,
        requirement_status=status_list,
        adversarial=records,
        adversary_pct=len(records) / len(suite) if len(suite) else 0.0,
        distance_min=min(distances) if distances else None,
        distance_mean=float(np.mean(distances)) if distances else None,
        suite_size=len(suite),
    )


def report_to_dict(report: CoverageReport) -> dict:
    """JSON-ready view of a report (adversarial inputs referenced by file elsewhere)."""
    return {
        "coverage": report.coverage,
        "satisfied": report.satisfied,
        "open": report.open,
        "failed": report.failed,
        "suite_size": report.suite_size,
        "requirements": report.requirement_status,
        "adversary_pct": report.adversary_pct,
        "distance_min": report.distance_min,
        "distance_mean": report.distance_mean,
        "adversarial": [
            {
                "test_index": r.test_index,
                "file": f"adv{r.test_index:05d}.npy",
                "nearest_index": r.nearest_index,
                "distance": r.distance,
                "label": r.label,
                "nearest_label": r.nearest_label,
                "trusted_label": r.trusted_label,
                "norm": r.norm,
            }
            for r in report.adversarial
        ],
    }


def save_adversarial(records: Sequence[AdversarialRecord], directory, renderer=None) -> None:
    """Dump adversarial inputs as flat float64 vectors; ``renderer`` optionally
    writes an image next to each vector (disabled by default)."""
    import os

    os.makedirs(directory, exist_ok=True)
    for r in records:
        path = os.path.join(directory, f"adv{r.test_index:05d}.npy")
        np.save(path, r.input)
        if renderer is not None:
            renderer(r, os.path.splitext(path)[0] + ".png")
