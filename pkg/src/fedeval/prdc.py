"""Precision, recall, density, and coverage over k-NN manifolds.

All four metrics place a ball of radius "distance to the k-th nearest
neighbor" around each sample and test strict containment:

* precision -- fraction of generated samples inside any reference ball,
* recall    -- fraction of reference samples inside any generated ball,
* density   -- mean number of reference balls covering a generated
  sample, divided by k,
* coverage  -- fraction of reference balls containing at least one
  generated sample.

Nearest neighbors are exact (full O(n^2) distance matrix); ties in
neighbor distance resolve to the same radius value regardless of index
order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SampleCountError
from .statkit import ClientSet, as_embeddings

DEFAULT_K = 5


@dataclass
class PrdcResult:
    precision: float
    recall: float
    density: float
    coverage: float

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "density": self.density,
            "coverage": self.coverage,
        }


def _pairwise_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(x**2, axis=1)[:, None]
        + np.sum(y**2, axis=1)[None, :]
        - 2.0 * (x @ y.T)
    )
    np.clip(sq, 0.0, None, out=sq)
    return np.sqrt(sq)


def knn_radii(x, k: int) -> np.ndarray:
    """Distance from each sample to its k-th nearest neighbor (self excluded)."""
    x = as_embeddings(x)
    n = x.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n <= k:
        raise SampleCountError(f"k-NN radii require more than k={k} samples, got {n}")
    dists = _pairwise_distances(x, x)
    np.fill_diagonal(dists, np.inf)
    return np.sort(dists, axis=1)[:, k - 1]


def prdc_scores(ref, gen, k: int = DEFAULT_K) -> PrdcResult:
    """All four manifold metrics for a generated set against a reference set."""
    ref = as_embeddings(ref)
    gen = as_embeddings(gen)
    if ref.shape[1] != gen.shape[1]:
        raise ValueError(f"dimension mismatch: {ref.shape[1]} vs {gen.shape[1]}")
    ref_radii = knn_radii(ref, k)
    gen_radii = knn_radii(gen, k)
    dists = _pairwise_distances(ref, gen)

    in_ref_balls = dists < ref_radii[:, None]
    in_gen_balls = dists < gen_radii[None, :]

    precision = float(in_ref_balls.any(axis=0).mean())
    recall = float(in_gen_balls.any(axis=1).mean())
    density = float(in_ref_balls.sum(axis=0).mean() / k)
    coverage = float(in_ref_balls.any(axis=1).mean())
    return PrdcResult(
        precision=precision, recall=recall, density=density, coverage=coverage
    )


@dataclass
class PrdcAggregate:
    all: PrdcResult
    avg: PrdcResult
    per_client: list[PrdcResult]

    def to_json_dict(self) -> dict:
        return {
            "all": self.all.to_json_dict(),
            "avg": self.avg.to_json_dict(),
            "per_client": [r.to_json_dict() for r in self.per_client],
        }


def prdc_aggregate(clients: ClientSet, gen, k: int = DEFAULT_K) -> PrdcAggregate:
    """Pooled-reference scores plus the weighted mean of per-client scores."""
    gen = as_embeddings(gen)
    per_client = []
    for c in clients:
        if c.embeddings is None:
            raise ValueError(f"client {c.id!r} carries no raw embeddings")
        per_client.append(prdc_scores(c.embeddings, gen, k=k))
    w = clients.weights
    avg = PrdcResult(
        precision=float(w @ [r.precision for r in per_client]),
        recall=float(w @ [r.recall for r in per_client]),
        density=float(w @ [r.density for r in per_client]),
        coverage=float(w @ [r.coverage for r in per_client]),
    )
    pooled = clients.pooled_embeddings()
    return PrdcAggregate(all=prdc_scores(pooled, gen, k=k), avg=avg, per_client=per_client)
