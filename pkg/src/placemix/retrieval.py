"""Descriptor database with exact top-k cosine search and geodesic recall
evaluation (a query succeeds at k if any top-k hit lies within the distance
threshold, strictly less-than, default 25 m).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import ShapeError

__all__ = [
    "EARTH_RADIUS_M",
    "CoordinateRangeError",
    "GeoTag",
    "RetrievalIndex",
    "EvalReport",
    "haversine_m",
    "query_topk",
    "evaluate",
]

EARTH_RADIUS_M = 6_371_000.0


class CoordinateRangeError(ValueError):
    pass


@dataclass(frozen=True)
class GeoTag:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise CoordinateRangeError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise CoordinateRangeError(f"lon {self.lon} outside [-180, 180]")


def haversine_m(a, b):
    """Great-circle distance in meters on a spherical Earth."""
    lat1, lon1 = math.radians(a.lat), math.radians(a.lon)
    lat2, lon2 = math.radians(b.lat), math.radians(b.lon)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


@dataclass
class RetrievalIndex:
    """Immutable database of unit-norm descriptors with parallel geotags."""

    image_ids: list[str]
    descriptors: np.ndarray  # (n, dim) float
    geotags: list[GeoTag]

    def __post_init__(self):
        self.descriptors = np.asarray(self.descriptors)
        if self.descriptors.ndim != 2:
            raise ShapeError(f"descriptors must be (n, dim), got {self.descriptors.shape}")
        n = self.descriptors.shape[0]
        if len(self.image_ids) != n or len(self.geotags) != n:
            raise ValueError(
                f"index rows disagree: {len(self.image_ids)} ids, "
                f"{n} descriptors, {len(self.geotags)} geotags"
            )

    def __len__(self):
        return self.descriptors.shape[0]


def query_topk(index, query, k):
    """Exact top-k by descending cosine similarity, ties by ascending image id.

    Returns a list of (image_id, similarity) pairs.
    """
    if len(index) == 0:
        raise ValueError("cannot query an empty index")
    q = np.asarray(query).reshape(-1)
    if q.shape[0] != index.descriptors.shape[1]:
        raise ShapeError(
            f"query length {q.shape[0]} does not match index dim "
            f"{index.descriptors.shape[1]}"
        )
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    sims = index.descriptors @ q
    order = sorted(range(len(index)), key=lambda i: (-sims[i], index.image_ids[i]))
    return [(index.image_ids[i], float(sims[i])) for i in order[:k]]


@dataclass
class EvalReport:
    threshold_m: float
    ks: list[int]
    recalls: dict[int, float] = field(default_factory=dict)  # percentages
    query_count: int = 0

    def to_json(self):
        return json.dumps(
            {
                "threshold_m": self.threshold_m,
                "ks": list(self.ks),
                "recalls": {str(k): self.recalls[k] for k in self.ks},
                "query_count": self.query_count,
            },
            indent=2,
            sort_keys=True,
        )


def evaluate(index, query_descriptors, query_geotags, ks=(1, 5, 10), threshold_m=25.0):
    """Recall@k over the query set: success when any top-k hit is within
    threshold_m (strict) of the query geotag by haversine distance.
    """
    queries = np.asarray(query_descriptors)
    if queries.ndim != 2 or queries.shape[0] == 0:
        raise ValueError(f"need a non-empty (q, dim) query matrix, got {queries.shape}")
    if len(query_geotags) != queries.shape[0]:
        raise ValueError(
            f"{queries.shape[0]} query descriptors but {len(query_geotags)} geotags"
        )
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] < 1:
        raise ValueError(f"ks must be positive, got {ks}")

    tag_by_id = dict(zip(index.image_ids, index.geotags))
    successes = {k: 0 for k in ks}
    kmax = ks[-1]
    for qi in range(queries.shape[0]):
        hits = query_topk(index, queries[qi], kmax)
        qtag = query_geotags[qi]
        within = [haversine_m(qtag, tag_by_id[image_id]) < threshold_m for image_id, _ in hits]
        for k in ks:
            if any(within[:k]):
                successes[k] += 1
    count = queries.shape[0]
    recalls = {k: 100.0 * successes[k] / count for k in ks}
    return EvalReport(threshold_m=float(threshold_m), ks=ks, recalls=recalls, query_count=count)
