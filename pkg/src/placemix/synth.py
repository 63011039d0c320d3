"""Deterministic synthetic dataset generator for desk-scale runs.

Per place: one cluster center in feature space; every image of the place is
the center plus Gaussian noise of magnitude cluster_spread. Optionally the
trailing fraction of embedding channels carries per-image distractor values
instead of place signal (nuisance dimensions a trained depth projection
learns to discard); off by default. Geotags are laid on a coarse grid with
small per-image jitter so images of one place sit < 25 m apart while
distinct places sit > 100 m apart. Feature files and the manifest use the
engine's own formats, so generated datasets feed straight into
train/index/evaluate.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .manifest import ImageRecord, write_manifest
from .tensorfile import write_tensor

__all__ = ["synthesize"]

# ~0.002 deg = ~222 m between grid neighbours; +-5e-5 deg jitter = +-5.5 m
_GRID_STEP_DEG = 0.002
_JITTER_DEG = 5e-5


def synthesize(
    out_dir,
    n_places=32,
    images_per_place=4,
    token_count=16,
    embed_dim=24,
    cluster_spread=0.25,
    seed=0,
    database_per_place=1,
    queries_per_place=1,
    distractor_fraction=0.0,
    distractor_scale=1.5,
):
    """Write features/ tensor files plus manifest.jsonl under out_dir.

    Each place contributes images_per_place train images plus
    database_per_place / queries_per_place held-out images from the same
    cluster. Returns the manifest path.
    """
    if n_places < 1 or images_per_place < 1:
        raise ValueError("need at least one place and one image per place")
    side = math.isqrt(token_count)
    if side * side != token_count:
        raise ValueError(f"token_count {token_count} must be a perfect square")
    if not 0.0 <= distractor_fraction < 1.0:
        raise ValueError(f"distractor_fraction must be in [0, 1), got {distractor_fraction}")
    signal_dim = embed_dim - int(embed_dim * distractor_fraction)

    rng = np.random.default_rng(seed)
    feature_dir = os.path.join(out_dir, "features")
    os.makedirs(feature_dir, exist_ok=True)

    grid = math.ceil(math.sqrt(n_places))
    records = []
    for p in range(n_places):
        center = np.zeros((token_count, embed_dim))
        center[:, :signal_dim] = rng.standard_normal((token_count, signal_dim))
        base_lat = (p // grid) * _GRID_STEP_DEG
        base_lon = (p % grid) * _GRID_STEP_DEG
        place_id = f"place{p:04d}"

        roles = (
            [("train", i) for i in range(images_per_place)]
            + [("database", i) for i in range(database_per_place)]
            + [("query", i) for i in range(queries_per_place)]
        )
        for split, i in roles:
            tokens = center.copy()
            tokens[:, :signal_dim] += cluster_spread * rng.standard_normal(
                (token_count, signal_dim)
            )
            if signal_dim < embed_dim:
                tokens[:, signal_dim:] = distractor_scale * rng.standard_normal(
                    (token_count, embed_dim - signal_dim)
                )
            image_id = f"{place_id}_{split}{i}"
            rel = os.path.join("features", f"{image_id}.vprt")
            write_tensor(os.path.join(out_dir, rel), tokens.astype(np.float32))
            lat = base_lat + rng.uniform(-_JITTER_DEG, _JITTER_DEG)
            lon = base_lon + rng.uniform(-_JITTER_DEG, _JITTER_DEG)
            records.append(
                ImageRecord(
                    image_id=image_id,
                    place_id=place_id,
                    lat=lat,
                    lon=lon,
                    split=split,
                    features=rel,
                )
            )

    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(manifest_path, records)
    return manifest_path
