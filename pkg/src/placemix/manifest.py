"""Dataset manifest: JSON-Lines, one image record per line.

Required fields per line: image_id, place_id, lat, lon, split, features.
The features value is a path (relative to the manifest) to a tensor file
of shape (C, D).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

__all__ = ["ImageRecord", "ManifestError", "parse_manifest", "write_manifest", "VALID_SPLITS"]

VALID_SPLITS = ("train", "database", "query")

_FIELDS = ("image_id", "place_id", "lat", "lon", "split", "features")


class ManifestError(ValueError):
    """Malformed manifest line; message names the offending line number."""


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    place_id: str
    lat: float
    lon: float
    split: str
    features: str


def _validate(rec, where):
    if not rec.image_id or not rec.place_id:
        raise ManifestError(f"{where}: image_id and place_id must be non-empty")
    if not -90.0 <= rec.lat <= 90.0:
        raise ManifestError(f"{where}: lat {rec.lat} outside [-90, 90]")
    if not -180.0 <= rec.lon <= 180.0:
        raise ManifestError(f"{where}: lon {rec.lon} outside [-180, 180]")
    if rec.split not in VALID_SPLITS:
        raise ManifestError(f"{where}: unknown split {rec.split!r}")
    if not rec.features:
        raise ManifestError(f"{where}: features path must be non-empty")


def parse_manifest(path):
    """Read and validate all records; duplicate image ids are rejected."""
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{where}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{where}: each line must be a JSON object")
            missing = [f for f in _FIELDS if f not in obj]
            if missing:
                raise ManifestError(f"{where}: missing fields {missing}")
            try:
                rec = ImageRecord(
                    image_id=str(obj["image_id"]),
                    place_id=str(obj["place_id"]),
                    lat=float(obj["lat"]),
                    lon=float(obj["lon"]),
                    split=str(obj["split"]),
                    features=str(obj["features"]),
                )
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"{where}: {exc}") from exc
            _validate(rec, where)
            if rec.image_id in seen:
                raise ManifestError(f"{where}: duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
            records.append(rec)
    return records


def write_manifest(path, records):
    lines = []
    for rec in records:
        lines.append(
            json.dumps(
                {
                    "image_id": rec.image_id,
                    "place_id": rec.place_id,
                    "lat": rec.lat,
                    "lon": rec.lon,
                    "split": rec.split,
                    "features": rec.features,
                },
                sort_keys=True,
            )
        )
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    os.replace(tmp, path)
