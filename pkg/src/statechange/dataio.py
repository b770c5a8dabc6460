"""On-disk formats: feature files, dataset manifests, annotations.

Feature file layout (little-endian): magic ``FETV``, u32 version (1),
u32 num_frames, u32 dim, then ``num_frames * dim`` 32-bit floats in
row-major order.  Manifests and annotations are JSON.  Every writer goes
through write-to-temp-then-rename, so output files are never partial.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (AnnotationInterval, AnnotationTrack, Category,
                   CategoryCatalog, LabelKind, VideoFeatures)

FEATURE_MAGIC = b"FETV"
FEATURE_VERSION = 1
MANIFEST_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------

def feature_bytes(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
    header = FEATURE_MAGIC + struct.pack("<III", FEATURE_VERSION,
                                         frames.shape[0], frames.shape[1])
    return header + np.ascontiguousarray(frames, dtype="<f4").tobytes()


def write_features(path, frames: np.ndarray) -> None:
    atomic_write_bytes(path, feature_bytes(frames))


def features_from_bytes(data: bytes) -> np.ndarray:
    header_size = 4 + struct.calcsize("<III")
    if len(data) < header_size or data[:4] != FEATURE_MAGIC:
        raise ValueError("bad feature-file magic")
    version, num_frames, dim = struct.unpack("<III", data[4:header_size])
    if version != FEATURE_VERSION:
        raise ValueError(f"unsupported feature-file version {version}")
    expected = num_frames * dim * 4
    payload = data[header_size:]
    if len(payload) < expected:
        raise ValueError(f"truncated payload ({len(payload)} bytes, expected {expected})")
    if len(payload) > expected:
        raise ValueError(f"oversized payload ({len(payload)} bytes, expected {expected})")
    flat = np.frombuffer(payload, dtype="<f4", count=num_frames * dim)
    return flat.astype(np.float64).reshape(num_frames, dim)


def read_features(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return features_from_bytes(fh.read())


# ---------------------------------------------------------------------------
# Catalog / annotation JSON
# ---------------------------------------------------------------------------

def catalog_to_dict(catalog: CategoryCatalog) -> dict:
    return {"categories": [
        {"name": c.name, "initial_state": c.initial_state,
         "end_state": c.end_state, "action": c.action}
        for c in catalog.categories]}


def catalog_from_dict(data: dict) -> CategoryCatalog:
    return CategoryCatalog(tuple(
        Category(entry["name"], entry["initial_state"],
                 entry["end_state"], entry["action"])
        for entry in data["categories"]))


def annotations_to_json(annotations: Iterable[AnnotationTrack]) -> str:
    rows = [{"video_id": track.video_id,
             "intervals": [{"kind": iv.kind.value, "start": iv.start, "end": iv.end}
                           for iv in track.intervals]}
            for track in annotations]
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


def annotations_from_json(text: str) -> list[AnnotationTrack]:
    rows = json.loads(text)
    return [AnnotationTrack(row["video_id"], tuple(
        AnnotationInterval(LabelKind(iv["kind"]), iv["start"], iv["end"])
        for iv in row["intervals"])) for row in rows]


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LoadedDataset:
    catalog: CategoryCatalog
    videos: tuple[VideoFeatures, ...]
    annotations: tuple[AnnotationTrack, ...]
    splits: dict  # video id -> "train" | "heldout"

    def split(self, name: str) -> list[VideoFeatures]:
        return [v for v in self.videos if self.splits.get(v.id) == name]

    def annotations_for(self, videos: Sequence[VideoFeatures]) -> list[AnnotationTrack]:
        index = {a.video_id: a for a in self.annotations}
        return [index[v.id] for v in videos if v.id in index]


def write_dataset(out_dir, catalog: CategoryCatalog,
                  videos: Sequence[VideoFeatures],
                  annotations: Sequence[AnnotationTrack] = (),
                  splits: dict | None = None) -> str:
    """Write features, annotations and manifest under ``out_dir``; returns
    the manifest path."""
    out_dir = os.fspath(out_dir)
    features_dir = os.path.join(out_dir, "features")
    os.makedirs(features_dir, exist_ok=True)
    entries = []
    for video in videos:
        rel = os.path.join("features", f"{video.id}.fetv")
        write_features(os.path.join(out_dir, rel), video.frames)
        entry = {"id": video.id, "label": video.label, "fps": video.fps,
                 "num_frames": video.num_frames, "features": rel}
        if splits and video.id in splits:
            entry["split"] = splits[video.id]
        entries.append(entry)
    manifest = {"format_version": MANIFEST_VERSION,
                "catalog": catalog_to_dict(catalog),
                "videos": entries}
    if annotations:
        atomic_write_text(os.path.join(out_dir, "annotations.json"),
                          annotations_to_json(annotations))
        manifest["annotations"] = "annotations.json"
    manifest_path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(manifest_path,
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_dataset(manifest_path) -> LoadedDataset:
    """Load a dataset; feature headers are checked against the manifest."""
    manifest_path = os.fspath(manifest_path)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {manifest.get('format_version')}")
    base = os.path.dirname(manifest_path)
    catalog = catalog_from_dict(manifest["catalog"])
    videos, splits = [], {}
    for entry in manifest["videos"]:
        path = os.path.join(base, entry["features"])
        if not os.path.exists(path):
            raise ValueError(f"missing feature file {entry['features']!r}")
        frames = read_features(path)
        if frames.shape[0] != entry["num_frames"]:
            raise ValueError(
                f"feature file {entry['features']!r} has {frames.shape[0]} frames, "
                f"manifest says {entry['num_frames']}")
        videos.append(VideoFeatures(entry["id"], entry["label"], frames,
                                    entry.get("fps", 1.0)))
        splits[entry["id"]] = entry.get("split", "train")
    annotations: tuple[AnnotationTrack, ...] = ()
    if "annotations" in manifest:
        with open(os.path.join(base, manifest["annotations"]), "r",
                  encoding="utf-8") as fh:
            annotations = tuple(annotations_from_json(fh.read()))
    return LoadedDataset(catalog, tuple(videos), annotations, splits)


def jsonl_dumps(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)
