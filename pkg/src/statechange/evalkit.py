"""Evaluation metrics and analysis exports.

``precision_at_1`` follows the single-frame protocol: a predicted frame
is correct iff it falls inside any ground-truth interval of its kind
(inclusive bounds); per-video scores are averaged over the videos of each
category and then over categories.  ``mean_average_precision`` ranks all
frames of a video per class by predicted probability and averages AP over
every (video, class) pair that has at least one positive frame.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from . import model as model_mod
from .core import (AnnotationTrack, CategoryCatalog, FrameScores, LabelKind,
                   Localization, VideoFeatures)
from .decode import DEFAULT_OPTIONS, DecodeOptions, classify, localize

#: Class order of the per-frame probability matrices used by mAP.
MAP_CLASS_KINDS = (LabelKind.S1, LabelKind.A, LabelKind.S2)


def _track_index(annotations: Iterable[AnnotationTrack]) -> dict[str, AnnotationTrack]:
    return {track.video_id: track for track in annotations}


def _score_prediction(loc: Localization, track: AnnotationTrack) -> tuple[float, float]:
    s1_ok = track.contains(LabelKind.S1, loc.s1_frame)
    s2_ok = track.contains(LabelKind.S2, loc.s2_frame)
    action_ok = track.contains(LabelKind.A, loc.action_frame)
    return (s1_ok + s2_ok) / 2.0, float(action_ok)


def precision_at_1_per_category(
        predictions: Sequence[tuple[str, Localization]],
        annotations: Iterable[AnnotationTrack],
) -> dict[int, tuple[float, float]]:
    """Mean (state, action) correctness per category."""
    tracks = _track_index(annotations)
    per_category: dict[int, list[tuple[float, float]]] = {}
    for video_id, loc in predictions:
        if video_id not in tracks:
            raise ValueError(f"missing annotation for predicted video {video_id!r}")
        per_category.setdefault(loc.category, []).append(
            _score_prediction(loc, tracks[video_id]))
    return {c: (float(np.mean([s for s, _ in scores])),
                float(np.mean([a for _, a in scores])))
            for c, scores in per_category.items()}


def precision_at_1(predictions: Sequence[tuple[str, Localization]],
                   annotations: Iterable[AnnotationTrack],
                   catalog: CategoryCatalog | None = None,
                   ) -> tuple[float, float]:
    """State and action precision, macro-averaged over categories."""
    if not predictions:
        raise ValueError("precision_at_1 needs at least one prediction")
    per_category = precision_at_1_per_category(predictions, annotations)
    state = float(np.mean([v[0] for v in per_category.values()]))
    action = float(np.mean([v[1] for v in per_category.values()]))
    return state, action


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float | None:
    """AP of one ranked list; ties rank by ascending frame index.

    Returns ``None`` when there is no positive frame to retrieve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    total = int(positives.sum())
    if total == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    rel = positives[order]
    cum = np.cumsum(rel)
    precision_at_k = cum / np.arange(1, len(rel) + 1)
    return float(precision_at_k[rel].sum() / total)


def _positives_mask(track: AnnotationTrack, kind: LabelKind, t: int) -> np.ndarray:
    mask = np.zeros(t, dtype=bool)
    for interval in track.intervals_of(kind):
        mask[interval.start:min(interval.end, t - 1) + 1] = True
    return mask


def mean_average_precision(per_video_probs: Mapping[str, np.ndarray],
                           annotations: Iterable[AnnotationTrack]) -> float:
    """Mean AP over all (video, class) pairs with at least one positive.

    ``per_video_probs`` maps video ids to ``T x 3`` probability matrices
    with columns in ``MAP_CLASS_KINDS`` order (s1, action, s2).
    """
    tracks = _track_index(annotations)
    values = []
    for video_id in sorted(per_video_probs):
        probs = np.asarray(per_video_probs[video_id], dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] != 3:
            raise ValueError(f"probabilities for {video_id!r} must be T x 3")
        if not np.all(np.isfinite(probs)):
            raise ValueError(f"probabilities for {video_id!r} must be finite")
        if video_id not in tracks:
            raise ValueError(f"missing annotation for video {video_id!r}")
        for column, kind in enumerate(MAP_CLASS_KINDS):
            ap = average_precision(probs[:, column],
                                   _positives_mask(tracks[video_id], kind,
                                                   probs.shape[0]))
            if ap is not None:
                values.append(ap)
    return float(np.mean(values)) if values else 0.0


def classification_accuracy(scores_per_video: Sequence[FrameScores],
                            labels: Sequence[int],
                            opts: DecodeOptions = DEFAULT_OPTIONS) -> float:
    """Fraction of videos whose argmax category matches the true label."""
    if not scores_per_video:
        raise ValueError("classification_accuracy needs at least one video")
    if len(scores_per_video) != len(labels):
        raise ValueError("scores and labels must align")
    hits = sum(classify(scores, opts)[0] == label
               for scores, label in zip(scores_per_video, labels))
    return hits / len(labels)


# ---------------------------------------------------------------------------
# PCA export
# ---------------------------------------------------------------------------

def _power_iterate(cov: np.ndarray, rng: np.random.Generator,
                   ortho: np.ndarray | None = None, tol: float = 1e-14,
                   max_iter: int = 100_000) -> np.ndarray | None:
    """Dominant eigenvector by power iteration, optionally restricted to the
    complement of ``ortho`` (projection deflation).

    Iterates until the cosine between successive vectors reaches
    ``1 - tol`` (well past the ``1 - 1e-10`` contract, so the top-2
    subspace matches a dense solver to principal angles around 1e-7 for
    non-degenerate spectra).  Returns ``None`` when no variance is left in
    the allowed subspace.
    """
    scale = float(np.linalg.norm(cov))
    if scale == 0.0:
        return None
    v = rng.standard_normal(cov.shape[0])
    if ortho is not None:
        v -= (v @ ortho) * ortho
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = cov @ v
        if ortho is not None:
            w -= (w @ ortho) * ortho
        norm = float(np.linalg.norm(w))
        if norm <= 1e-12 * scale:
            return None
        w /= norm
        done = float(w @ v) >= 1.0 - tol
        v = w
        if done:
            break
    # Deterministic sign: largest-magnitude component is positive.
    pivot = int(np.argmax(np.abs(v)))
    return -v if v[pivot] < 0 else v


def top_two_directions(data: np.ndarray,
                       seed: int = 0) -> tuple[np.ndarray, np.ndarray] | None:
    """Top-2 principal directions of mean-centered rows via power iteration
    with projection deflation; ``None`` when the data has no variance at
    all.  When only one direction carries variance, the second is an
    arbitrary deterministic unit vector orthogonal to the first (every
    projection onto it is then ~0 anyway)."""
    centered = data - data.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / max(1, centered.shape[0] - 1)
    rng = np.random.default_rng(seed)
    v1 = _power_iterate(cov, rng)
    if v1 is None:
        return None
    v2 = _power_iterate(cov, rng, ortho=v1)
    if v2 is None:
        d = cov.shape[0]
        basis = np.zeros(d)
        basis[(int(np.argmax(np.abs(v1))) + 1) % d] = 1.0
        v2 = basis - (basis @ v1) * v1
        v2 /= np.linalg.norm(v2)
    return v1, v2


def pca_export(params: model_mod.ModelParams, videos: Sequence[VideoFeatures],
               opts: DecodeOptions = DEFAULT_OPTIONS,
               ) -> list[tuple[str, int, float, float]]:
    """Two principal coordinates per video of its localized representation.

    Each video is localized under its own label; the post-adapter features
    of the three detected frames are averaged, mean-centered across
    videos, and projected onto the top-2 principal directions.  All-zero
    coordinates come back when every video is identical.
    """
    if len(videos) < 3:
        raise ValueError("pca_export needs at least 3 videos")
    reps = []
    for video in videos:
        scores = model_mod.forward(params, video.frames)
        loc = localize(scores, video.label, opts)
        adapted = model_mod.adapter_output(params, video.frames, video.label)
        frames = (loc.s1_frame, loc.action_frame, loc.s2_frame)
        reps.append(adapted[list(frames)].mean(axis=0))
    data = np.stack(reps)
    directions = top_two_directions(data)
    if directions is None:
        coords = np.zeros((len(videos), 2))
    else:
        centered = data - data.mean(axis=0, keepdims=True)
        coords = np.stack([centered @ directions[0], centered @ directions[1]], axis=1)
    return [(video.id, video.label, float(x), float(y))
            for video, (x, y) in zip(videos, coords)]


PCA_CSV_HEADER = "video_id,label,pc1,pc2"


def pca_rows_to_csv(rows: Sequence[tuple[str, int, float, float]]) -> str:
    lines = [PCA_CSV_HEADER]
    lines.extend(f"{vid},{label},{x!r},{y!r}" for vid, label, x, y in rows)
    return "\n".join(lines) + "\n"
