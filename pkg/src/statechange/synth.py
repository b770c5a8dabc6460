"""Synthetic dataset generator with planted ground truth.

Each relevant video is laid out as three ordered blocks (initial state,
action, end state) separated by nonempty gaps at seeded random positions.
Block frames carry that phase's prototype vector plus isotropic noise of
expected magnitude ``feature_noise_sigma``; every other frame shows the
video's own background scene: the shared background prototype displaced
by a per-video random scene direction (plus per-frame noise).  The scene
structure is essential to what the dataset is meant to exercise: real
uncurated footage has diverse backgrounds, so only the state and action
blocks look consistent across the videos of a category.  A single tight
background cluster would be a coherent false attractor for
self-training, while per-frame white clutter would let a large head
memorize individual frames; one scene per video models reality and does
neither.  Distractor videos contain no trace of their assigned category
(pure background scene or a foreign category's layout) yet still carry a
category label, so the noisy-label premise is exercised by default.

Confusable category pairs share one action prototype; the background
prototype is shared by all categories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (AnnotationInterval, AnnotationTrack, Category,
                   CategoryCatalog, LabelKind, Localization, VideoFeatures)
from .decode import DEFAULT_OPTIONS, DecodeOptions, localize_tracks

#: Row order of the per-category prototype matrix.
PHASES = ("s1", "a", "s2", "background")


@dataclass(frozen=True)
class SynthConfig:
    n_categories: int = 5
    videos_per_category: int = 40
    noise_videos: int = 20
    frames_per_video: int = 120
    feature_dim: int = 32
    #: Minimum pairwise distance between distinct prototypes; the feature
    #: scale of the whole dataset follows from it.
    prototype_separation: float = 4.0
    #: Expected noise displacement magnitude per frame; ``None`` means
    #: ``prototype_separation / 6``.
    feature_noise_sigma: float | None = None
    #: Norm of each video's background scene displacement, as a multiple of
    #: ``prototype_separation``.
    background_clutter_scale: float = 1.5
    block_frames: int = 20
    min_gap_frames: int = 3
    #: Category pairs sharing one action prototype; ``None`` means one
    #: pair ``(0, 1)`` when at least two categories exist.
    confusable_pairs: tuple[tuple[int, int], ...] | None = None
    #: Explicit ``(N, 4, D)`` prototype override in ``PHASES`` row order.
    prototypes: np.ndarray | None = None
    heldout_per_category: int = 8
    fps: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_categories < 1 or self.videos_per_category < 1:
            raise ValueError("need at least one category and one video per category")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.prototype_separation <= 0:
            raise ValueError("prototype_separation must be positive")
        if self.feature_noise_sigma is not None and self.feature_noise_sigma < 0:
            raise ValueError("feature_noise_sigma must be nonnegative")
        if self.block_frames < 1 or self.min_gap_frames < 1:
            raise ValueError("blocks need >= 1 frame and gaps must be nonempty")
        if self.noise_videos < 0:
            raise ValueError("noise_videos must be nonnegative")
        if self.background_clutter_scale < 0:
            raise ValueError("background_clutter_scale must be nonnegative")
        if not 0 <= self.heldout_per_category < self.videos_per_category:
            raise ValueError("heldout_per_category must leave training videos")
        needed = 3 * self.block_frames + 2 * self.min_gap_frames
        if needed > self.frames_per_video:
            raise ValueError(
                f"infeasible layout: blocks need {needed} frames, "
                f"video has {self.frames_per_video}")

    @property
    def sigma(self) -> float:
        if self.feature_noise_sigma is not None:
            return self.feature_noise_sigma
        return self.prototype_separation / 6.0

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        if self.confusable_pairs is not None:
            return tuple(tuple(p) for p in self.confusable_pairs)
        return ((0, 1),) if self.n_categories >= 2 else ()


@dataclass(frozen=True, eq=False)
class SynthDataset:
    videos: tuple[VideoFeatures, ...]
    annotations: tuple[AnnotationTrack, ...]
    catalog: CategoryCatalog
    prototypes: np.ndarray          # (N, 4, D), PHASES row order
    train_ids: tuple[str, ...]
    heldout_ids: tuple[str, ...]

    def split(self, ids: Sequence[str]) -> list[VideoFeatures]:
        wanted = set(ids)
        return [v for v in self.videos if v.id in wanted]

    def annotations_for(self, ids: Sequence[str]) -> list[AnnotationTrack]:
        wanted = set(ids)
        return [a for a in self.annotations if a.video_id in wanted]


def _make_prototypes(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    protos = np.empty((cfg.n_categories, 4, cfg.feature_dim))
    background = rng.standard_normal(cfg.feature_dim)
    for c in range(cfg.n_categories):
        protos[c, 0] = rng.standard_normal(cfg.feature_dim)
        protos[c, 1] = rng.standard_normal(cfg.feature_dim)
        protos[c, 2] = rng.standard_normal(cfg.feature_dim)
        protos[c, 3] = background
    for first, second in cfg.pairs:
        if not (0 <= first < cfg.n_categories and 0 <= second < cfg.n_categories):
            raise ValueError(f"confusable pair {(first, second)} out of range")
        protos[second, 1] = protos[first, 1]
    # Rescale so the minimum distance over *distinct* prototypes equals the
    # configured separation (deliberately shared rows stay identical).
    flat = protos.reshape(-1, cfg.feature_dim)
    unique = np.unique(np.round(flat, 12), axis=0)
    if unique.shape[0] > 1:
        dists = np.linalg.norm(unique[:, None, :] - unique[None, :, :], axis=-1)
        min_dist = dists[np.triu_indices_from(dists, k=1)].min()
        if min_dist <= 0:
            raise ValueError("degenerate prototypes: accidental exact collision")
        protos *= cfg.prototype_separation / min_dist
    return protos


def _sample_layout(cfg: SynthConfig, rng: np.random.Generator) -> tuple[int, int, int]:
    """Block start frames for (s1, action, s2), uniform over legal layouts."""
    t, length, gap = cfg.frames_per_video, cfg.block_frames, cfg.min_gap_frames
    slack = t - 3 * length - 2 * gap
    cuts = np.sort(rng.choice(slack + 3, size=3, replace=False))
    pre = int(cuts[0])
    extra1 = int(cuts[1] - cuts[0] - 1)
    extra2 = int(cuts[2] - cuts[1] - 1)
    s1 = pre
    action = s1 + length + gap + extra1
    s2 = action + length + gap + extra2
    return s1, action, s2


def _blocks_to_track(video_id: str, starts: tuple[int, int, int],
                     length: int) -> AnnotationTrack:
    kinds = (LabelKind.S1, LabelKind.A, LabelKind.S2)
    intervals = tuple(AnnotationInterval(kind, start, start + length - 1)
                      for kind, start in zip(kinds, starts))
    return AnnotationTrack(video_id, intervals)


def generate(cfg: SynthConfig) -> SynthDataset:
    """Build the dataset: relevant videos with planted annotated blocks,
    plus adversarially labeled distractors (background-only or foreign
    content), deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    prototypes = (np.asarray(cfg.prototypes, dtype=np.float64)
                  if cfg.prototypes is not None else _make_prototypes(cfg, rng))
    if prototypes.shape != (cfg.n_categories, 4, cfg.feature_dim):
        raise ValueError(f"prototypes must have shape "
                         f"({cfg.n_categories}, 4, {cfg.feature_dim})")

    catalog = CategoryCatalog(tuple(
        Category(name=f"task{c:02d}", initial_state=f"task{c:02d}_initial",
                 end_state=f"task{c:02d}_final", action=f"task{c:02d}_action")
        for c in range(cfg.n_categories)))

    t, d, length = cfg.frames_per_video, cfg.feature_dim, cfg.block_frames
    noise_scale = cfg.sigma / math.sqrt(d)
    scene_norm = cfg.background_clutter_scale * cfg.prototype_separation

    def background_frames() -> np.ndarray:
        scene = rng.standard_normal(d)
        norm = float(np.linalg.norm(scene))
        if norm > 0 and scene_norm > 0:
            scene *= scene_norm / norm
        else:
            scene = np.zeros(d)
        frames = np.tile(prototypes[0, 3] + scene, (t, 1))
        return frames + noise_scale * rng.standard_normal((t, d))

    def planted_frames(content_category: int) -> tuple[np.ndarray, tuple[int, int, int]]:
        starts = _sample_layout(cfg, rng)
        frames = background_frames()
        for phase, start in zip((0, 1, 2), starts):
            block = np.tile(prototypes[content_category, phase], (length, 1))
            frames[start:start + length] = \
                block + noise_scale * rng.standard_normal((length, d))
        return frames, starts

    videos: list[VideoFeatures] = []
    annotations: list[AnnotationTrack] = []
    train_ids: list[str] = []
    heldout_ids: list[str] = []

    for c in range(cfg.n_categories):
        for i in range(cfg.videos_per_category):
            video_id = f"task{c:02d}_vid{i:03d}"
            frames, starts = planted_frames(c)
            videos.append(VideoFeatures(video_id, c, frames, cfg.fps))
            annotations.append(_blocks_to_track(video_id, starts, length))
            if i >= cfg.videos_per_category - cfg.heldout_per_category:
                heldout_ids.append(video_id)
            else:
                train_ids.append(video_id)

    for i in range(cfg.noise_videos):
        label = i % cfg.n_categories
        video_id = f"noise_vid{i:03d}"
        if i % 2 == 0 or cfg.n_categories < 2:
            frames = background_frames()
        else:
            foreign = (label + 1 + (i // 2)) % cfg.n_categories
            if foreign == label:
                foreign = (label + 1) % cfg.n_categories
            frames, _ = planted_frames(foreign)
        videos.append(VideoFeatures(video_id, label, frames, cfg.fps))
        train_ids.append(video_id)

    return SynthDataset(tuple(videos), tuple(annotations), catalog, prototypes,
                        tuple(train_ids), tuple(heldout_ids))


# ---------------------------------------------------------------------------
# Oracles for calibration and tests
# ---------------------------------------------------------------------------

def phase_probabilities(frames: np.ndarray, prototypes_c: np.ndarray) -> np.ndarray:
    """Idealized per-frame scorer: softmax over negative distances to the
    category's four phase prototypes, rows in ``PHASES`` order."""
    dists = np.linalg.norm(frames[:, None, :] - prototypes_c[None, :, :], axis=-1)
    logits = -dists
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


def nearest_phase(frames: np.ndarray, prototypes_c: np.ndarray) -> np.ndarray:
    """Index of the nearest phase prototype (``PHASES`` order) per frame."""
    dists = np.linalg.norm(frames[:, None, :] - prototypes_c[None, :, :], axis=-1)
    return dists.argmin(axis=1)


def oracle_localize(video: VideoFeatures, prototypes: np.ndarray,
                    opts: DecodeOptions = DEFAULT_OPTIONS) -> Localization:
    """Decode one video with the idealized nearest-prototype scorer under
    the video's own label."""
    probs = phase_probabilities(video.frames, prototypes[video.label])
    return localize_tracks(probs[:, 0], probs[:, 1], probs[:, 2],
                           category=video.label, opts=opts)
