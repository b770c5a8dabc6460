"""Seeded random test-data builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from statechange.core import (Architecture, FrameScores, LabelKind,
                              PseudoLabel, VideoFeatures)
from statechange.model import ModelParams, init_params

ARCHITECTURES = (Architecture.INDEPENDENT, Architecture.MULTI_CLASSIFIER,
                 Architecture.JOINT_SINGLE_HEAD, Architecture.JOINT_TWO_HEAD)


def random_frame_scores(rng: np.random.Generator, architecture: Architecture,
                        n: int, t: int,
                        state_background: bool | None = None) -> FrameScores:
    """Valid random scores for one architecture (softmax rows normalized)."""
    if state_background is None:
        state_background = bool(rng.integers(2)) \
            and architecture is not Architecture.JOINT_SINGLE_HEAD
    if architecture.per_category_heads:
        k = 2 + int(state_background)
        state = np.concatenate(
            [rng.dirichlet(np.ones(k), size=t) for _ in range(n)], axis=1)
        action = rng.uniform(size=(t, n))
        return FrameScores(state, action, architecture)
    if architecture is Architecture.JOINT_SINGLE_HEAD:
        probs = rng.dirichlet(np.ones(3 * n), size=t)
        return FrameScores(probs[:, :2 * n], probs[:, 2 * n:], architecture)
    state = rng.dirichlet(np.ones(2 * n + int(state_background)), size=t)
    action = rng.dirichlet(np.ones(n + 1), size=t)
    return FrameScores(state, action, architecture)


def random_params(rng: np.random.Generator, architecture: Architecture,
                  n: int = 2, d: int = 4, h: int = 5,
                  state_background: bool | None = None,
                  perturb: float = 0.5) -> ModelParams:
    """Initialized parameters with extra random perturbation so nothing is
    at a symmetric point."""
    from statechange.model import iter_blocks, rebuild_params

    params = init_params(architecture, n, d, h, seed=int(rng.integers(2 ** 31)),
                         state_background=state_background)
    arrays = [block.array + perturb * rng.standard_normal(block.array.shape)
              for block in iter_blocks(params)]
    return rebuild_params(params, arrays)


def compatible_kinds(params: ModelParams) -> list[LabelKind]:
    kinds = [LabelKind.S1, LabelKind.S2, LabelKind.A]
    if params.architecture is Architecture.JOINT_SINGLE_HEAD:
        return kinds
    kinds.append(LabelKind.BG_A)
    if params.state_background:
        kinds.append(LabelKind.BG_S)
    return kinds


def random_labels(rng: np.random.Generator, params: ModelParams, t: int,
                  video_id: str = "v0", count: int = 6) -> list[PseudoLabel]:
    """Random labels covering every kind the architecture can express, at
    most one state-head and one action-head label per frame."""
    kinds = compatible_kinds(params)
    labels: list[PseudoLabel] = []
    used: set[tuple[int, str]] = set()
    attempts = 0
    while len(labels) < count and attempts < 200:
        attempts += 1
        kind = kinds[int(rng.integers(len(kinds)))] if len(labels) >= len(kinds) \
            else kinds[len(labels)]
        frame = int(rng.integers(t))
        key = (frame, kind.head)
        if key in used:
            continue
        used.add(key)
        labels.append(PseudoLabel(video_id, frame, int(rng.integers(params.n_categories)),
                                  kind, weight=float(rng.uniform(0.2, 2.0))))
    return labels


def random_video(rng: np.random.Generator, video_id: str = "v0", t: int = 8,
                 d: int = 4, label: int = 0, fps: float = 1.0) -> VideoFeatures:
    return VideoFeatures(video_id, label, rng.standard_normal((t, d)), fps)
