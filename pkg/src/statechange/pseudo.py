"""Pseudo-label construction from decoded localizations.

Five rules build the self-supervision set for one video with decoded
frames ``d_s1 < d_a < d_s2`` (all windows are clipped to the video):

* **A** -- positives: for each role, label every frame within ``delta``
  of the decoded frame with that role.
* **B** -- action background negatives at distance ``delta_prime`` from
  the action: ``BG_A`` wherever ``delta_prime <= |t - d_a| <= delta_prime
  + delta``.
* **C** -- states as action negatives: ``BG_A`` within ``delta`` of
  either decoded state.
* **D** -- actions as state negatives: ``BG_S`` within ``delta`` of the
  decoded action.
* **E** -- cross-task negatives: for the ``multiclf`` architecture,
  random frames from other-category videos in the batch become explicit
  negatives against this video's category.  The joint architectures get
  this effect implicitly through their shared softmax, and ``independent``
  shares nothing, so both return an empty set here.

Per head and frame, a positive always displaces a negative; when the two
state windows overlap, the role whose decoded anchor is nearer wins and
exact ties go to the initial state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (Architecture, LabelKind, Localization, PseudoLabel,
                   VideoFeatures, seconds_to_frames)

ALL_RULES = frozenset("ABCDE")


@dataclass(frozen=True)
class LabelRuleConfig:
    """Window sizes (in seconds; converted per video via its fps), the
    enabled rule subset, and the rule-E sampling policy."""

    delta_seconds: float = 2.0
    delta_prime_seconds: float = 60.0
    rules_enabled: frozenset[str] = ALL_RULES
    #: Rule-E draws per source video; ``None`` means the nominal rule-A
    #: positive count ``3 * (2 * delta + 1)``.
    explicit_negatives_per_video: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules_enabled", frozenset(self.rules_enabled))
        if not self.rules_enabled <= ALL_RULES:
            raise ValueError(f"unknown rules: {sorted(self.rules_enabled - ALL_RULES)}")
        if self.delta_seconds <= 0:
            raise ValueError("delta_seconds must be positive")
        if self.delta_prime_seconds <= self.delta_seconds:
            raise ValueError("delta_prime_seconds must exceed delta_seconds")
        if (self.explicit_negatives_per_video is not None
                and self.explicit_negatives_per_video < 0):
            raise ValueError("explicit_negatives_per_video must be nonnegative")

    def delta_frames(self, fps: float) -> int:
        return seconds_to_frames(self.delta_seconds, fps)

    def delta_prime_frames(self, fps: float) -> int:
        return seconds_to_frames(self.delta_prime_seconds, fps)


def supports_action_background(architecture: Architecture) -> bool:
    """Per-category sigmoids take target 0, joint2 has a background class;
    only joint1 cannot express action negatives."""
    return architecture is not Architecture.JOINT_SINGLE_HEAD


def supports_state_background(architecture: Architecture,
                              state_background: bool) -> bool:
    return state_background and architecture is not Architecture.JOINT_SINGLE_HEAD


def _window(center: int, radius: int, t: int) -> range:
    return range(max(0, center - radius), min(t - 1, center + radius) + 1)


_HEAD_ORDER = {LabelKind.S1: 0, LabelKind.S2: 1, LabelKind.BG_S: 2,
               LabelKind.A: 3, LabelKind.BG_A: 4}


def _sorted_labels(labels: Iterable[PseudoLabel]) -> list[PseudoLabel]:
    return sorted(labels, key=lambda l: (l.video_id, l.frame,
                                         _HEAD_ORDER[l.kind], l.category))


def build_labels(video: VideoFeatures, loc: Localization, cfg: LabelRuleConfig,
                 architecture: Architecture,
                 state_background: bool = True) -> list[PseudoLabel]:
    """The deterministic in-video label set (rules A-D) for one decode.

    Labels the architecture cannot express (``BG_S`` without a state
    background output, any background under ``joint1``) are skipped.
    Returns a duplicate-free list sorted by frame; every label carries
    weight 1 (weighting is the trainer's job).
    """
    t = video.num_frames
    if loc.s2_frame > t - 1:
        raise ValueError(f"localization exceeds video length (T={t})")
    delta = cfg.delta_frames(video.fps)
    delta_prime = cfg.delta_prime_frames(video.fps)
    rules = cfg.rules_enabled
    bg_a_ok = supports_action_background(architecture)
    bg_s_ok = supports_state_background(architecture, state_background)

    # Per head: frame -> (kind, anchor distance).  Positives are placed
    # first; negatives never displace them.
    state: dict[int, tuple[LabelKind, int]] = {}
    action: dict[int, tuple[LabelKind, int]] = {}

    if "A" in rules:
        for kind, head in ((LabelKind.S1, state), (LabelKind.S2, state),
                           (LabelKind.A, action)):
            anchor = loc.frame_of(kind)
            for frame in _window(anchor, delta, t):
                dist = abs(frame - anchor)
                held = head.get(frame)
                if held is None or dist < held[1]:
                    head[frame] = (kind, dist)
                # Equal distance: the earlier role (S1 over S2) wins, which
                # is the incumbent given the processing order above.

    if "B" in rules and bg_a_ok:
        for frame in range(max(0, loc.action_frame - delta_prime - delta),
                           min(t - 1, loc.action_frame + delta_prime + delta) + 1):
            dist = abs(frame - loc.action_frame)
            if delta_prime <= dist <= delta_prime + delta and frame not in action:
                action[frame] = (LabelKind.BG_A, dist)

    if "C" in rules and bg_a_ok:
        for anchor in (loc.s1_frame, loc.s2_frame):
            for frame in _window(anchor, delta, t):
                if frame not in action:
                    action[frame] = (LabelKind.BG_A, abs(frame - anchor))

    if "D" in rules and bg_s_ok:
        for frame in _window(loc.action_frame, delta, t):
            if frame not in state:
                state[frame] = (LabelKind.BG_S, abs(frame - loc.action_frame))

    labels = [PseudoLabel(video.id, frame, loc.category, kind)
              for head in (state, action)
              for frame, (kind, _) in head.items()]
    return _sorted_labels(labels)


def build_cross_task_negatives(batch: Sequence[tuple[VideoFeatures, int]],
                               cfg: LabelRuleConfig,
                               architecture: Architecture,
                               state_background: bool = True,
                               ) -> list[PseudoLabel]:
    """Rule E: explicit negatives mined from other categories in a batch.

    Only the ``multiclf`` architecture receives explicit labels.  For each
    source video with label ``l``, frames are sampled uniformly without
    replacement from batch videos with a different label and added as
    negatives against category ``l``, alternating between the action head
    (sigmoid target 0) and the state background class.  Returns an empty
    list when fewer than two distinct categories are present.
    """
    if architecture is not Architecture.MULTI_CLASSIFIER or "E" not in cfg.rules_enabled:
        return []
    labels_present = {label for _, label in batch}
    if len(labels_present) < 2:
        return []
    bg_s_ok = supports_state_background(architecture, state_background)
    rng = np.random.default_rng(cfg.seed)
    out: dict[tuple[str, int, int, LabelKind], PseudoLabel] = {}
    for video, label in batch:
        pool = [(other.id, frame)
                for other, other_label in batch if other_label != label
                for frame in range(other.num_frames)]
        count = cfg.explicit_negatives_per_video
        if count is None:
            count = 3 * (2 * cfg.delta_frames(video.fps) + 1)
        count = min(count, len(pool))
        if count == 0:
            continue
        picks = rng.choice(len(pool), size=count, replace=False)
        for position, pick in enumerate(picks):
            other_id, frame = pool[int(pick)]
            kind = LabelKind.BG_A
            if bg_s_ok and position % 2 == 1:
                kind = LabelKind.BG_S
            label_obj = PseudoLabel(other_id, frame, label, kind)
            out[(other_id, frame, label, kind)] = label_obj
    return _sorted_labels(out.values())


def label_rows(labels: Iterable[PseudoLabel]) -> list[dict]:
    """JSON-ready rows for the label-set dump."""
    return [{"video_id": l.video_id, "frame": l.frame, "category": l.category,
             "kind": l.kind.value, "weight": l.weight} for l in labels]
