"""Shared domain types and dataset validation.

The global class-index layout is fixed here and used everywhere else:
category ``c`` owns state classes ``2c`` (initial state) and ``2c + 1``
(end state) and action class ``c``.  Background classes, when present,
occupy the final index of each head: ``2N`` on the state side and ``N``
on the action side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class LabelKind(str, Enum):
    """Per-frame supervision target kinds.

    ``S1``, ``A``, ``S2`` are positives for the initial state, the action,
    and the end state; ``BG_S`` and ``BG_A`` are the state and action
    background negatives.
    """

    S1 = "s1"
    S2 = "s2"
    A = "a"
    BG_S = "bg_s"
    BG_A = "bg_a"

    @property
    def head(self) -> str:
        """Which classifier head the label targets: ``"state"`` or ``"action"``."""
        return "action" if self in (LabelKind.A, LabelKind.BG_A) else "state"

    @property
    def is_positive(self) -> bool:
        return self in (LabelKind.S1, LabelKind.S2, LabelKind.A)


#: Kinds handled by the state head / the action head, in canonical order.
STATE_KINDS = (LabelKind.S1, LabelKind.S2, LabelKind.BG_S)
ACTION_KINDS = (LabelKind.A, LabelKind.BG_A)
#: The three localized roles in temporal order.
ROLE_KINDS = (LabelKind.S1, LabelKind.A, LabelKind.S2)


class Architecture(str, Enum):
    """Classifier head wiring variants.

    * ``independent`` -- one fully isolated classifier block per category
      (own adapter, own state and action heads); no parameter sharing.
    * ``multiclf`` -- shared adapter, but one state head and one action
      head per category.  State heads are per-category softmaxes (2 or 3
      outputs), action heads are single sigmoid outputs.
    * ``joint1`` -- a single softmax over all ``3N`` state and action
      classes; no background classes exist.
    * ``joint2`` -- one state softmax (``2N`` or ``2N + 1`` outputs) and
      one action softmax (``N + 1`` outputs, background always present).
    """

    INDEPENDENT = "independent"
    MULTI_CLASSIFIER = "multiclf"
    JOINT_SINGLE_HEAD = "joint1"
    JOINT_TWO_HEAD = "joint2"

    @property
    def per_category_heads(self) -> bool:
        return self in (Architecture.INDEPENDENT, Architecture.MULTI_CLASSIFIER)

    @classmethod
    def parse(cls, name: str) -> "Architecture":
        """Accept either the canonical names or the roman-numeral tags I-IV."""
        aliases = {"i": cls.INDEPENDENT, "ii": cls.MULTI_CLASSIFIER,
                   "iii": cls.JOINT_SINGLE_HEAD, "iv": cls.JOINT_TWO_HEAD}
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise ValueError(f"unknown architecture {name!r} (valid: {valid}, or I-IV)") from None


def seconds_to_frames(seconds: float, fps: float) -> int:
    """Convert a duration in seconds to frames: nearest integer, minimum 1."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return max(1, int(math.floor(seconds * fps + 0.5)))


@dataclass(frozen=True)
class Category:
    """One interaction category: an object with an initial state, an end
    state, and the action that transforms one into the other."""

    name: str
    initial_state: str
    end_state: str
    action: str


@dataclass(frozen=True)
class CategoryCatalog:
    """Ordered list of interaction categories; the order defines the global
    class-index layout."""

    categories: tuple[Category, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", tuple(self.categories))
        if len(self.categories) < 1:
            raise ValueError("catalog needs at least one category")
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique")

    @property
    def n(self) -> int:
        return len(self.categories)

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.categories):
            if c.name == name:
                return i
        valid = ", ".join(c.name for c in self.categories)
        raise ValueError(f"unknown category {name!r} (valid: {valid})")

    # -- class-index layout ------------------------------------------------

    def s1_class(self, category: int) -> int:
        return 2 * category

    def s2_class(self, category: int) -> int:
        return 2 * category + 1

    def action_class(self, category: int) -> int:
        return category

    @property
    def state_background_class(self) -> int:
        return 2 * self.n

    @property
    def action_background_class(self) -> int:
        return self.n

    def state_class_owner(self, index: int) -> tuple[int, LabelKind] | None:
        """Inverse of the state-class layout; ``None`` for the background."""
        if not 0 <= index <= 2 * self.n:
            raise ValueError(f"state class index {index} out of range")
        if index == 2 * self.n:
            return None
        return index // 2, LabelKind.S1 if index % 2 == 0 else LabelKind.S2

    def action_class_owner(self, index: int) -> tuple[int, LabelKind] | None:
        """Inverse of the action-class layout; ``None`` for the background."""
        if not 0 <= index <= self.n:
            raise ValueError(f"action class index {index} out of range")
        if index == self.n:
            return None
        return index, LabelKind.A


@dataclass(frozen=True, eq=False)
class VideoFeatures:
    """One video as a ``T x D`` matrix of per-frame feature vectors plus its
    noisy video-level category label."""

    id: str
    label: int
    frames: np.ndarray
    fps: float = 1.0

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"frames must be a 2-D matrix, got shape {frames.shape}")
        frames = np.ascontiguousarray(frames)
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, eq=False)
class FrameScores:
    """Per-frame likelihoods produced by a model head.

    Column layout depends on the architecture:

    * ``independent`` / ``multiclf``: ``state_scores`` is ``T x (K * N)``
      with per-category blocks ``[s1, s2(, bg)]`` of width ``K in {2, 3}``;
      ``action_scores`` is ``T x N`` of per-category sigmoids.
    * ``joint1``: ``state_scores`` is ``T x 2N`` (classes ``2c``/``2c+1``)
      and ``action_scores`` is ``T x N``; each *concatenated* row is one
      softmax over ``3N`` classes.
    * ``joint2``: ``state_scores`` is ``T x (2N or 2N+1)`` (background
      last) and ``action_scores`` is ``T x (N+1)``; each head row is its
      own softmax.
    """

    state_scores: np.ndarray
    action_scores: np.ndarray
    architecture: Architecture

    def __post_init__(self) -> None:
        state = np.asarray(self.state_scores, dtype=np.float64)
        action = np.asarray(self.action_scores, dtype=np.float64)
        if state.ndim != 2 or action.ndim != 2:
            raise ValueError("score matrices must be 2-D")
        if state.shape[0] != action.shape[0]:
            raise ValueError("state and action score row counts differ")
        object.__setattr__(self, "state_scores", state)
        object.__setattr__(self, "action_scores", action)
        object.__setattr__(self, "architecture", Architecture(self.architecture))

    @property
    def num_frames(self) -> int:
        return self.state_scores.shape[0]

    @property
    def n_categories(self) -> int:
        width = self.action_scores.shape[1]
        if self.architecture is Architecture.JOINT_TWO_HEAD:
            return width - 1
        return width

    @property
    def state_block_width(self) -> int:
        """Outputs per category in the state layout (2 or 3 for per-category
        heads, always 2 for the joint layouts)."""
        if self.architecture.per_category_heads:
            return self.state_scores.shape[1] // self.n_categories
        return 2

    @property
    def has_state_background(self) -> bool:
        if self.architecture.per_category_heads:
            return self.state_block_width == 3
        if self.architecture is Architecture.JOINT_TWO_HEAD:
            return self.state_scores.shape[1] == 2 * self.n_categories + 1
        return False

    def tracks(self, category: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return the ``(s1, action, s2)`` likelihood tracks of a category."""
        n = self.n_categories
        if not 0 <= category < n:
            raise ValueError(f"category {category} out of range (N={n})")
        if self.architecture.per_category_heads:
            base = self.state_block_width * category
            s1 = self.state_scores[:, base]
            s2 = self.state_scores[:, base + 1]
        else:
            s1 = self.state_scores[:, 2 * category]
            s2 = self.state_scores[:, 2 * category + 1]
        return s1, self.action_scores[:, category], s2

    def validate(self, atol: float = 1e-6) -> None:
        """Raise if entries leave [0, 1] or softmax rows do not sum to one."""
        for name, m in (("state", self.state_scores), ("action", self.action_scores)):
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} scores contain non-finite entries")
            if m.min(initial=0.0) < 0.0 or m.max(initial=0.0) > 1.0:
                raise ValueError(f"{name} scores leave [0, 1]")
        arch = self.architecture
        if arch.per_category_heads:
            k, n = self.state_block_width, self.n_categories
            for c in range(n):
                block = self.state_scores[:, k * c:k * (c + 1)]
                if np.max(np.abs(block.sum(axis=1) - 1.0)) > atol:
                    raise ValueError(f"state block {c} rows do not sum to 1")
        elif arch is Architecture.JOINT_SINGLE_HEAD:
            total = self.state_scores.sum(axis=1) + self.action_scores.sum(axis=1)
            if np.max(np.abs(total - 1.0)) > atol:
                raise ValueError("joint softmax rows do not sum to 1")
        else:
            for name, m in (("state", self.state_scores), ("action", self.action_scores)):
                if np.max(np.abs(m.sum(axis=1) - 1.0)) > atol:
                    raise ValueError(f"{name} head rows do not sum to 1")


@dataclass(frozen=True)
class Localization:
    """A decoded ``(initial state, action, end state)`` frame triple with the
    score of the causal-ordering maximum."""

    s1_frame: int
    action_frame: int
    s2_frame: int
    score: float
    category: int

    def __post_init__(self) -> None:
        if not 0 <= self.s1_frame < self.action_frame < self.s2_frame:
            raise ValueError(
                f"localization frames must be strictly ordered, got "
                f"({self.s1_frame}, {self.action_frame}, {self.s2_frame})")
        if not (0.0 <= self.score <= 1.0) or not math.isfinite(self.score):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.category < 0:
            raise ValueError("category index must be nonnegative")

    def frame_of(self, kind: LabelKind) -> int:
        if kind is LabelKind.S1:
            return self.s1_frame
        if kind is LabelKind.A:
            return self.action_frame
        if kind is LabelKind.S2:
            return self.s2_frame
        raise ValueError(f"no localized frame for kind {kind}")


@dataclass(frozen=True)
class PseudoLabel:
    """One per-frame supervision target ``(video, frame, category, kind)``
    with a loss weight."""

    video_id: str
    frame: int
    category: int
    kind: LabelKind
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.frame < 0:
            raise ValueError("frame index must be nonnegative")
        if self.category < 0:
            raise ValueError("category index must be nonnegative")
        if not (self.weight >= 0.0 and math.isfinite(self.weight)):
            raise ValueError(f"weight must be finite and nonnegative, got {self.weight}")
        object.__setattr__(self, "kind", LabelKind(self.kind))


@dataclass(frozen=True)
class AnnotationInterval:
    kind: LabelKind
    start: int
    end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LabelKind(self.kind))
        if self.kind not in ROLE_KINDS:
            raise ValueError(f"annotation kind must be one of s1/a/s2, got {self.kind}")
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad interval [{self.start}, {self.end}]")

    def contains(self, frame: int) -> bool:
        return self.start <= frame <= self.end


@dataclass(frozen=True)
class AnnotationTrack:
    """Ground-truth intervals for one video; kinds may repeat."""

    video_id: str
    intervals: tuple[AnnotationInterval, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", tuple(self.intervals))

    def intervals_of(self, kind: LabelKind) -> tuple[AnnotationInterval, ...]:
        return tuple(iv for iv in self.intervals if iv.kind is kind)

    def contains(self, kind: LabelKind, frame: int) -> bool:
        return any(iv.contains(frame) for iv in self.intervals_of(kind))


@dataclass(frozen=True)
class VideoValidation:
    video_id: str
    ok: bool
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    entries: tuple[VideoValidation, ...]

    @property
    def all_ok(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def failures(self) -> tuple[VideoValidation, ...]:
        return tuple(e for e in self.entries if not e.ok)


def validate_dataset(catalog: CategoryCatalog,
                     videos: Iterable[VideoFeatures]) -> ValidationReport:
    """Check every video against the dataset invariants.

    Returns a per-video pass/fail report; a video passes iff it has at
    least three frames, a nonempty finite feature matrix, a positive frame
    rate, and a label inside the catalog.
    """
    entries = []
    seen: set[str] = set()
    for video in videos:
        reasons = []
        if video.id in seen:
            reasons.append("duplicate video id")
        seen.add(video.id)
        if video.num_frames < 3:
            reasons.append(f"too short for causal triple (T={video.num_frames})")
        if video.dim < 1:
            reasons.append("empty feature dimension")
        if not np.all(np.isfinite(video.frames)):
            reasons.append("non-finite feature values")
        if not (0 <= video.label < catalog.n):
            reasons.append(f"label out of range (label={video.label}, N={catalog.n})")
        if video.fps <= 0:
            reasons.append("fps must be positive")
        entries.append(VideoValidation(video.id, ok=not reasons, reasons=tuple(reasons)))
    return ValidationReport(tuple(entries))
