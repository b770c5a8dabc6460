"""Exact constrained inference over per-frame likelihood tracks.

Video-level scoring maximizes ``h_s1(i) * h_a(j) * h_s2(k)`` over strictly
ordered frame triples ``i < j < k``.  The maximum is found in ``O(T)`` by
combining, for every candidate action frame ``j``, the running prefix
maximum of the initial-state track with the suffix maximum of the
end-state track.  Ties are always broken toward the lexicographically
smallest ``(i, j, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FrameScores, Localization


@dataclass(frozen=True)
class DecodeOptions:
    """Numeric policy for decoding.

    ``score_floor`` clamps every track from below so all triple scores are
    strictly positive; with ``log_space`` the triple score is accumulated
    as a sum of logarithms and exponentiated on return, which avoids
    underflow on long low-confidence videos.
    """

    log_space: bool = True
    score_floor: float = 1e-12
    tie_break: str = "lexicographic"

    def __post_init__(self) -> None:
        if not 0.0 < self.score_floor < 1.0:
            raise ValueError(f"score_floor must lie in (0, 1), got {self.score_floor}")
        if self.tie_break != "lexicographic":
            raise ValueError("only the lexicographic tie-break policy is supported")


DEFAULT_OPTIONS = DecodeOptions()


def _prepare(track: np.ndarray, opts: DecodeOptions) -> np.ndarray:
    values = np.maximum(np.asarray(track, dtype=np.float64), opts.score_floor)
    return np.log(values) if opts.log_space else values


def _prefix_argmax(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Running maximum and the *first* index attaining it, per prefix."""
    best = np.maximum.accumulate(values)
    improved = values > np.concatenate(([-np.inf], best[:-1]))
    arg = np.maximum.accumulate(np.where(improved, np.arange(values.size), -1))
    return best, arg


def _suffix_argmax(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Running maximum and the *first* (smallest) index attaining it, per suffix."""
    rev = values[::-1]
    best_rev = np.maximum.accumulate(rev)
    # >= keeps the later reversed index, i.e. the smaller original index.
    improved = rev >= np.concatenate(([-np.inf], best_rev[:-1]))
    arg_rev = np.maximum.accumulate(np.where(improved, np.arange(values.size), -1))
    return best_rev[::-1], (values.size - 1 - arg_rev)[::-1]


def _best_triple(s1: np.ndarray, action: np.ndarray, s2: np.ndarray,
                 opts: DecodeOptions) -> tuple[int, int, int, float]:
    """Lexicographically-smallest argmax triple and its combined value.

    The returned value lives in log space when ``opts.log_space`` is set.
    Because every track is clamped to ``score_floor > 0`` the combined
    score is strictly increasing in each factor, so any maximizer uses the
    prefix maximum of ``s1`` and the suffix maximum of ``s2`` for its
    action frame; scanning action frames in ascending order therefore
    yields the lexicographically smallest maximizer.
    """
    t = s1.shape[0]
    if t < 3:
        raise ValueError(f"decoding needs at least 3 frames, got T={t}")
    v1, va, v2 = _prepare(s1, opts), _prepare(action, opts), _prepare(s2, opts)
    pbest, parg = _prefix_argmax(v1)
    sbest, sarg = _suffix_argmax(v2)
    if opts.log_space:
        candidates = (pbest[:-2] + va[1:-1]) + sbest[2:]
    else:
        candidates = (pbest[:-2] * va[1:-1]) * sbest[2:]
    j = 1 + int(np.argmax(candidates))
    return int(parg[j - 1]), j, int(sarg[j + 1]), float(candidates[j - 1])


def _to_probability(value: float, opts: DecodeOptions) -> float:
    return float(np.exp(value)) if opts.log_space else float(value)


def score_tracks(s1: np.ndarray, action: np.ndarray, s2: np.ndarray,
                 opts: DecodeOptions = DEFAULT_OPTIONS) -> float:
    """Best strictly-ordered triple score over three raw likelihood tracks."""
    *_, value = _best_triple(np.asarray(s1), np.asarray(action), np.asarray(s2), opts)
    return _to_probability(value, opts)


def localize_tracks(s1: np.ndarray, action: np.ndarray, s2: np.ndarray,
                    category: int = 0,
                    opts: DecodeOptions = DEFAULT_OPTIONS) -> Localization:
    """Argmax triple over three raw likelihood tracks."""
    i, j, k, value = _best_triple(np.asarray(s1), np.asarray(action), np.asarray(s2), opts)
    return Localization(i, j, k, score=_to_probability(value, opts), category=category)


def _category_tracks(scores: FrameScores, category: int):
    if scores.num_frames < 3:
        raise ValueError(f"decoding needs at least 3 frames, got T={scores.num_frames}")
    return scores.tracks(category)


def score_video(scores: FrameScores, category: int,
                opts: DecodeOptions = DEFAULT_OPTIONS) -> float:
    """The score ``p(c|v)``: the causal-ordering maximum for one category."""
    s1, action, s2 = _category_tracks(scores, category)
    return score_tracks(s1, action, s2, opts)


def localize(scores: FrameScores, category: int,
             opts: DecodeOptions = DEFAULT_OPTIONS) -> Localization:
    """The argmax triple achieving ``score_video``'s value for one category."""
    s1, action, s2 = _category_tracks(scores, category)
    return localize_tracks(s1, action, s2, category=category, opts=opts)


def classify(scores: FrameScores,
             opts: DecodeOptions = DEFAULT_OPTIONS) -> tuple[int, float]:
    """Most probable category and its score; ties go to the smaller index."""
    best_category, best_score = 0, -np.inf
    for category in range(scores.n_categories):
        p = score_video(scores, category, opts)
        if p > best_score:
            best_category, best_score = category, p
    return best_category, float(best_score)


def detect_multi(scores: FrameScores, threshold: float,
                 opts: DecodeOptions = DEFAULT_OPTIONS) -> list[Localization]:
    """Localizations for every category scoring strictly above ``threshold``.

    A video can depict several interactions, so the per-category scores do
    not sum to one and any number of categories (including none) may pass.
    Results are sorted by descending score, ties by ascending category.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    detections = []
    for category in range(scores.n_categories):
        loc = localize(scores, category, opts)
        if loc.score > threshold:
            detections.append(loc)
    detections.sort(key=lambda loc: (-loc.score, loc.category))
    return detections
