"""Independent reference implementations used to cross-check the package.

Everything here is written as plainly as possible (exhaustive loops,
direct formulas) and stays structurally independent of the production
code paths it verifies.
"""

from __future__ import annotations

import math

import numpy as np

from statechange.core import (Architecture, FrameScores, LabelKind,
                              Localization, VideoFeatures)
from statechange.decode import DecodeOptions
from statechange.pseudo import LabelRuleConfig


# ---------------------------------------------------------------------------
# Decoding: exhaustive enumeration over all ordered triples
# ---------------------------------------------------------------------------

def brute_force_triple(s1, action, s2, opts: DecodeOptions):
    """Best (i, j, k) with i < j < k by scanning every triple in
    lexicographic order; strict improvement keeps the smallest triple."""
    s1 = np.maximum(np.asarray(s1, dtype=np.float64), opts.score_floor)
    action = np.maximum(np.asarray(action, dtype=np.float64), opts.score_floor)
    s2 = np.maximum(np.asarray(s2, dtype=np.float64), opts.score_floor)
    if opts.log_space:
        s1, action, s2 = np.log(s1), np.log(action), np.log(s2)
    t = len(s1)
    best, best_triple = -math.inf, None
    for i in range(t - 2):
        for j in range(i + 1, t - 1):
            for k in range(j + 1, t):
                if opts.log_space:
                    value = (s1[i] + action[j]) + s2[k]
                else:
                    value = (s1[i] * action[j]) * s2[k]
                if value > best:
                    best, best_triple = value, (i, j, k)
    score = math.exp(best) if opts.log_space else best
    return best_triple, score


def brute_force_classify(scores: FrameScores, opts: DecodeOptions):
    best_c, best_p = 0, -math.inf
    for c in range(scores.n_categories):
        _, p = brute_force_triple(*_tracks(scores, c), opts)
        if p > best_p:
            best_c, best_p = c, p
    return best_c, best_p


def _tracks(scores: FrameScores, category: int):
    s1, action, s2 = scores.tracks(category)
    return s1, action, s2


def brute_force_detect(scores: FrameScores, threshold: float, opts: DecodeOptions):
    hits = []
    for c in range(scores.n_categories):
        triple, p = brute_force_triple(*_tracks(scores, c), opts)
        if p > threshold:
            hits.append((c, triple, p))
    hits.sort(key=lambda h: (-h[2], h[0]))
    return hits


# ---------------------------------------------------------------------------
# Model: straightforward loop-based forward recomputation
# ---------------------------------------------------------------------------

def reference_forward(params, frames: np.ndarray):
    """Recompute the forward pass with per-frame loops and the textbook
    formulas; returns (state matrix, action matrix)."""

    def affine(weight, bias, x):
        return np.array([float(np.dot(row, x)) for row in weight]) + bias

    def relu(x):
        return np.where(x > 0, x, 0.0)

    def softmax(z):
        e = np.exp(z - z.max())
        return e / e.sum()

    def sigmoid(z):
        return 1.0 / (1.0 + math.exp(-z))

    def mlp(head, x):
        return affine(head.out.weight, head.out.bias,
                      relu(affine(head.hidden.weight, head.hidden.bias, x)))

    t = frames.shape[0]
    n = params.n_categories
    arch = params.architecture
    if arch.per_category_heads:
        k = params.state_block_width
        state = np.zeros((t, k * n))
        action = np.zeros((t, n))
        for row in range(t):
            for c in range(n):
                adapter = params.adapter_for(c)
                x = affine(adapter.weight, adapter.bias, frames[row])
                state[row, k * c:k * (c + 1)] = softmax(mlp(params.state_heads[c], x))
                action[row, c] = sigmoid(mlp(params.action_heads[c], x)[0])
        return state, action
    if arch is Architecture.JOINT_SINGLE_HEAD:
        state = np.zeros((t, 2 * n))
        action = np.zeros((t, n))
        for row in range(t):
            x = affine(params.adapters[0].weight, params.adapters[0].bias, frames[row])
            probs = softmax(mlp(params.state_heads[0], x))
            state[row] = probs[:2 * n]
            action[row] = probs[2 * n:]
        return state, action
    width = 2 * n + int(params.state_background)
    state = np.zeros((t, width))
    action = np.zeros((t, n + 1))
    for row in range(t):
        x = affine(params.adapters[0].weight, params.adapters[0].bias, frames[row])
        state[row] = softmax(mlp(params.state_heads[0], x))
        action[row] = softmax(mlp(params.action_heads[0], x))
    return state, action


# ---------------------------------------------------------------------------
# Pseudo labels: direct per-frame rule evaluation
# ---------------------------------------------------------------------------

def reference_labels(video: VideoFeatures, loc: Localization,
                     cfg: LabelRuleConfig, architecture: Architecture,
                     state_background: bool = True):
    """Decide every frame's labels by checking the rule conditions directly."""
    t = video.num_frames
    delta = cfg.delta_frames(video.fps)
    delta_prime = cfg.delta_prime_frames(video.fps)
    rules = cfg.rules_enabled
    bg_a_ok = architecture is not Architecture.JOINT_SINGLE_HEAD
    bg_s_ok = state_background and architecture is not Architecture.JOINT_SINGLE_HEAD

    out = set()
    for frame in range(t):
        d1 = abs(frame - loc.s1_frame)
        da = abs(frame - loc.action_frame)
        d2 = abs(frame - loc.s2_frame)

        # State head: positives beat negatives; nearer state anchor wins,
        # ties prefer the initial state.
        state = None
        if "A" in rules:
            if d1 <= delta and d2 <= delta:
                state = LabelKind.S1 if d1 <= d2 else LabelKind.S2
            elif d1 <= delta:
                state = LabelKind.S1
            elif d2 <= delta:
                state = LabelKind.S2
        if state is None and "D" in rules and bg_s_ok and da <= delta:
            state = LabelKind.BG_S
        if state is not None:
            out.add((frame, state))

        action = None
        if "A" in rules and da <= delta:
            action = LabelKind.A
        if action is None and bg_a_ok:
            if "B" in rules and delta_prime <= da <= delta_prime + delta:
                action = LabelKind.BG_A
            elif "C" in rules and (d1 <= delta or d2 <= delta):
                action = LabelKind.BG_A
        if action is not None:
            out.add((frame, action))
    return out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def reference_average_precision(scores, positives):
    """AP straight from the definition, with ties broken by frame index."""
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits, total, ap = 0, int(np.sum(positives)), 0.0
    if total == 0:
        return None
    for rank, idx in enumerate(ranked, start=1):
        if positives[idx]:
            hits += 1
            ap += hits / rank
    return ap / total
