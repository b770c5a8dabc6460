"""The self-supervised training loop: decode, build labels, update.

Each step runs in two sparse stages.  Stage 1 performs inference only:
every batch video is scored, its triple is localized under the video's
own (noisy) label, and the pseudo-label rules turn the decode into a
small per-video supervision set, truncated to a fixed label budget.
Stage 2 then runs forward and backward passes only on the labeled
frames, so gradients touch a bounded fraction of each video.

Optimization follows momentum SGD (``v = mu * v + g``, ``theta -= lr * v``)
with a cosine learning-rate schedule after a linear warmup, an L2 penalty
on head parameters only, and action-head loss terms scaled by
``action_loss_scale``.  A ``plain-gd`` mode exists so single-step descent
is assertable (momentum can transiently increase the loss).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import model as model_mod
from . import pseudo as pseudo_mod
from .core import (AnnotationTrack, Architecture, CategoryCatalog, LabelKind,
                   Localization, PseudoLabel, VideoFeatures, validate_dataset)
from .decode import DEFAULT_OPTIONS, DecodeOptions, localize
from .evalkit import precision_at_1_per_category
from .parallel import map_ordered
from .pseudo import LabelRuleConfig


@dataclass(frozen=True)
class WeightContext:
    """What a per-video weight hook may look at."""

    video: VideoFeatures
    kind: LabelKind
    video_score: float
    batch_scores: tuple[float, ...]


WeightHook = Callable[[WeightContext], float]


def constant_weight(ctx: WeightContext) -> float:
    """The default hook: every video contributes with weight 1."""
    return 1.0


def batch_rank_weight(ctx: WeightContext) -> float:
    """Reference noise-adaptivity hook: the rank of the video's own-label
    score within the batch, normalized to (0, 1]; confidently scored
    videos contribute more."""
    below = sum(1 for s in ctx.batch_scores if s < ctx.video_score)
    return (1 + below) / len(ctx.batch_scores)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_videos: int = 8
    base_lr_heads: float = 1e-4
    base_lr_adapter: float = 1e-5
    warmup_epochs: int = 5
    momentum: float = 0.9
    l2_penalty_heads: float = 1e-3
    action_loss_scale: float = 0.2
    optimizer_mode: str = "momentum-sgd"  # or "plain-gd"
    weight_hook: WeightHook = constant_weight
    max_labeled_frames_per_video: int = 25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_videos < 1:
            raise ValueError("epochs must be >= 0 and batch_videos >= 1")
        if self.base_lr_heads <= 0 or self.base_lr_adapter < 0:
            raise ValueError("learning rates must be positive (adapter may be 0 to freeze)")
        if self.action_loss_scale <= 0:
            raise ValueError("action_loss_scale must be positive")
        if not 0 <= self.warmup_epochs <= max(self.epochs, 1):
            raise ValueError("warmup_epochs must lie in [0, epochs]")
        if self.optimizer_mode not in ("momentum-sgd", "plain-gd"):
            raise ValueError(f"unknown optimizer_mode {self.optimizer_mode!r}")
        if self.max_labeled_frames_per_video < 1:
            raise ValueError("max_labeled_frames_per_video must be >= 1")


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> tuple[float, float]:
    """Learning rates at one optimizer step: a linear ramp from 0 over the
    warmup steps, then a half-cosine from the base rates down to 0."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warmup_steps = 0
    if cfg.epochs > 0 and cfg.warmup_epochs > 0:
        warmup_steps = int(round(total_steps * cfg.warmup_epochs / cfg.epochs))
    if step < warmup_steps:
        scale = step / warmup_steps
    else:
        span = max(1, total_steps - 1 - warmup_steps)
        progress = (step - warmup_steps) / span
        scale = 0.5 * (1.0 + math.cos(math.pi * progress))
    return cfg.base_lr_heads * scale, cfg.base_lr_adapter * scale


@dataclass
class TrainState:
    """Mutable optimizer state carried across steps."""

    step: int = 0
    total_steps: int = 1
    velocities: list[np.ndarray] | None = None


@dataclass(frozen=True)
class StepReport:
    step: int
    loss: float
    label_counts: Mapping[str, int]
    labeled_frame_fraction: float
    lr_heads: float
    lr_adapter: float


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mean_loss: float
    label_counts: Mapping[str, int]
    lr: float
    heldout_state_precision: float | None = None
    heldout_action_precision: float | None = None
    heldout_per_category: Mapping[int, tuple[float, float]] | None = None

    def to_json_dict(self) -> dict:
        row = {
            "epoch": self.epoch,
            "mean_loss": self.mean_loss,
            "label_counts": dict(self.label_counts),
            "heldout_state_precision": self.heldout_state_precision,
            "heldout_action_precision": self.heldout_action_precision,
            "lr": self.lr,
        }
        if self.heldout_per_category is not None:
            row["heldout_per_category"] = {
                str(c): list(v) for c, v in sorted(self.heldout_per_category.items())}
        return row


def _anchor_distance(label: PseudoLabel, loc: Localization,
                     delta_prime: int) -> float:
    """Distance from a label to the nearest window center of the rule that
    could have generated it (the action-background band is centered at
    the two points ``delta_prime`` away from the decoded action)."""
    if label.category != loc.category:
        return math.inf  # cross-task negative: no in-video anchor
    if label.kind is LabelKind.S1:
        return abs(label.frame - loc.s1_frame)
    if label.kind is LabelKind.S2:
        return abs(label.frame - loc.s2_frame)
    if label.kind in (LabelKind.A, LabelKind.BG_S):
        return abs(label.frame - loc.action_frame)
    return min(abs(label.frame - loc.s1_frame),
               abs(label.frame - loc.s2_frame),
               abs(label.frame - (loc.action_frame - delta_prime)),
               abs(label.frame - (loc.action_frame + delta_prime)))


_KIND_ORDER = {LabelKind.S1: 0, LabelKind.S2: 1, LabelKind.BG_S: 2,
               LabelKind.A: 3, LabelKind.BG_A: 4}


def truncate_labels(labels: Sequence[PseudoLabel], loc: Localization,
                    limit: int, delta_prime: int = 0) -> list[PseudoLabel]:
    """Keep at most ``limit`` labels: positives first, then negatives by
    increasing distance to their generating anchors (cross-task negatives
    last)."""
    ordered = sorted(labels, key=lambda l: (
        not l.kind.is_positive, _anchor_distance(l, loc, delta_prime), l.frame,
        _KIND_ORDER[l.kind], l.category))
    return ordered[:limit]


def _stage1(params, video, cfg, rule_cfg, opts):
    scores = model_mod.forward(params, video.frames)
    loc = localize(scores, video.label, opts)
    labels = pseudo_mod.build_labels(video, loc, rule_cfg, params.architecture,
                                     params.state_background)
    return loc, labels


def _mix_seed(seed: int, step: int) -> int:
    return (seed * 1_000_003 + step) % (2 ** 63)


def train_step(params, batch: Sequence[VideoFeatures], cfg: TrainConfig,
               rule_cfg: LabelRuleConfig, opts: DecodeOptions = DEFAULT_OPTIONS,
               state: TrainState | None = None,
               label_sink: Callable[[int, list[PseudoLabel]], None] | None = None,
               ) -> tuple[model_mod.ModelParams, StepReport]:
    """One decode / label / update step over a batch of videos.

    ``state`` carries the step index, the schedule horizon and the
    momentum buffers; it is updated in place.  ``label_sink`` (if given)
    receives the truncated per-batch label list before the update.
    """
    if not batch:
        raise ValueError("train_step needs a nonempty batch")
    if state is None:
        state = TrainState()

    # Stage 1: inference only -- decode and build the supervision set.
    stage1 = map_ordered(lambda v: _stage1(params, v, cfg, rule_cfg, opts), batch)
    locs = [loc for loc, _ in stage1]
    per_video = [labels for _, labels in stage1]

    extra = pseudo_mod.build_cross_task_negatives(
        [(v, v.label) for v in batch],
        replace(rule_cfg, seed=_mix_seed(rule_cfg.seed, state.step)),
        params.architecture, params.state_background)
    if extra:
        by_id = {v.id: i for i, v in enumerate(batch)}
        for label in extra:
            if label.video_id in by_id:
                per_video[by_id[label.video_id]].append(label)

    batch_scores = tuple(loc.score for loc in locs)
    kind_scale = {LabelKind.A: cfg.action_loss_scale,
                  LabelKind.BG_A: cfg.action_loss_scale}

    counts: Counter = Counter()
    fractions = []
    weighted: list[list[PseudoLabel]] = []
    for video, loc, labels in zip(batch, locs, per_video):
        kept = truncate_labels(labels, loc, cfg.max_labeled_frames_per_video,
                               rule_cfg.delta_prime_frames(video.fps))
        kept_weighted = []
        for label in kept:
            hook_w = cfg.weight_hook(WeightContext(video, label.kind,
                                                   loc.score, batch_scores))
            if hook_w < 0:
                raise ValueError("weight hooks must return nonnegative weights")
            w = label.weight * hook_w
            if w > 0:
                kept_weighted.append(replace(label, weight=w))
        weighted.append(kept_weighted)
        counts.update(l.kind.value for l in kept_weighted)
        frames_used = {l.frame for l in kept_weighted}
        fractions.append(len(frames_used) / video.num_frames)
    if label_sink is not None:
        label_sink(state.step, [l for group in weighted for l in group])

    lr_heads, lr_adapter = lr_at(state.step, state.total_steps, cfg)
    report_base = dict(step=state.step, label_counts=dict(counts),
                       labeled_frame_fraction=max(fractions, default=0.0),
                       lr_heads=lr_heads, lr_adapter=lr_adapter)

    if not any(weighted):
        # All labels carry zero weight: no data term, and the decay is
        # gated off with it, so parameters stay untouched.
        state.step += 1
        return params, StepReport(loss=0.0, **report_base)

    # Stage 2: forward/backward on labeled frames only, reduced in batch order.
    results = map_ordered(
        lambda pair: model_mod.backward(params, pair[0].frames, pair[1], kind_scale),
        [(v, labels) for v, labels in zip(batch, weighted)])
    blocks = model_mod.iter_blocks(params)
    grads = model_mod.grad_zeros(params)
    total_loss = 0.0
    for loss, g in results:
        total_loss += loss
        for acc, part in zip(grads, g):
            acc += part

    if cfg.l2_penalty_heads:
        for block, g in zip(blocks, grads):
            if block.is_head:
                g += cfg.l2_penalty_heads * block.array

    if state.velocities is None:
        state.velocities = [np.zeros_like(b.array) for b in blocks]
    new_arrays = []
    for block, g, v in zip(blocks, grads, state.velocities):
        lr = lr_heads if block.is_head else lr_adapter
        if cfg.optimizer_mode == "momentum-sgd":
            v *= cfg.momentum
            v += g
            direction = v
        else:
            direction = g
        new_arrays.append(block.array - lr * direction)
    state.step += 1
    return (model_mod.rebuild_params(params, new_arrays),
            StepReport(loss=total_loss, **report_base))


def _evaluate_heldout(params, heldout, annotations, opts):
    predictions = []
    for video, loc in zip(heldout, map_ordered(
            lambda v: localize(model_mod.forward(params, v.frames), v.label, opts),
            heldout)):
        predictions.append((video.id, loc))
    per_category = precision_at_1_per_category(predictions, annotations)
    state_p = float(np.mean([v[0] for v in per_category.values()]))
    action_p = float(np.mean([v[1] for v in per_category.values()]))
    return state_p, action_p, per_category


def fit(params, dataset: Sequence[VideoFeatures], cfg: TrainConfig,
        rule_cfg: LabelRuleConfig, opts: DecodeOptions = DEFAULT_OPTIONS,
        heldout: Sequence[VideoFeatures] = (),
        heldout_annotations: Sequence[AnnotationTrack] = (),
        catalog: CategoryCatalog | None = None,
        label_sink: Callable[[int, list[PseudoLabel]], None] | None = None,
        ) -> tuple[model_mod.ModelParams, list[EpochLog]]:
    """Run the full loop for ``cfg.epochs`` epochs over a shuffled dataset.

    When a held-out split is given it is evaluated after every epoch and
    the parameters from the epoch with the best held-out state-plus-action
    precision are returned; otherwise the final parameters are.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("fit needs a nonempty dataset")
    if catalog is not None:
        report = validate_dataset(catalog, dataset)
        if not report.all_ok:
            bad = report.failures[0]
            raise ValueError(f"invalid video {bad.video_id}: {'; '.join(bad.reasons)}")

    steps_per_epoch = math.ceil(len(dataset) / cfg.batch_videos)
    state = TrainState(step=0, total_steps=max(1, cfg.epochs * steps_per_epoch))
    logs: list[EpochLog] = []
    best_params, best_score = params, -math.inf

    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
        losses, counts, first_lr = [], Counter(), None
        for start in range(0, len(dataset), cfg.batch_videos):
            batch = [dataset[i] for i in order[start:start + cfg.batch_videos]]
            params, report = train_step(params, batch, cfg, rule_cfg, opts,
                                        state=state,
                                        label_sink=label_sink if epoch == 0 else None)
            losses.append(report.loss)
            counts.update(report.label_counts)
            if first_lr is None:
                first_lr = report.lr_heads
        entry = dict(epoch=epoch, mean_loss=float(np.mean(losses)),
                     label_counts=dict(counts), lr=first_lr or 0.0)
        if len(heldout) > 0:
            state_p, action_p, per_cat = _evaluate_heldout(
                params, heldout, heldout_annotations, opts)
            logs.append(EpochLog(heldout_state_precision=state_p,
                                 heldout_action_precision=action_p,
                                 heldout_per_category=per_cat, **entry))
            if state_p + action_p > best_score:
                best_score, best_params = state_p + action_p, params
        else:
            logs.append(EpochLog(**entry))
            best_params = params
    return best_params, logs


def best_epoch_metrics(logs: Sequence[EpochLog],
                       per_category: bool = False) -> tuple[float, float]:
    """Held-out precision at the best epoch.

    With ``per_category`` the best epoch is selected independently for
    each category before averaging; the default picks one global best
    epoch by state-plus-action precision.
    """
    scored = [log for log in logs if log.heldout_state_precision is not None]
    if not scored:
        raise ValueError("no held-out evaluations in the log")
    if not per_category:
        best = max(scored, key=lambda log: (log.heldout_state_precision
                                            + log.heldout_action_precision))
        return best.heldout_state_precision, best.heldout_action_precision
    categories = sorted(scored[0].heldout_per_category)
    state_vals, action_vals = [], []
    for c in categories:
        best = max((log.heldout_per_category[c] for log in scored),
                   key=lambda pair: pair[0] + pair[1])
        state_vals.append(best[0])
        action_vals.append(best[1])
    return float(np.mean(state_vals)), float(np.mean(action_vals))
