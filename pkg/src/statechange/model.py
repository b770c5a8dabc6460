"""Frame classifiers: parameters, forward pass, and analytic gradients.

Every variant is a stack of a linear feature adapter (the trainable
stand-in for a finetunable backbone, initialized to the identity), one
hidden rectified-linear layer per head, and per-architecture output
layers.  Frames are processed independently of each other.

The backward pass differentiates the weighted negative-log-likelihood

    loss = - sum_labels w * log h_c^q(v_t)

where softmax targets use the class layout from :mod:`statechange.core`
and, for the per-category architectures, action labels are the binary
cross-entropy of the category's sigmoid output (``A`` -> target 1,
``BG_A`` -> target 0).  Only labeled frames contribute, so gradients are
exactly zero with respect to every unlabeled frame.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (Architecture, CategoryCatalog, FrameScores, LabelKind,
                   PseudoLabel)

PROB_FLOOR = 1e-12

CHECKPOINT_MAGIC = b"MTSC"
CHECKPOINT_VERSION = 1
_ARCH_TAGS = {
    Architecture.INDEPENDENT: 1,
    Architecture.MULTI_CLASSIFIER: 2,
    Architecture.JOINT_SINGLE_HEAD: 3,
    Architecture.JOINT_TWO_HEAD: 4,
}
_TAG_ARCHS = {v: k for k, v in _ARCH_TAGS.items()}


@dataclass(frozen=True, eq=False)
class Linear:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)


@dataclass(frozen=True, eq=False)
class Mlp:
    hidden: Linear
    out: Linear


@dataclass(frozen=True, eq=False)
class ModelParams:
    """All trainable parameters of one model.

    ``adapters`` holds one entry per category for the ``independent``
    architecture (no cross-category flow) and a single shared entry
    otherwise.  ``state_heads``/``action_heads`` hold one MLP per category
    for the per-category architectures; ``joint1`` keeps its single joint
    head in ``state_heads`` and has no action head.
    """

    architecture: Architecture
    n_categories: int
    feature_dim: int
    hidden_dim: int
    state_background: bool
    adapters: tuple[Linear, ...]
    state_heads: tuple[Mlp, ...]
    action_heads: tuple[Mlp, ...]

    @property
    def state_block_width(self) -> int:
        return 2 + int(self.state_background)

    def adapter_for(self, category: int) -> Linear:
        if self.architecture is Architecture.INDEPENDENT:
            return self.adapters[category]
        return self.adapters[0]


@dataclass(frozen=True)
class ParamBlock:
    """One parameter array with its stable path and optimizer group."""

    path: str
    array: np.ndarray
    is_head: bool


def _head_blocks(prefix: str, heads: Sequence[Mlp]) -> Iterable[ParamBlock]:
    for idx, mlp in enumerate(heads):
        name = f"{prefix}{idx}"
        yield ParamBlock(f"{name}.hidden.weight", mlp.hidden.weight, True)
        yield ParamBlock(f"{name}.hidden.bias", mlp.hidden.bias, True)
        yield ParamBlock(f"{name}.out.weight", mlp.out.weight, True)
        yield ParamBlock(f"{name}.out.bias", mlp.out.bias, True)


def iter_blocks(params: ModelParams) -> list[ParamBlock]:
    """All parameter arrays in the fixed declaration order used by the
    optimizer, the gradient layout, and the checkpoint format."""
    blocks: list[ParamBlock] = []
    for idx, adapter in enumerate(params.adapters):
        blocks.append(ParamBlock(f"adapter{idx}.weight", adapter.weight, False))
        blocks.append(ParamBlock(f"adapter{idx}.bias", adapter.bias, False))
    blocks.extend(_head_blocks("state_head", params.state_heads))
    blocks.extend(_head_blocks("action_head", params.action_heads))
    return blocks


def block_index(params: ModelParams, path: str) -> int:
    for i, block in enumerate(iter_blocks(params)):
        if block.path == path:
            return i
    raise KeyError(path)


def grad_zeros(params: ModelParams) -> list[np.ndarray]:
    return [np.zeros_like(b.array) for b in iter_blocks(params)]


def rebuild_params(params: ModelParams, arrays: Sequence[np.ndarray]) -> ModelParams:
    """New ``ModelParams`` with the same structure and the given arrays,
    taken in ``iter_blocks`` order."""
    expected = len(iter_blocks(params))
    if len(arrays) != expected:
        raise ValueError(f"expected {expected} arrays, got {len(arrays)}")
    it = iter(arrays)

    def linear() -> Linear:
        w = np.array(next(it), dtype=np.float64)
        b = np.array(next(it), dtype=np.float64)
        return Linear(w, b)

    adapters = tuple(linear() for _ in params.adapters)
    state_heads = tuple(Mlp(linear(), linear()) for _ in params.state_heads)
    action_heads = tuple(Mlp(linear(), linear()) for _ in params.action_heads)
    return ModelParams(params.architecture, params.n_categories,
                       params.feature_dim, params.hidden_dim,
                       params.state_background, adapters, state_heads, action_heads)


def _head_sizes(architecture: Architecture, n: int,
                state_background: bool) -> tuple[list[int], list[int]]:
    """Output sizes of the state heads and the action heads."""
    if architecture.per_category_heads:
        return [2 + int(state_background)] * n, [1] * n
    if architecture is Architecture.JOINT_SINGLE_HEAD:
        return [3 * n], []
    return [2 * n + int(state_background)], [n + 1]


def default_state_background(architecture: Architecture) -> bool:
    """Per-architecture default for the optional state background class."""
    if architecture is Architecture.INDEPENDENT:
        return False
    if architecture is Architecture.JOINT_SINGLE_HEAD:
        return False
    return True


def init_params(architecture: Architecture | str, n_categories: int,
                feature_dim: int, hidden_dim: int = 64, seed: int = 0,
                state_background: bool | None = None) -> ModelParams:
    """Fresh parameters: uniform ``1/sqrt(fan-in)`` weights, zero biases,
    identity adapters.  Deterministic per seed."""
    architecture = Architecture.parse(str(architecture)) \
        if not isinstance(architecture, Architecture) else architecture
    if n_categories < 1 or feature_dim < 1 or hidden_dim < 1:
        raise ValueError("n_categories, feature_dim and hidden_dim must be >= 1")
    if state_background is None:
        state_background = default_state_background(architecture)
    if state_background and architecture is Architecture.JOINT_SINGLE_HEAD:
        raise ValueError("the joint1 architecture has no background classes")

    rng = np.random.default_rng(seed)

    def linear(out_dim: int, in_dim: int) -> Linear:
        bound = 1.0 / np.sqrt(in_dim)
        weight = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        return Linear(weight, np.zeros(out_dim))

    def identity() -> Linear:
        return Linear(np.eye(feature_dim), np.zeros(feature_dim))

    n_adapters = n_categories if architecture is Architecture.INDEPENDENT else 1
    adapters = tuple(identity() for _ in range(n_adapters))
    state_sizes, action_sizes = _head_sizes(architecture, n_categories, state_background)
    state_heads = tuple(Mlp(linear(hidden_dim, feature_dim), linear(k, hidden_dim))
                        for k in state_sizes)
    action_heads = tuple(Mlp(linear(hidden_dim, feature_dim), linear(k, hidden_dim))
                         for k in action_sizes)
    return ModelParams(architecture, n_categories, feature_dim, hidden_dim,
                       bool(state_background), adapters, state_heads, action_heads)


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _apply_adapter(adapter: Linear, frames: np.ndarray) -> np.ndarray:
    return frames @ adapter.weight.T + adapter.bias


def _head_logits(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    hidden = np.maximum(x @ mlp.hidden.weight.T + mlp.hidden.bias, 0.0)
    return hidden @ mlp.out.weight.T + mlp.out.bias


def adapter_output(params: ModelParams, frames: np.ndarray,
                   category: int = 0) -> np.ndarray:
    """Post-adapter features; ``category`` selects the block for the
    ``independent`` architecture and is ignored otherwise."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != params.feature_dim:
        raise ValueError(f"frames must be T x {params.feature_dim}, got {frames.shape}")
    return _apply_adapter(params.adapter_for(category), frames)


def forward(params: ModelParams, frames: np.ndarray) -> FrameScores:
    """Per-frame likelihoods for every category under the given parameters."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != params.feature_dim:
        raise ValueError(f"frames must be T x {params.feature_dim}, got {frames.shape}")
    t, n = frames.shape[0], params.n_categories
    arch = params.architecture

    if arch.per_category_heads:
        k = params.state_block_width
        state = np.empty((t, k * n))
        action = np.empty((t, n))
        shared = None if arch is Architecture.INDEPENDENT \
            else _apply_adapter(params.adapters[0], frames)
        for c in range(n):
            x = _apply_adapter(params.adapters[c], frames) if shared is None else shared
            state[:, k * c:k * (c + 1)] = _softmax(_head_logits(params.state_heads[c], x))
            action[:, c] = _sigmoid(_head_logits(params.action_heads[c], x)[:, 0])
        return FrameScores(state, action, arch)

    x = _apply_adapter(params.adapters[0], frames)
    if arch is Architecture.JOINT_SINGLE_HEAD:
        probs = _softmax(_head_logits(params.state_heads[0], x))
        return FrameScores(probs[:, :2 * n], probs[:, 2 * n:], arch)

    state = _softmax(_head_logits(params.state_heads[0], x))
    action = _softmax(_head_logits(params.action_heads[0], x))
    return FrameScores(state, action, arch)


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _HeadJob:
    """Labels routed to one output head: frame rows, target classes (or
    sigmoid targets), and effective weights."""

    kind: str                 # "softmax" | "sigmoid"
    head_field: str           # "state_heads" | "action_heads"
    head_index: int
    adapter_index: int
    rows: np.ndarray
    targets: np.ndarray       # class index (softmax) or 0/1 target (sigmoid)
    weights: np.ndarray


def _target_class(params: ModelParams, label: PseudoLabel) -> tuple[str, str, int, int]:
    """Resolve a label to (job kind, head field, head index, target).

    Raises ``ValueError`` for label kinds the architecture cannot express.
    """
    arch, n, c, kind = params.architecture, params.n_categories, label.category, label.kind
    if not 0 <= c < n:
        raise ValueError(f"label category {c} out of range (N={n})")

    if arch.per_category_heads:
        if kind in (LabelKind.A, LabelKind.BG_A):
            return "sigmoid", "action_heads", c, int(kind is LabelKind.A)
        if kind is LabelKind.BG_S:
            if not params.state_background:
                raise ValueError("BG_S label needs a state background output")
            return "softmax", "state_heads", c, 2
        return "softmax", "state_heads", c, 0 if kind is LabelKind.S1 else 1

    if arch is Architecture.JOINT_SINGLE_HEAD:
        if kind is LabelKind.S1:
            return "softmax", "state_heads", 0, 2 * c
        if kind is LabelKind.S2:
            return "softmax", "state_heads", 0, 2 * c + 1
        if kind is LabelKind.A:
            return "softmax", "state_heads", 0, 2 * n + c
        raise ValueError(f"the joint1 architecture cannot express {kind.value} labels")

    # joint2
    if kind is LabelKind.A:
        return "softmax", "action_heads", 0, c
    if kind is LabelKind.BG_A:
        return "softmax", "action_heads", 0, n
    if kind is LabelKind.BG_S:
        if not params.state_background:
            raise ValueError("BG_S label needs a state background output")
        return "softmax", "state_heads", 0, 2 * n
    return "softmax", "state_heads", 0, 2 * c if kind is LabelKind.S1 else 2 * c + 1


def _build_jobs(params: ModelParams, num_frames: int,
                labels: Sequence[PseudoLabel],
                loss_weights: Mapping[LabelKind, float] | None) -> list[_HeadJob]:
    grouped: dict[tuple[str, str, int], list[tuple[int, int, float]]] = {}
    for label in labels:
        if not 0 <= label.frame < num_frames:
            raise ValueError(f"label frame {label.frame} out of range (T={num_frames})")
        kind, field_name, head_idx, target = _target_class(params, label)
        weight = label.weight
        if loss_weights is not None:
            weight *= loss_weights.get(label.kind, 1.0)
        grouped.setdefault((kind, field_name, head_idx), []).append(
            (label.frame, target, weight))

    jobs = []
    for (kind, field_name, head_idx) in sorted(grouped, key=lambda k: (k[1], k[2], k[0])):
        entries = sorted(grouped[(kind, field_name, head_idx)])
        rows = np.array([e[0] for e in entries], dtype=np.intp)
        targets = np.array([e[1] for e in entries], dtype=np.intp)
        weights = np.array([e[2] for e in entries], dtype=np.float64)
        adapter_index = head_idx if params.architecture is Architecture.INDEPENDENT else 0
        jobs.append(_HeadJob(kind, field_name, head_idx, adapter_index,
                             rows, targets, weights))
    return jobs


def _job_loss_grads(params: ModelParams, frames: np.ndarray, job: _HeadJob,
                    want_grads: bool):
    """Loss of one head job and, optionally, its parameter gradients."""
    adapter = params.adapters[job.adapter_index]
    mlp = getattr(params, job.head_field)[job.head_index]
    rows = frames[job.rows]
    x = _apply_adapter(adapter, rows)
    z1 = x @ mlp.hidden.weight.T + mlp.hidden.bias
    hidden = np.maximum(z1, 0.0)
    z2 = hidden @ mlp.out.weight.T + mlp.out.bias

    if job.kind == "softmax":
        probs = _softmax(z2)
        p_target = probs[np.arange(len(job.rows)), job.targets]
        loss = float(-np.sum(job.weights * np.log(np.clip(p_target, PROB_FLOOR, 1.0))))
        if not want_grads:
            return loss, None
        # The clamp inside the log zeroes the gradient once p <= floor.
        active = job.weights * (p_target > PROB_FLOOR)
        g2 = probs * active[:, None]
        g2[np.arange(len(job.rows)), job.targets] -= active
    else:
        s = _sigmoid(z2[:, 0])
        p = np.where(job.targets == 1, s, 1.0 - s)
        loss = float(-np.sum(job.weights * np.log(np.clip(p, PROB_FLOOR, 1.0))))
        if not want_grads:
            return loss, None
        active = job.weights * (p > PROB_FLOOR)
        g2 = (np.where(job.targets == 1, s - 1.0, s) * active)[:, None]

    g1 = (g2 @ mlp.out.weight) * (z1 > 0)
    gx = g1 @ mlp.hidden.weight
    grads = {
        f"{job.head_field[:-1]}{job.head_index}.out.weight": g2.T @ hidden,
        f"{job.head_field[:-1]}{job.head_index}.out.bias": g2.sum(axis=0),
        f"{job.head_field[:-1]}{job.head_index}.hidden.weight": g1.T @ x,
        f"{job.head_field[:-1]}{job.head_index}.hidden.bias": g1.sum(axis=0),
        f"adapter{job.adapter_index}.weight": gx.T @ rows,
        f"adapter{job.adapter_index}.bias": gx.sum(axis=0),
    }
    return loss, grads


def loss_value(params: ModelParams, frames: np.ndarray,
               labels: Sequence[PseudoLabel],
               loss_weights: Mapping[LabelKind, float] | None = None) -> float:
    """The weighted negative-log-likelihood without gradients."""
    frames = np.asarray(frames, dtype=np.float64)
    total = 0.0
    for job in _build_jobs(params, frames.shape[0], labels, loss_weights):
        loss, _ = _job_loss_grads(params, frames, job, want_grads=False)
        total += loss
    return total


def backward(params: ModelParams, frames: np.ndarray,
             labels: Sequence[PseudoLabel],
             loss_weights: Mapping[LabelKind, float] | None = None,
             ) -> tuple[float, list[np.ndarray]]:
    """Loss and exact analytic gradients for every parameter.

    ``loss_weights`` optionally rescales each label's weight per kind (used
    by the trainer for the action-loss scaling).  Gradients come back as a
    list of arrays aligned with ``iter_blocks(params)``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != params.feature_dim:
        raise ValueError(f"frames must be T x {params.feature_dim}, got {frames.shape}")
    paths = [b.path for b in iter_blocks(params)]
    index = {path: i for i, path in enumerate(paths)}
    grads = grad_zeros(params)
    total = 0.0
    for job in _build_jobs(params, frames.shape[0], labels, loss_weights):
        loss, job_grads = _job_loss_grads(params, frames, job, want_grads=True)
        total += loss
        for path, grad in job_grads.items():
            grads[index[path]] += grad
    return total, grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def checkpoint_bytes(params: ModelParams) -> bytes:
    """Serialize parameters: a little-endian header followed by every block
    from ``iter_blocks`` as 64-bit floats."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IBBHIII", CHECKPOINT_VERSION,
                          _ARCH_TAGS[params.architecture],
                          int(params.state_background), 0,
                          params.n_categories, params.feature_dim,
                          params.hidden_dim))
    for block in iter_blocks(params):
        buf.write(np.ascontiguousarray(block.array, dtype="<f8").tobytes())
    return buf.getvalue()


def params_from_bytes(data: bytes) -> ModelParams:
    header_size = 4 + struct.calcsize("<IBBHIII")
    if len(data) < header_size or data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("bad checkpoint magic")
    version, arch_tag, state_bg, _, n, d, h = struct.unpack(
        "<IBBHIII", data[4:header_size])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if arch_tag not in _TAG_ARCHS:
        raise ValueError(f"unknown architecture tag {arch_tag}")
    template = init_params(_TAG_ARCHS[arch_tag], n, d, h, seed=0,
                           state_background=bool(state_bg))
    blocks = iter_blocks(template)
    expected = sum(b.array.size for b in blocks) * 8
    payload = data[header_size:]
    if len(payload) != expected:
        raise ValueError(
            f"truncated checkpoint payload ({len(payload)} bytes, expected {expected})")
    arrays, offset = [], 0
    for block in blocks:
        count = block.array.size
        flat = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays.append(flat.astype(np.float64).reshape(block.array.shape))
        offset += count * 8
    return rebuild_params(template, arrays)


def save_checkpoint(params: ModelParams, path,
                    catalog: CategoryCatalog | None = None) -> None:
    """Write a checkpoint atomically, plus a catalog sidecar JSON when a
    catalog is given (at ``<path>.catalog.json``)."""
    from . import dataio

    dataio.atomic_write_bytes(path, checkpoint_bytes(params))
    if catalog is not None:
        sidecar = json.dumps({"catalog": dataio.catalog_to_dict(catalog)},
                             indent=2, sort_keys=True) + "\n"
        dataio.atomic_write_text(f"{path}.catalog.json", sidecar)


def load_checkpoint(path) -> tuple[ModelParams, CategoryCatalog | None]:
    from . import dataio
    import os

    with open(path, "rb") as fh:
        params = params_from_bytes(fh.read())
    sidecar = f"{path}.catalog.json"
    catalog = None
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            catalog = dataio.catalog_from_dict(json.load(fh)["catalog"])
    return params, catalog
