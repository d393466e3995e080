"""Class-agnostic anchor-free action localizer over snippet-feature sequences.

A convolutional projection feeds a pyramid of conv + layer-norm + ReLU blocks
with stride-2 max-downsampling between levels. Two shared decoder heads emit,
for every temporal location at every scale, an actionness logit and a pair of
non-negative start/end offsets in stride-normalized units. Training combines a
focal loss over all locations with a distance-IoU loss over positive ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError, ShapeError
from .tensor import Tensor, concat, maximum, minimum

DEFAULT_CHANNELS = 32
_BASE_RANGE = 4.0  # finite regression-range boundaries double from here


@dataclass
class SnippetFeatures:
    """One video as an S x D matrix of snippet embeddings plus timing metadata."""

    video_id: str
    features: np.ndarray
    snippet_stride_seconds: float = 1.0

    def __post_init__(self):
        feats = np.asarray(self.features)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise InputError(f"features for '{self.video_id}' must be a non-empty S x D matrix")
        if not np.all(np.isfinite(feats)):
            raise InputError(f"features for '{self.video_id}' contain non-finite values")
        self.features = feats

    @property
    def duration_snippets(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class ActionInstance:
    """A temporal interval in snippet coordinates with optional class and scores."""

    start: float
    end: float
    class_id: int | None = None
    s_a: float | None = None
    s_c: float | None = None
    s: float | None = None

    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class PyramidGeometry:
    """Level strides 2^l and contiguous regression ranges covering (0, inf)."""

    levels: int
    range_boundaries: tuple

    @classmethod
    def default(cls, levels: int) -> "PyramidGeometry":
        if levels < 1:
            raise InputError("need at least one pyramid level")
        bounds = [0.0] + [_BASE_RANGE * 2.0 ** i for i in range(levels - 1)] + [math.inf]
        return cls(levels=levels, range_boundaries=tuple(bounds))

    def __post_init__(self):
        b = self.range_boundaries
        if len(b) != self.levels + 1 or b[0] != 0.0 or b[-1] != math.inf:
            raise InputError("range boundaries must run from 0 to inf with one entry per level")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise InputError("range boundaries must be strictly increasing")

    @property
    def strides(self) -> list[int]:
        return [2 ** l for l in range(self.levels)]

    def level_length(self, num_snippets: int, level: int) -> int:
        return -(-num_snippets // 2 ** level)  # ceil division

    def centers(self, num_snippets: int, level: int) -> np.ndarray:
        stride = 2 ** level
        return (np.arange(self.level_length(num_snippets, level)) + 0.5) * stride


class LocalizerParams:
    """All trainable weights plus the pyramid geometry."""

    def __init__(self, geometry: PyramidGeometry, feat_dim: int, channels: int,
                 tensors: dict[str, Tensor]):
        self.geometry = geometry
        self.feat_dim = feat_dim
        self.channels = channels
        self.tensors = tensors

    def named(self) -> dict[str, Tensor]:
        return self.tensors

    def copy(self) -> "LocalizerParams":
        cloned = {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.tensors.items()}
        return LocalizerParams(self.geometry, self.feat_dim, self.channels, cloned)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()


def _glorot_uniform(rng, shape, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def localizer_init(geometry: PyramidGeometry, feat_dim: int, channels: int = DEFAULT_CHANNELS,
                   seed: int = 0) -> LocalizerParams:
    """Draw all weights from a scaled uniform scheme, deterministically per seed."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    k = 3
    t: dict[str, Tensor] = {}

    def conv_block(prefix, cin, cout, with_ln=True):
        t[f"{prefix}_w"] = Tensor(_glorot_uniform(rng, (k, cin, cout), k * cin, k * cout), requires_grad=True)
        t[f"{prefix}_b"] = Tensor(np.zeros(cout), requires_grad=True)
        if with_ln:
            t[f"{prefix}_ln_g"] = Tensor(np.ones(cout), requires_grad=True)
            t[f"{prefix}_ln_b"] = Tensor(np.zeros(cout), requires_grad=True)

    conv_block("proj", feat_dim, channels)
    for level in range(1, geometry.levels):
        conv_block(f"enc{level}", channels, channels)
    conv_block("act_hidden", channels, channels, with_ln=False)
    conv_block("reg_hidden", channels, channels, with_ln=False)
    t["act_out_w"] = Tensor(_glorot_uniform(rng, (1, channels, 1), channels, 1), requires_grad=True)
    t["act_out_b"] = Tensor(np.zeros(1), requires_grad=True)
    t["reg_out_w"] = Tensor(_glorot_uniform(rng, (1, channels, 2), channels, 2), requires_grad=True)
    # positive bias so initial offsets decode to non-degenerate intervals
    t["reg_out_b"] = Tensor(np.ones(2), requires_grad=True)
    return LocalizerParams(geometry, feat_dim, channels, t)


def localizer_forward(params: LocalizerParams, feats: SnippetFeatures) -> list[dict]:
    """Run the pyramid; returns per level {"logits": (S_l,), "offsets": (S_l, 2)} tensors."""
    if feats.dim != params.feat_dim:
        raise ShapeError(f"feature dim {feats.dim} does not match params dim {params.feat_dim}")
    t = params.tensors
    x = Tensor(feats.features.astype(np.float64))

    def block(h, prefix):
        h = h.conv1d(t[f"{prefix}_w"], t[f"{prefix}_b"], stride=1, padding=1)
        h = h.layer_norm(t[f"{prefix}_ln_g"], t[f"{prefix}_ln_b"])
        return h.relu()

    levels = [block(x, "proj")]
    for level in range(1, params.geometry.levels):
        levels.append(block(levels[-1], f"enc{level}").max_down2())

    outputs = []
    for h in levels:
        a = h.conv1d(t["act_hidden_w"], t["act_hidden_b"], stride=1, padding=1).relu()
        logits = a.conv1d(t["act_out_w"], t["act_out_b"]).reshape(-1)
        r = h.conv1d(t["reg_hidden_w"], t["reg_hidden_b"], stride=1, padding=1).relu()
        offsets = r.conv1d(t["reg_out_w"], t["reg_out_b"]).relu()
        outputs.append({"logits": logits, "offsets": offsets})
    return outputs


@dataclass
class AssignedTargets:
    """Per level: positive mask, stride-normalized offsets, and source intervals."""

    pos_masks: list = field(default_factory=list)     # bool (S_l,)
    offsets: list = field(default_factory=list)       # float (S_l, 2), stride units
    source: list = field(default_factory=list)        # float (S_l, 2), snippet units

    @property
    def num_positives(self) -> int:
        return int(sum(m.sum() for m in self.pos_masks))


def assign_targets(gt: list[ActionInstance], geometry: PyramidGeometry,
                   num_snippets: int) -> AssignedTargets:
    """A location at level l with center t is positive iff t lies inside a GT
    interval whose max one-sided extent falls in the level's regression range;
    overlapping candidates resolve to the shortest interval."""
    if num_snippets < 1:
        raise InputError("empty video")
    for g in gt:
        if not (0.0 <= g.start < g.end <= num_snippets):
            raise InputError(f"ground-truth interval [{g.start}, {g.end}] invalid for S={num_snippets}")
    out = AssignedTargets()
    bounds = geometry.range_boundaries
    for level in range(geometry.levels):
        stride = 2 ** level
        centers = geometry.centers(num_snippets, level)
        n = centers.shape[0]
        mask = np.zeros(n, dtype=bool)
        offs = np.zeros((n, 2))
        src = np.zeros((n, 2))
        lo, hi = bounds[level], bounds[level + 1]
        for i, t in enumerate(centers):
            best = None
            for g in gt:
                if not (g.start <= t <= g.end):
                    continue
                if not (lo <= max(t - g.start, g.end - t) < hi):
                    continue
                if best is None or g.length() < best.length():
                    best = g
            if best is not None:
                mask[i] = True
                offs[i] = ((t - best.start) / stride, (best.end - t) / stride)
                src[i] = (best.start, best.end)
        out.pos_masks.append(mask)
        out.offsets.append(offs)
        out.source.append(src)
    return out


def decode_instances(outputs: list[dict], geometry: PyramidGeometry,
                     num_snippets: int) -> list[ActionInstance]:
    """Turn per-level head outputs into class-agnostic instances, clamped to [0, S];
    degenerate intervals are dropped."""
    instances = []
    for level, out in enumerate(outputs):
        stride = 2 ** level
        logits = np.asarray(out["logits"].data if isinstance(out["logits"], Tensor) else out["logits"])
        offsets = np.asarray(out["offsets"].data if isinstance(out["offsets"], Tensor) else out["offsets"])
        centers = geometry.centers(num_snippets, level)
        s_a = 1.0 / (1.0 + np.exp(-logits))
        starts = np.clip(centers - offsets[:, 0] * stride, 0.0, num_snippets)
        ends = np.clip(centers + offsets[:, 1] * stride, 0.0, num_snippets)
        for st, en, sa in zip(starts, ends, s_a):
            if st < en:
                instances.append(ActionInstance(start=float(st), end=float(en), s_a=float(sa)))
    return instances


def diou_loss_1d(pred: tuple, gt: tuple) -> float:
    """1 - IoU plus the squared center distance normalized by the enclosing length."""
    ps, pe = float(pred[0]), float(pred[1])
    gs, ge = float(gt[0]), float(gt[1])
    if ps >= pe or gs >= ge:
        raise InputError("diou_loss_1d requires non-degenerate intervals")
    inter = max(0.0, min(pe, ge) - max(ps, gs))
    union = (pe - ps) + (ge - gs) - inter
    iou = inter / union
    enclose = max(pe, ge) - min(ps, gs)
    delta = 0.5 * (ps + pe) - 0.5 * (gs + ge)
    return 1.0 - iou + (delta * delta) / (enclose * enclose)


def focal_loss(logits: Tensor, pos_mask: np.ndarray, alpha: float = 0.25,
               gamma: float = 2.0) -> Tensor:
    """Sum of per-location focal terms, normalized by the positive count (floor 1)."""
    pos = np.asarray(pos_mask, dtype=bool)
    if logits.shape != pos.shape:
        raise ShapeError("focal_loss needs one logit per location")
    sign = np.where(pos, 1.0, -1.0)
    signed = logits * Tensor(sign)
    log_pt = signed.logsigmoid()
    one_minus_pt = (-signed).sigmoid()
    at = Tensor(np.where(pos, alpha, 1.0 - alpha))
    per_loc = -(at * one_minus_pt ** gamma * log_pt)
    n_pos = max(1, int(pos.sum()))
    return per_loc.sum() * (1.0 / n_pos)


def localizer_loss(outputs: list[dict], targets: AssignedTargets, lambda_reg: float = 1.0,
                   alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Focal term over all locations plus lambda_reg times mean DIoU over positives."""
    logits = concat([out["logits"] for out in outputs], axis=0)
    pos_mask = np.concatenate(targets.pos_masks)
    loss = focal_loss(logits, pos_mask, alpha=alpha, gamma=gamma)

    pred_rows, tgt_rows = [], []
    for out, mask, offs in zip(outputs, targets.pos_masks, targets.offsets):
        idx = np.flatnonzero(mask)
        if idx.size:
            pred_rows.append(out["offsets"].index_select(idx))
            tgt_rows.append(offs[idx])
    if pred_rows:
        pred = concat(pred_rows, axis=0)                        # (P, 2), >= 0
        tgt = np.concatenate(tgt_rows, axis=0)                  # (P, 2), stride units
        loss = loss + lambda_reg * _mean_diou(pred, tgt)
    return loss


def _mean_diou(pred: Tensor, tgt: np.ndarray) -> Tensor:
    """Mean DIoU between predicted and target offset pairs, each pair read as the
    interval [-d_s, d_e] around its location's center.

    Written directly over offsets so a zero-length prediction still yields a
    finite value and gradient; agrees with diou_loss_1d wherever both intervals
    are non-degenerate (DIoU is translation and scale invariant).
    """
    s1 = -pred.col(0)
    e1 = pred.col(1)
    s2 = Tensor(-tgt[:, 0])
    e2 = Tensor(tgt[:, 1])
    inter = (minimum(e1, e2) - maximum(s1, s2)).relu()
    union = (e1 - s1) + (e2 - s2) - inter
    iou = inter / union
    enclose = maximum(e1, e2) - minimum(s1, s2)
    delta = (s1 + e1 - s2 - e2) * 0.5
    per_location = 1.0 - iou + (delta * delta) / (enclose * enclose)
    return per_location.mean()
