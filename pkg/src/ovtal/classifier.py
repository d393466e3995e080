"""Open-vocabulary classification of class-agnostic instances.

Instance features are pooled from the raw snippet features by 1-D RoI-Align,
scored against class prototypes with a temperature-scaled cosine softmax,
fused with the actionness score, and deduplicated with SoftNMS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, ShapeError
from .localizer import ActionInstance

FUSION_MODES = ("geometric", "arithmetic", "actionness_only", "category_only")
NMS_DECAY_MODES = ("linear", "gaussian")


@dataclass
class Vocabulary:
    """Class names, D-dim prototype embeddings, and the base/novel partition."""

    names: list
    prototypes: np.ndarray
    novel_mask: np.ndarray

    def __post_init__(self):
        protos = np.asarray(self.prototypes, dtype=float)
        novel = np.asarray(self.novel_mask, dtype=bool)
        if len(self.names) < 1:
            raise InputError("vocabulary needs at least one class")
        if len(set(self.names)) != len(self.names):
            raise InputError("class names must be unique")
        if protos.ndim != 2 or protos.shape[0] != len(self.names) or novel.shape != (len(self.names),):
            raise ShapeError("prototypes must be C x D with one base/novel tag per class")
        if np.any(np.linalg.norm(protos, axis=1) == 0.0):
            raise InputError("prototype rows must be non-zero")
        self.prototypes = protos
        self.novel_mask = novel

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    @property
    def base_names(self) -> list:
        return [n for n, nov in zip(self.names, self.novel_mask) if not nov]

    @property
    def novel_names(self) -> list:
        return [n for n, nov in zip(self.names, self.novel_mask) if nov]

    def restrict(self, keep_names) -> "Vocabulary":
        keep = set(keep_names)
        idx = [i for i, n in enumerate(self.names) if n in keep]
        missing = keep - set(self.names)
        if missing:
            raise InputError(f"unknown classes requested: {sorted(missing)}")
        return Vocabulary(
            names=[self.names[i] for i in idx],
            prototypes=self.prototypes[idx],
            novel_mask=self.novel_mask[idx],
        )


@dataclass
class ClassifierConfig:
    temperature: float = 0.07
    roi_bins: int = 4
    top_k_categories: int = 1
    fusion_mode: str = "geometric"

    def __post_init__(self):
        if self.temperature <= 0:
            raise InputError("temperature must be positive")
        if self.roi_bins < 1 or self.top_k_categories < 1:
            raise InputError("roi_bins and top_k_categories must be >= 1")
        if self.fusion_mode not in FUSION_MODES:
            raise InputError(f"fusion_mode must be one of {FUSION_MODES}")


@dataclass
class NmsConfig:
    iou_threshold: float = 0.1
    min_score: float = 0.001
    top_k: int = 200
    decay: str = "linear"
    sigma: float = 0.5

    def __post_init__(self):
        if self.decay not in NMS_DECAY_MODES:
            raise InputError(f"decay must be one of {NMS_DECAY_MODES}")
        if not 0.0 <= self.iou_threshold <= 1.0 or self.sigma <= 0 or self.top_k < 1:
            raise InputError("invalid SoftNMS configuration")


def roi_align_1d(features: np.ndarray, interval: tuple, bins: int) -> np.ndarray:
    """Mean of `bins` center samples over the interval, each linearly interpolated
    between adjacent snippet rows (row i sits at coordinate i + 0.5)."""
    feats = np.asarray(features, dtype=float)
    S = feats.shape[0]
    start, end = float(interval[0]), float(interval[1])
    if bins < 1:
        raise InputError("bins must be >= 1")
    if not (0.0 <= start < end <= S):
        raise InputError(f"interval [{start}, {end}] outside [0, {S}]")
    width = (end - start) / bins
    positions = start + (np.arange(bins) + 0.5) * width
    x = positions - 0.5  # continuous row index
    lo = np.clip(np.floor(x).astype(int), 0, S - 1)
    hi = np.clip(lo + 1, 0, S - 1)
    frac = np.clip(x - lo, 0.0, 1.0)
    samples = feats[lo] * (1.0 - frac)[:, None] + feats[hi] * frac[:, None]
    return samples.mean(axis=0)


def pool_instance_features(features: np.ndarray, instances, bins: int) -> np.ndarray:
    """RoI-Align every instance; returns an M x D matrix."""
    feats = np.asarray(features, dtype=float)
    if not instances:
        return np.zeros((0, feats.shape[1]))
    return np.stack([roi_align_1d(feats, (i.start, i.end), bins) for i in instances])


def classify(pooled: np.ndarray, vocab: Vocabulary, cfg: ClassifierConfig):
    """Cosine similarity against prototypes, softmax over categories after
    temperature scaling; returns (top_ids (M, k), top_scores (M, k), probs (M, C))."""
    pooled = np.asarray(pooled, dtype=float)
    if pooled.ndim != 2:
        raise ShapeError("pooled features must be M x D")
    if pooled.shape[0] == 0:
        k = min(cfg.top_k_categories, vocab.size)
        return np.zeros((0, k), dtype=int), np.zeros((0, k)), np.zeros((0, vocab.size))
    if pooled.shape[1] != vocab.dim:
        raise ShapeError(f"feature dim {pooled.shape[1]} does not match vocabulary dim {vocab.dim}")
    norms = np.linalg.norm(pooled, axis=1)
    if np.any(norms == 0.0):
        raise InputError("zero-norm instance feature cannot be classified")
    protos = vocab.prototypes / np.linalg.norm(vocab.prototypes, axis=1, keepdims=True)
    cos = (pooled / norms[:, None]) @ protos.T
    z = cos / cfg.temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    k = min(cfg.top_k_categories, vocab.size)
    top_ids = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    top_scores = np.take_along_axis(probs, top_ids, axis=1)
    return top_ids, top_scores, probs


def fuse_scores(s_a: float, s_c: float, mode: str = "geometric") -> float:
    if not (0.0 <= s_a <= 1.0 and 0.0 <= s_c <= 1.0):
        raise InputError("scores must lie in [0, 1]")
    if mode == "geometric":
        return float(np.sqrt(s_a * s_c))
    if mode == "arithmetic":
        return 0.5 * (s_a + s_c)
    if mode == "actionness_only":
        return s_a
    if mode == "category_only":
        return s_c
    raise InputError(f"unknown fusion mode '{mode}'")


def soft_nms(instances, cfg: NmsConfig = None, on_actionness: bool = False):
    """Class-agnostic SoftNMS. Iteratively selects the highest-scoring survivor and
    decays every remaining instance whose tIoU with it exceeds the threshold
    (linear: s * (1 - tIoU); gaussian: s * exp(-tIoU^2 / sigma)); decayed instances
    below min_score are pruned. Returns at most top_k survivors, scores updated,
    sorted descending.

    Suppression runs on the fused score by default; pass on_actionness=True for
    class-agnostic instances scored by s_a (the pseudo-labeling path).
    """
    cfg = cfg or NmsConfig()
    instances = list(instances)
    n = len(instances)
    if n == 0:
        return []
    starts = np.array([i.start for i in instances], dtype=float)
    ends = np.array([i.end for i in instances], dtype=float)
    if on_actionness:
        scores = np.array([i.s_a for i in instances], dtype=float)
    else:
        scores = np.array([i.s for i in instances], dtype=float)
    lengths = ends - starts
    alive = np.ones(n, dtype=bool)
    kept, kept_scores = [], []
    while len(kept) < cfg.top_k:
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        j = live[np.argmax(scores[live])]
        kept.append(j)
        kept_scores.append(scores[j])
        alive[j] = False
        rest = np.flatnonzero(alive)
        if rest.size == 0:
            continue
        inter = np.maximum(0.0, np.minimum(ends[rest], ends[j]) - np.maximum(starts[rest], starts[j]))
        overlap = inter / (lengths[rest] + lengths[j] - inter)
        hit = overlap > cfg.iou_threshold
        if np.any(hit):
            tgt = rest[hit]
            if cfg.decay == "linear":
                scores[tgt] *= 1.0 - overlap[hit]
            else:
                scores[tgt] *= np.exp(-(overlap[hit] ** 2) / cfg.sigma)
            alive[tgt[scores[tgt] < cfg.min_score]] = False
    out = []
    for j, score in zip(kept, kept_scores):
        inst = instances[j]
        clone = ActionInstance(start=inst.start, end=inst.end, class_id=inst.class_id,
                               s_a=inst.s_a, s_c=inst.s_c, s=inst.s)
        if on_actionness:
            clone.s_a = float(score)
        else:
            clone.s = float(score)
        out.append(clone)
    return out
