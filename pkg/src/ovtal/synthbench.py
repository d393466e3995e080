"""Deterministic synthetic benchmarks for the full pipeline.

Every stream of randomness comes from the counter-based Philox generator keyed
by (config seed, stream id), so generation is reproducible across platforms and
a larger open-domain pool is a strict superset of a smaller one. Videos are
Gaussian background rows with planted non-overlapping segments whose rows equal
a class prototype plus noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import Vocabulary
from .dataio import Annotation, VideoRecord
from .exceptions import ConfigError, InputError
from .localizer import SnippetFeatures

# stream-id bases, one block per purpose
_STREAM_VOCAB = 0
_STREAM_DISTRACTOR = 1
_STREAM_LABELED = 1_000_000
_STREAM_ID_POOL = 2_000_000
_STREAM_OD_POOL = 3_000_000
_STREAM_VAL = 4_000_000

_MIN_GAP = 2  # snippets kept free between planted instances


@dataclass
class SynthConfig:
    c_base: int = 6
    c_novel: int = 4
    dim: int = 32
    videos_labeled: int = 40
    videos_unlabeled_id: int = 40
    videos_unlabeled_od: int = 400
    videos_val: int = 40
    s_min: int = 64
    s_max: int = 192
    instances_min: int = 1
    instances_max: int = 3
    seg_len_min: int = 8
    seg_len_max: int = 16
    sigma: float = 0.3
    sigma_bg: float = 0.3
    context_scale: float = 0.45
    context_classes: int = 3
    distractor_classes: int = 4
    cosine_cap: float = 0.5
    od_multiplier: float = 1.0
    seed: int = 0

    def __post_init__(self):
        counts = (self.c_base, self.c_novel, self.dim, self.videos_labeled,
                  self.videos_unlabeled_id, self.videos_unlabeled_od, self.videos_val,
                  self.s_min, self.instances_min, self.seg_len_min)
        if any(c < 1 for c in counts):
            raise ConfigError("all counts must be >= 1 (distractor_classes may be 0)")
        if self.distractor_classes < 0 or self.od_multiplier < 0:
            raise ConfigError("distractor_classes and od_multiplier must be >= 0")
        if self.sigma <= 0 or self.sigma_bg <= 0:
            raise ConfigError("noise levels must be positive")
        if self.context_scale < 0 or self.context_classes < 0:
            raise ConfigError("context_scale and context_classes must be >= 0")
        if self.s_max < self.s_min or self.instances_max < self.instances_min \
                or self.seg_len_max < self.seg_len_min:
            raise ConfigError("range upper bounds must not be below lower bounds")
        if not 0.0 < self.cosine_cap <= 1.0:
            raise ConfigError("cosine_cap must lie in (0, 1]")
        worst = self.instances_max * self.seg_len_max + (self.instances_max - 1) * _MIN_GAP
        if worst > self.s_min:
            raise ConfigError(
                f"instances cannot always be placed: worst case needs {worst} snippets, s_min is {self.s_min}")


@dataclass
class SynthBenchmark:
    vocab: Vocabulary
    labeled_train: list
    unlabeled_id: list
    unlabeled_od: list
    val: list

    def split(self, name: str) -> list:
        return {"labeled_train": self.labeled_train, "unlabeled_id": self.unlabeled_id,
                "unlabeled_od": self.unlabeled_od, "val": self.val}[name]


def _stream(config_seed: int, stream_id: int) -> np.random.Generator:
    key = np.array([config_seed & 0xFFFFFFFFFFFFFFFF, stream_id & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _unit_vectors(rng, count: int, dim: int, cap: float = None, max_retries: int = 200):
    """Random unit rows; with a cap, re-draw rows until all pairwise cosines obey it."""
    vecs = rng.normal(size=(count, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    if cap is None:
        return vecs
    for _ in range(max_retries * count):
        cos = vecs @ vecs.T
        np.fill_diagonal(cos, -1.0)
        worst = np.unravel_index(np.argmax(cos), cos.shape)
        if cos[worst] <= cap:
            return vecs
        row = rng.normal(size=dim)
        vecs[worst[1]] = row / np.linalg.norm(row)
    raise ConfigError(f"could not draw {count} unit vectors with pairwise cosine <= {cap}")


def gen_vocabulary(config: SynthConfig) -> Vocabulary:
    rng = _stream(config.seed, _STREAM_VOCAB)
    c = config.c_base + config.c_novel
    protos = _unit_vectors(rng, c, config.dim, cap=config.cosine_cap)
    names = [f"base_action_{i:02d}" for i in range(config.c_base)]
    names += [f"novel_action_{i:02d}" for i in range(config.c_novel)]
    novel = np.array([False] * config.c_base + [True] * config.c_novel)
    return Vocabulary(names=names, prototypes=protos, novel_mask=novel)


def gen_distractors(config: SynthConfig) -> np.ndarray:
    if config.distractor_classes == 0:
        return np.zeros((0, config.dim))
    rng = _stream(config.seed, _STREAM_DISTRACTOR)
    return _unit_vectors(rng, config.distractor_classes, config.dim)


def gen_video(prototypes_by_name: dict, allowed: list, config: SynthConfig,
              stream_id: int, video_id: str, provenance: str,
              context_basis: np.ndarray = None) -> VideoRecord:
    """One video: noise rows around a per-video ambient context direction, plus
    planted instances whose rows add a class prototype on top.

    The context is a random mixture of a few vocabulary prototypes at
    context_scale amplitude, so background intervals look confidently
    classifiable to a prototype classifier without being actions.
    """
    if not allowed:
        raise InputError("need at least one allowed class")
    rng = _stream(config.seed, stream_id)
    s = int(rng.integers(config.s_min, config.s_max + 1))
    ctx = np.zeros(config.dim)
    if config.context_scale > 0 and config.context_classes > 0 \
            and context_basis is not None and len(context_basis):
        k = min(config.context_classes, len(context_basis))
        chosen = rng.choice(len(context_basis), size=k, replace=False)
        weights = rng.uniform(0.2, 1.0, size=k)
        mix = weights @ context_basis[chosen]
        ctx = config.context_scale * mix / np.linalg.norm(mix)
    n_inst = int(rng.integers(config.instances_min, config.instances_max + 1))
    lengths = rng.integers(config.seg_len_min, config.seg_len_max + 1, size=n_inst)
    free = s - int(lengths.sum()) - _MIN_GAP * (n_inst - 1)
    if free < 0:
        raise ConfigError(f"cannot place {n_inst} instances in {s} snippets")
    # split the free room into n_inst + 1 random gaps
    gaps = rng.multinomial(free, np.full(n_inst + 1, 1.0 / (n_inst + 1)))
    feats = ctx + rng.normal(scale=config.sigma_bg, size=(s, config.dim))
    annotations = []
    cursor = 0
    for i in range(n_inst):
        cursor += int(gaps[i]) + ((_MIN_GAP) if i else 0)
        start, end = cursor, cursor + int(lengths[i])
        name = str(rng.choice(allowed))
        proto = prototypes_by_name[name]
        feats[start:end] = ctx + proto + rng.normal(scale=config.sigma, size=(end - start, config.dim))
        annotations.append(Annotation(start=float(start), end=float(end), class_name=name))
        cursor = end
    record = VideoRecord(
        features=SnippetFeatures(video_id=video_id, features=feats.astype(np.float32)),
        annotations=annotations,
        provenance=provenance,
    )
    return record


def gen_benchmark(config: SynthConfig) -> SynthBenchmark:
    """Four splits with disjoint video ids: base-only labeled training, an
    in-domain unlabeled pool of novel-class videos (labels withheld), an
    open-domain pool mixing base, novel, and distractor actions, and a labeled
    base+novel validation split."""
    vocab = gen_vocabulary(config)
    protos = {name: vocab.prototypes[i] for i, name in enumerate(vocab.names)}
    distractors = gen_distractors(config)
    for i in range(distractors.shape[0]):
        protos[f"distractor_{i:02d}"] = distractors[i]

    base = vocab.base_names
    novel = vocab.novel_names
    od_classes = list(vocab.names) + [f"distractor_{i:02d}" for i in range(distractors.shape[0])]
    n_od = int(round(config.videos_unlabeled_od * config.od_multiplier))

    def make_split(prefix, count, allowed, stream_base, provenance):
        return [gen_video(protos, allowed, config, stream_base + i, f"{prefix}_{i:04d}", provenance,
                          context_basis=vocab.prototypes)
                for i in range(count)]

    return SynthBenchmark(
        vocab=vocab,
        labeled_train=make_split("lab", config.videos_labeled, base, _STREAM_LABELED, "labeled"),
        unlabeled_id=make_split("id", config.videos_unlabeled_id, novel, _STREAM_ID_POOL, "in_domain"),
        unlabeled_od=make_split("od", n_od, od_classes, _STREAM_OD_POOL, "open_domain"),
        val=make_split("val", config.videos_val, list(vocab.names), _STREAM_VAL, "val"),
    )


def interpolate_features(features: np.ndarray, target_len: int) -> np.ndarray:
    """Linear interpolation along the temporal axis at uniformly spaced positions."""
    feats = np.asarray(features, dtype=float)
    s = feats.shape[0]
    if s < 1 or target_len < 1:
        raise InputError("need at least one input and one output row")
    if s == 1:
        return np.repeat(feats, target_len, axis=0)
    if target_len == 1:
        positions = np.array([0.0])
    else:
        positions = np.arange(target_len) * (s - 1) / (target_len - 1)
    lo = np.clip(np.floor(positions).astype(int), 0, s - 1)
    hi = np.clip(lo + 1, 0, s - 1)
    frac = positions - lo
    return feats[lo] * (1.0 - frac)[:, None] + feats[hi] * frac[:, None]


def interpolate_record(record: VideoRecord, target_len: int) -> VideoRecord:
    """Fixed-length resampling of one video; annotation coordinates scale by
    target_len / S."""
    s = record.features.duration_snippets
    scale = target_len / s
    feats = interpolate_features(record.features.features, target_len).astype(np.float32)
    annotations = [Annotation(start=a.start * scale, end=a.end * scale,
                              class_name=a.class_name, actionness=a.actionness)
                   for a in record.annotations]
    return VideoRecord(
        features=SnippetFeatures(video_id=record.features.video_id, features=feats,
                                 snippet_stride_seconds=record.features.snippet_stride_seconds / scale),
        annotations=annotations,
        provenance=record.provenance,
    )
