"""Two-stage self-training: supervised stage 1, pseudo-label generation with
SoftNMS + actionness thresholding, joint-dataset construction, and stage-2
training of a student whose exponential-moving-average teacher is returned."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .classifier import NmsConfig, soft_nms
from .dataio import Annotation, VideoRecord
from .exceptions import ConfigError, InputError, ShapeError
from .localizer import (
    ActionInstance,
    LocalizerParams,
    PyramidGeometry,
    assign_targets,
    decode_instances,
    localizer_forward,
    localizer_init,
    localizer_loss,
)
from .optim import AdamW, LrSchedule, lr_at

_SHUFFLE_STREAM = 0xD1CE  # rng stream id for epoch shuffling


@dataclass
class TrainConfig:
    max_lr: float = 2e-3
    min_lr: float = 1e-8
    warmup_epochs: int = 5
    main_epochs: int = 30
    batch_size: int = 4
    pseudo_label_threshold: float = 0.2
    ema_lambda: float = 0.999
    seed: int = 0
    lambda_reg: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    weight_decay: float = 0.01
    channels: int = 32
    levels: int = 4

    def __post_init__(self):
        if self.main_epochs < 1 or self.warmup_epochs < 0 or self.batch_size < 1:
            raise ConfigError("need main_epochs >= 1, warmup_epochs >= 0, batch_size >= 1")
        if not 0.0 <= self.pseudo_label_threshold <= 1.0:
            raise ConfigError("pseudo_label_threshold must lie in [0, 1]")
        if not 0.0 <= self.ema_lambda <= 1.0:
            raise ConfigError("ema_lambda must lie in [0, 1]")
        if self.max_lr <= 0 or self.min_lr < 0 or self.min_lr > self.max_lr:
            raise ConfigError("need 0 <= min_lr <= max_lr with max_lr > 0")
        if self.levels < 1 or self.channels < 1:
            raise ConfigError("levels and channels must be >= 1")


_CONFIG_FIELDS = {f.name for f in TrainConfig.__dataclass_fields__.values()}


def train_config_from_dict(record: dict, path: str = "config") -> TrainConfig:
    if not isinstance(record, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = set(record) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown field")
    try:
        return TrainConfig(**record)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class PseudoDataset:
    """Surviving class-agnostic instances per unlabeled video, plus the
    actionness histogram of all post-NMS candidates (bin width 0.1)."""

    videos: list
    threshold: float
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(10, dtype=int))

    @property
    def num_instances(self) -> int:
        return sum(len(v.annotations) for v in self.videos)


@dataclass
class TeacherStudent:
    teacher: LocalizerParams
    student: LocalizerParams
    iteration: int = 0


def _gt_instances(record: VideoRecord) -> list:
    return [ActionInstance(start=a.start, end=a.end) for a in record.annotations]


def _feature_dim(records) -> int:
    dims = {r.features.dim for r in records}
    if len(dims) != 1:
        raise InputError(f"inconsistent feature dimensions in dataset: {sorted(dims)}")
    return dims.pop()


def _run_training(params: LocalizerParams, records, config: TrainConfig,
                  teacher: LocalizerParams = None):
    """Shared loop for both stages; mutates params (the student), applies an EMA
    update to the teacher after every optimizer step when one is given."""
    n = len(records)
    geometry = params.geometry
    targets = {r.video_id: assign_targets(_gt_instances(r), geometry, r.features.duration_snippets)
               for r in records}
    iters_per_epoch = math.ceil(n / config.batch_size)
    total_epochs = config.warmup_epochs + config.main_epochs
    schedule = LrSchedule(max_lr=config.max_lr, min_lr=config.min_lr,
                          warmup_iters=config.warmup_epochs * iters_per_epoch,
                          total_iters=total_epochs * iters_per_epoch)
    opt = AdamW(params.named(), weight_decay=config.weight_decay)
    rng = np.random.Generator(np.random.Philox(key=np.array(
        [config.seed & 0xFFFFFFFFFFFFFFFF, _SHUFFLE_STREAM], dtype=np.uint64)))
    trace = []
    iteration = 0
    for _ in range(total_epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            batch = [records[i] for i in order[lo:lo + config.batch_size]]
            params.zero_grad()
            loss = None
            for rec in batch:
                outputs = localizer_forward(params, rec.features)
                term = localizer_loss(outputs, targets[rec.video_id],
                                      lambda_reg=config.lambda_reg,
                                      alpha=config.focal_alpha, gamma=config.focal_gamma)
                loss = term if loss is None else loss + term
            loss = loss * (1.0 / len(batch))
            loss.backward()
            iteration += 1
            opt.step(lr_at(schedule, iteration))
            if teacher is not None:
                ema_update(teacher, params, config.ema_lambda)
            epoch_losses.append(loss.item())
        trace.append(float(np.mean(epoch_losses)))
    return trace


def train_stage1(labeled, config: TrainConfig):
    """Supervised training of the class-agnostic localizer on labeled videos;
    returns (params, per-epoch loss trace). Deterministic per config seed."""
    if not labeled:
        raise InputError("stage-1 training needs a non-empty labeled dataset")
    geometry = PyramidGeometry.default(config.levels)
    params = localizer_init(geometry, _feature_dim(labeled), config.channels, seed=config.seed)
    trace = _run_training(params, list(labeled), config)
    return params, trace


def generate_pseudo_labels(params: LocalizerParams, videos, nms_config: NmsConfig,
                           threshold: float) -> PseudoDataset:
    """Forward, decode, SoftNMS on actionness, then drop instances below the
    threshold. Videos left with no surviving instance are excluded from the
    pseudo dataset; a histogram of all post-NMS actionness values is kept for
    sensitivity/quality analyses."""
    if not 0.0 <= threshold <= 1.0:
        raise InputError("pseudo-label threshold must lie in [0, 1]")
    kept_videos = []
    histogram = np.zeros(10, dtype=int)
    edges = np.linspace(0.0, 1.0, 11)
    for rec in videos:
        outputs = localizer_forward(params, rec.features)
        decoded = decode_instances(outputs, params.geometry, rec.features.duration_snippets)
        survivors = soft_nms(decoded, nms_config, on_actionness=True)
        if survivors:
            values = np.array([inst.s_a for inst in survivors])
            histogram += np.histogram(values, bins=edges)[0]
        kept = [inst for inst in survivors if inst.s_a >= threshold]
        if kept:
            annotations = [Annotation(start=inst.start, end=inst.end, class_name=None,
                                      actionness=inst.s_a) for inst in kept]
            kept_videos.append(VideoRecord(features=rec.features, annotations=annotations,
                                           provenance=rec.provenance))
    return PseudoDataset(videos=kept_videos, threshold=threshold, histogram=histogram)


def merge_datasets(labeled, pseudo: PseudoDataset):
    """Union of the labeled videos and the pseudo-labeled videos; video ids must
    be disjoint and provenance tags are preserved."""
    seen = {r.video_id for r in labeled}
    for rec in pseudo.videos:
        if rec.video_id in seen:
            raise InputError(f"video id collision in merge: '{rec.video_id}'")
        seen.add(rec.video_id)
    return list(labeled) + list(pseudo.videos)


def ema_update(teacher: LocalizerParams, student: LocalizerParams, lam: float) -> None:
    """teacher <- (1 - lambda) * student + lambda * teacher, parameter-wise."""
    if not 0.0 <= lam <= 1.0:
        raise InputError("EMA lambda must lie in [0, 1]")
    if set(teacher.tensors) != set(student.tensors):
        raise ShapeError("teacher/student parameter sets differ")
    for name, t in teacher.tensors.items():
        s = student.tensors[name]
        if t.data.shape != s.data.shape:
            raise ShapeError(f"EMA shape mismatch for '{name}'")
        if lam == 1.0:
            continue
        t.data *= lam
        t.data += (1.0 - lam) * s.data


def train_stage2(stage1_params: LocalizerParams, joint, config: TrainConfig):
    """Mean-Teacher stage: the student starts from the stage-1 parameters and
    trains on the joint dataset (pseudo instances supervise exactly like ground
    truth); the teacher is EMA-updated once per optimizer step and is what gets
    returned. A joint dataset containing no pseudo-labeled videos leaves the
    teacher exactly at the stage-1 parameters (self-training degenerates to the
    supervised result)."""
    joint = list(joint)
    if not joint:
        raise InputError("stage-2 training needs a non-empty joint dataset")
    pair = TeacherStudent(teacher=stage1_params.copy(), student=stage1_params.copy())
    if not any(r.provenance in ("in_domain", "open_domain") for r in joint):
        return pair.teacher, []
    trace = _run_training(pair.student, joint, config, teacher=pair.teacher)
    return pair.teacher, trace


def pseudo_label_quality(pseudo: PseudoDataset, pool_records):
    """Pair each pseudo instance's actionness with its best tIoU against the
    hidden ground truth of its video; returns (pairs array, Spearman rho)."""
    hidden = {r.video_id: r.annotations for r in pool_records}
    pairs = []
    for rec in pseudo.videos:
        gts = hidden.get(rec.video_id, [])
        for ann in rec.annotations:
            best = 0.0
            for gt in gts:
                inter = max(0.0, min(ann.end, gt.end) - max(ann.start, gt.start))
                union = (ann.end - ann.start) + (gt.end - gt.start) - inter
                if union > 0:
                    best = max(best, inter / union)
            pairs.append((ann.actionness, best))
    pairs = np.array(pairs) if pairs else np.zeros((0, 2))
    if pairs.shape[0] < 2:
        return pairs, float("nan")
    rho = stats.spearmanr(pairs[:, 0], pairs[:, 1]).statistic
    return pairs, float(rho)
