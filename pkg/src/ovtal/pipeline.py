"""End-to-end inference and dataset-directory plumbing shared by the CLI.

A dataset directory holds vocab.json, splits.json, and one subdirectory per
split with features/*.talf plus annotations/*.json (labeled splits) or
hidden_annotations/*.json (unlabeled pools, labels withheld from training but
kept for analyses). A joint dataset produced by pseudo-labeling is a flat
directory of features + annotations with provenance recorded in splits.json.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .classifier import (
    ClassifierConfig,
    NmsConfig,
    Vocabulary,
    classify,
    fuse_scores,
    pool_instance_features,
    soft_nms,
)
from .dataio import (
    Annotation,
    VideoRecord,
    atomic_write_json,
    load_json,
    read_annotations,
    read_features,
    read_vocab,
    write_annotations,
    write_features,
    write_vocab,
)
from .evalkit import EvalReport, LabeledSegment, evaluate
from .exceptions import DataFileError, InputError
from .localizer import ActionInstance, LocalizerParams, decode_instances, localizer_forward
from .selftrain import PseudoDataset, pseudo_label_quality
from .synthbench import SynthBenchmark

SPLIT_NAMES = ("labeled_train", "unlabeled_id", "unlabeled_od", "val")
_POOL_SPLITS = {"unlabeled_id", "unlabeled_od"}


# ----------------------------------------------------------------- inference

def detect_instances(params: LocalizerParams, record: VideoRecord, vocab: Vocabulary,
                     clf_cfg: ClassifierConfig = None, nms_cfg: NmsConfig = None):
    """Localize, classify against the given vocabulary, fuse scores, SoftNMS.

    Returns scored LabeledSegments for the video. With top_k_categories > 1
    every instance expands into one candidate per retained category before
    suppression.
    """
    clf_cfg = clf_cfg or ClassifierConfig()
    nms_cfg = nms_cfg or NmsConfig()
    feats = record.features
    outputs = localizer_forward(params, feats)
    decoded = decode_instances(outputs, params.geometry, feats.duration_snippets)
    if not decoded:
        return []
    pooled = pool_instance_features(feats.features, decoded, clf_cfg.roi_bins)
    top_ids, top_scores, _ = classify(pooled, vocab, clf_cfg)
    candidates = []
    for inst, ids, scores in zip(decoded, top_ids, top_scores):
        for class_id, s_c in zip(ids, scores):
            fused = fuse_scores(inst.s_a, float(s_c), clf_cfg.fusion_mode)
            candidates.append(ActionInstance(start=inst.start, end=inst.end,
                                             class_id=int(class_id), s_a=inst.s_a,
                                             s_c=float(s_c), s=fused))
    survivors = soft_nms(candidates, nms_cfg)
    return [LabeledSegment(video_id=feats.video_id, start=inst.start, end=inst.end,
                           class_name=vocab.names[inst.class_id], score=inst.s)
            for inst in survivors]


def _target_vocab(vocab: Vocabulary, protocol: str) -> Vocabulary:
    if protocol == "generalized":
        return vocab
    if protocol == "constrained_base":
        return vocab.restrict(vocab.base_names)
    if protocol == "constrained_novel":
        return vocab.restrict(vocab.novel_names)
    raise InputError(f"unknown protocol '{protocol}'")


def evaluate_model(params: LocalizerParams, records, vocab: Vocabulary, protocol: str,
                   tiou_grid, clf_cfg: ClassifierConfig = None, nms_cfg: NmsConfig = None,
                   threads: int = 1) -> EvalReport:
    """Run inference on every record with the protocol's candidate vocabulary and
    score the predictions against the records' annotations."""
    target = _target_vocab(vocab, protocol)

    def per_video(record):
        return detect_instances(params, record, target, clf_cfg, nms_cfg)

    records = list(records)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            prediction_lists = list(pool.map(per_video, records))
    else:
        prediction_lists = [per_video(r) for r in records]
    predictions = [p for plist in prediction_lists for p in plist]
    ground_truth = [LabeledSegment(video_id=r.video_id, start=a.start, end=a.end,
                                   class_name=a.class_name)
                    for r in records for a in r.annotations]
    return evaluate(predictions, ground_truth, target, protocol, tiou_grid)


# ----------------------------------------------------------------- dataset dirs

def write_benchmark(out_dir: str, bench: SynthBenchmark) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_vocab(os.path.join(out_dir, "vocab.json"), bench.vocab)
    splits = {}
    for split in SPLIT_NAMES:
        records = bench.split(split)
        splits[split] = [r.video_id for r in records]
        ann_dir = "hidden_annotations" if split in _POOL_SPLITS else "annotations"
        for rec in records:
            write_features(os.path.join(out_dir, split, "features", f"{rec.video_id}.talf"),
                           rec.features)
            write_annotations(os.path.join(out_dir, split, ann_dir, f"{rec.video_id}.json"),
                              rec.video_id, rec.features.duration_snippets, rec.annotations)
    atomic_write_json(os.path.join(out_dir, "splits.json"), splits)


def load_benchmark_vocab(data_dir: str) -> Vocabulary:
    return read_vocab(os.path.join(data_dir, "vocab.json"))


def _split_ids(data_dir: str, split: str):
    splits = load_json(os.path.join(data_dir, "splits.json"))
    if split not in splits:
        raise DataFileError(f"{data_dir}: split '{split}' not present")
    return splits[split]


def load_split(data_dir: str, split: str, vocab_names=None, limit: int = None):
    """Load one split as VideoRecords; pool splits read hidden annotations and
    skip vocabulary validation (they may reference out-of-vocabulary actions)."""
    ids = _split_ids(data_dir, split)
    if limit is not None:
        ids = ids[:limit]
    ann_dir = "hidden_annotations" if split in _POOL_SPLITS else "annotations"
    provenance = {"labeled_train": "labeled", "unlabeled_id": "in_domain",
                  "unlabeled_od": "open_domain", "val": "val"}[split]
    records = []
    for video_id in ids:
        feats = read_features(os.path.join(data_dir, split, "features", f"{video_id}.talf"),
                              video_id=video_id)
        ann_path = os.path.join(data_dir, split, ann_dir, f"{video_id}.json")
        names = None if split in _POOL_SPLITS else vocab_names
        _, duration, annotations = read_annotations(ann_path, vocab_names=names)
        if duration != feats.duration_snippets:
            raise DataFileError(f"{ann_path}: duration {duration} != features {feats.duration_snippets}")
        records.append(VideoRecord(features=feats, annotations=annotations, provenance=provenance))
    return records


def write_joint_dataset(out_dir: str, labeled, pseudo: PseudoDataset,
                        pool_records=None) -> None:
    """Materialize labeled + pseudo-labeled videos as one self-contained dataset,
    with the actionness histogram and (when hidden ground truth is available)
    the actionness-vs-tIoU quality pairs alongside."""
    os.makedirs(out_dir, exist_ok=True)
    provenance = {}
    for rec in list(labeled) + list(pseudo.videos):
        if rec.video_id in provenance:
            raise InputError(f"video id collision in joint dataset: '{rec.video_id}'")
        provenance[rec.video_id] = rec.provenance
        write_features(os.path.join(out_dir, "features", f"{rec.video_id}.talf"), rec.features)
        write_annotations(os.path.join(out_dir, "annotations", f"{rec.video_id}.json"),
                          rec.video_id, rec.features.duration_snippets, rec.annotations)
    atomic_write_json(os.path.join(out_dir, "splits.json"), {
        "labeled": [r.video_id for r in labeled],
        "pseudo": [r.video_id for r in pseudo.videos],
        "provenance": provenance,
    })
    atomic_write_json(os.path.join(out_dir, "histogram.json"), {
        "bin_edges": [round(0.1 * i, 10) for i in range(11)],
        "counts": [int(c) for c in pseudo.histogram],
        "threshold": pseudo.threshold,
    })
    if pool_records is not None:
        pairs, rho = pseudo_label_quality(pseudo, pool_records)
        atomic_write_json(os.path.join(out_dir, "quality.json"), {
            "pairs": [[float(a), float(b)] for a, b in pairs],
            "spearman": None if np.isnan(rho) else rho,
        })


def load_joint_dataset(joint_dir: str):
    """Load a joint dataset; returns (labeled+pseudo records, pseudo video count)."""
    splits = load_json(os.path.join(joint_dir, "splits.json"))
    for key in ("labeled", "pseudo", "provenance"):
        if key not in splits:
            raise DataFileError(f"{joint_dir}/splits.json: missing '{key}'")
    records = []
    for video_id in list(splits["labeled"]) + list(splits["pseudo"]):
        feats = read_features(os.path.join(joint_dir, "features", f"{video_id}.talf"),
                              video_id=video_id)
        _, duration, annotations = read_annotations(
            os.path.join(joint_dir, "annotations", f"{video_id}.json"))
        if duration != feats.duration_snippets:
            raise DataFileError(f"{joint_dir}: duration mismatch for '{video_id}'")
        records.append(VideoRecord(features=feats, annotations=annotations,
                                   provenance=splits["provenance"][video_id]))
    return records, len(splits["pseudo"])


def records_to_ground_truth(records):
    return [LabeledSegment(video_id=r.video_id, start=a.start, end=a.end, class_name=a.class_name)
            for r in records for a in r.annotations]
