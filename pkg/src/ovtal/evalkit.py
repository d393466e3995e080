"""Metrics and evaluation protocols: tIoU, per-class AP via greedy matching,
mAP grids, and generalized vs. constrained zero-shot reporting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import Vocabulary
from .exceptions import InputError

PROTOCOLS = ("generalized", "constrained_base", "constrained_novel")


@dataclass(frozen=True)
class LabeledSegment:
    """One prediction (score set) or ground-truth segment (score None)."""

    video_id: str
    start: float
    end: float
    class_name: str | None = None
    score: float | None = None


def tiou(a, b) -> float:
    """Temporal intersection over union of two (start, end) intervals."""
    a_s, a_e = float(a[0]), float(a[1])
    b_s, b_e = float(b[0]), float(b[1])
    if a_s >= a_e or b_s >= b_e:
        raise InputError("tiou requires non-degenerate intervals")
    inter = max(0.0, min(a_e, b_e) - max(a_s, b_s))
    return inter / ((a_e - a_s) + (b_e - b_s) - inter)


def average_precision(predictions, ground_truths, tiou_threshold: float) -> float:
    """AP of one class: greedy score-descending matching (each GT matchable once,
    a match needs tIoU >= threshold), then the exact area under the
    monotone-envelope precision-recall curve. Zero if either side is empty.

    Score ties break on earlier start, then lexicographic video id.
    """
    preds = sorted(predictions, key=lambda p: (-p.score, p.start, p.video_id))
    gts = sorted(ground_truths, key=lambda g: (g.video_id, g.start, g.end))
    if not preds or not gts:
        return 0.0
    by_video = {}
    for i, g in enumerate(gts):
        by_video.setdefault(g.video_id, []).append(i)
    matched = np.zeros(len(gts), dtype=bool)
    tp = np.zeros(len(preds))
    for k, p in enumerate(preds):
        best_iou, best_i = 0.0, -1
        for i in by_video.get(p.video_id, ()):
            if matched[i]:
                continue
            ov = tiou((p.start, p.end), (gts[i].start, gts[i].end))
            if ov >= tiou_threshold and ov > best_iou:
                best_iou, best_i = ov, i
        if best_i >= 0:
            matched[best_i] = True
            tp[k] = 1.0
    cum_tp = np.cumsum(tp)
    recall = cum_tp / len(gts)
    precision = cum_tp / np.arange(1, len(preds) + 1)
    # all-point interpolation: integrate recall steps against the running
    # maximum of future precision
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([[0.0], precision])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    steps = np.flatnonzero(np.diff(mrec) > 0)
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


@dataclass
class EvalReport:
    """Per-class AP at each tIoU plus all/base/novel aggregates."""

    protocol: str
    tiou_grid: tuple
    per_class_ap: dict = field(default_factory=dict)   # (class_name, tiou) -> ap
    class_names: list = field(default_factory=list)    # evaluated classes (>= 1 GT)
    base_names: list = field(default_factory=list)
    novel_names: list = field(default_factory=list)
    map_all: dict = field(default_factory=dict)        # tiou -> mAP over all classes
    map_base: dict = field(default_factory=dict)
    map_novel: dict = field(default_factory=dict)
    avg_map_all: float | None = None                   # averaged over the grid
    avg_map_base: float | None = None
    avg_map_novel: float | None = None

    def ap(self, class_name: str, threshold: float) -> float:
        return self.per_class_ap[(class_name, threshold)]


def _subset_mean(report: EvalReport, names, threshold):
    values = [report.per_class_ap[(n, threshold)] for n in names]
    return float(np.mean(values)) if values else None


def evaluate(predictions, ground_truth, vocab: Vocabulary, protocol: str,
             tiou_grid) -> EvalReport:
    """Score predictions against ground truth under one evaluation protocol.

    The protocol fixes the target category set (generalized: base + novel;
    constrained: one side only); predictions must already be classified against
    that set, and ground truth is restricted to it. Classes without any ground
    truth are excluded from every mAP denominator.
    """
    if protocol not in PROTOCOLS:
        raise InputError(f"protocol must be one of {PROTOCOLS}")
    grid = tuple(float(t) for t in tiou_grid)
    if not grid or any(not 0.0 < t <= 1.0 for t in grid):
        raise InputError("tIoU grid values must lie in (0, 1]")
    if protocol == "generalized":
        target = list(vocab.names)
    elif protocol == "constrained_base":
        target = vocab.base_names
    else:
        target = vocab.novel_names
    target_set = set(target)
    for p in predictions:
        if p.class_name not in target_set:
            raise InputError(f"prediction class '{p.class_name}' outside the target set")
        if p.score is None:
            raise InputError("predictions must carry scores")
    gts = [g for g in ground_truth if g.class_name in target_set]

    novel_set = set(vocab.novel_names)
    preds_by_class, gts_by_class = {}, {}
    for p in predictions:
        preds_by_class.setdefault(p.class_name, []).append(p)
    for g in gts:
        gts_by_class.setdefault(g.class_name, []).append(g)

    report = EvalReport(protocol=protocol, tiou_grid=grid)
    for name in sorted(gts_by_class):
        report.class_names.append(name)
        (report.novel_names if name in novel_set else report.base_names).append(name)
        for t in grid:
            report.per_class_ap[(name, t)] = average_precision(
                preds_by_class.get(name, []), gts_by_class[name], t)

    for t in grid:
        report.map_all[t] = _subset_mean(report, report.class_names, t)
        report.map_base[t] = _subset_mean(report, report.base_names, t)
        report.map_novel[t] = _subset_mean(report, report.novel_names, t)

    def grid_avg(per_t):
        vals = [per_t[t] for t in grid if per_t[t] is not None]
        return float(np.mean(vals)) if vals else None

    report.avg_map_all = grid_avg(report.map_all)
    report.avg_map_base = grid_avg(report.map_base)
    report.avg_map_novel = grid_avg(report.map_novel)
    return report


def verify_report_consistency(report: EvalReport, atol: float = 1e-9) -> None:
    """Check that stored aggregates equal the mean of their per-class entries."""
    for t in report.tiou_grid:
        for names, stored in ((report.class_names, report.map_all[t]),
                              (report.base_names, report.map_base[t]),
                              (report.novel_names, report.map_novel[t])):
            expect = _subset_mean(report, names, t)
            if stored is None or expect is None:
                if stored != expect:
                    raise InputError("report aggregate presence mismatch")
            elif abs(stored - expect) > atol:
                raise InputError(f"report aggregate at tIoU {t} off by {abs(stored - expect)}")


def parse_tiou_grid(text: str):
    """Parse '0.3:0.1:0.7' (start:step:stop, inclusive) or '0.5,0.75' forms."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InputError("grid syntax is start:step:stop")
        start, step, stop = (float(x) for x in parts)
        if step <= 0 or stop < start:
            raise InputError("grid needs step > 0 and stop >= start")
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(x) for x in text.split(","))
