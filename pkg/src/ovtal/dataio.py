"""On-disk formats: TALF binary feature files, JSON annotation / prediction /
report / vocabulary records, sweep CSVs, and model archives.

TALF layout (little-endian): magic b"TALF", version u32 = 1, S u32, D u32,
S*D float32 payload (row-major), CRC32 of the payload bytes. JSON records are
schema-validated with path-precise errors; unknown fields are rejected. All
writes go through a temp file + atomic rename.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .classifier import Vocabulary
from .evalkit import EvalReport, LabeledSegment
from .exceptions import (
    BadChecksumError,
    BadMagicError,
    BadVersionError,
    SchemaError,
    TruncatedFileError,
)
from .localizer import LocalizerParams, PyramidGeometry, SnippetFeatures
from .tensor import Tensor

TALF_MAGIC = b"TALF"
TALF_VERSION = 1


# --------------------------------------------------------------------- helpers

def atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> bytes:
    """Canonical JSON encoding: sorted keys, fixed separators, trailing newline."""
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode("utf-8")


def atomic_write_json(path: str, obj) -> None:
    atomic_write_bytes(path, dump_json(obj))


def load_json(path: str):
    with open(path, "rb") as fh:
        try:
            return json.loads(fh.read().decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc


def _expect(obj, path, typ, what):
    if not isinstance(obj, typ):
        raise SchemaError(f"{path}: expected {what}")
    return obj


def _expect_number(obj, path):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise SchemaError(f"{path}: expected a number")
    return float(obj)


def _reject_unknown(record: dict, path: str, known) -> None:
    for key in record:
        if key not in known:
            raise SchemaError(f"{path}.{key}: unknown field")


# --------------------------------------------------------------------- TALF

def write_features(path: str, feats: SnippetFeatures) -> None:
    data = np.ascontiguousarray(feats.features, dtype="<f4")
    s, d = data.shape
    payload = data.tobytes()
    header = TALF_MAGIC + struct.pack("<III", TALF_VERSION, s, d)
    crc = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    atomic_write_bytes(path, header + payload + crc)


def read_features(path: str, video_id: str = None) -> SnippetFeatures:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != TALF_MAGIC:
        raise BadMagicError(f"{path}: not a TALF file")
    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: header truncated")
    version, s, d = struct.unpack("<III", blob[4:16])
    if version != TALF_VERSION:
        raise BadVersionError(f"{path}: unsupported TALF version {version}")
    expected = 16 + 4 * s * d + 4
    if len(blob) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(blob)}")
    payload = blob[16:16 + 4 * s * d]
    (crc,) = struct.unpack("<I", blob[16 + 4 * s * d:expected])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise BadChecksumError(f"{path}: payload CRC mismatch")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(s, d)
    if video_id is None:
        video_id = os.path.splitext(os.path.basename(path))[0]
    return SnippetFeatures(video_id=video_id, features=matrix.copy())


# --------------------------------------------------------------------- records

@dataclass
class Annotation:
    """One labeled or pseudo-labeled interval of a video."""

    start: float
    end: float
    class_name: str | None = None
    actionness: float | None = None


@dataclass
class VideoRecord:
    """A video's features plus its (possibly hidden or pseudo) annotations."""

    features: SnippetFeatures
    annotations: list
    provenance: str = "labeled"

    @property
    def video_id(self) -> str:
        return self.features.video_id


def annotations_to_dict(video_id: str, duration: int, annotations) -> dict:
    instances = []
    for a in annotations:
        inst = {"start": a.start, "end": a.end, "class_name": a.class_name}
        if a.actionness is not None:
            inst["actionness"] = a.actionness
        instances.append(inst)
    return {"video_id": video_id, "duration_snippets": duration, "instances": instances}


def annotations_from_dict(record: dict, path: str = "annotation",
                          vocab_names=None) -> tuple:
    """Validate and decode one annotation record; returns (video_id, duration, [Annotation])."""
    _expect(record, path, dict, "an object")
    _reject_unknown(record, path, {"video_id", "duration_snippets", "instances"})
    for key in ("video_id", "duration_snippets", "instances"):
        if key not in record:
            raise SchemaError(f"{path}.{key}: missing field")
    video_id = _expect(record["video_id"], f"{path}.video_id", str, "a string")
    duration = _expect_number(record["duration_snippets"], f"{path}.duration_snippets")
    if duration <= 0 or duration != int(duration):
        raise SchemaError(f"{path}.duration_snippets: must be a positive integer")
    items = _expect(record["instances"], f"{path}.instances", list, "a list")
    out = []
    for i, inst in enumerate(items):
        ipath = f"{path}.instances[{i}]"
        _expect(inst, ipath, dict, "an object")
        _reject_unknown(inst, ipath, {"start", "end", "class_name", "actionness"})
        for key in ("start", "end", "class_name"):
            if key not in inst:
                raise SchemaError(f"{ipath}.{key}: missing field")
        start = _expect_number(inst["start"], f"{ipath}.start")
        end = _expect_number(inst["end"], f"{ipath}.end")
        if not 0.0 <= start < end <= duration:
            raise SchemaError(f"{ipath}: interval [{start}, {end}] invalid for duration {duration}")
        name = inst["class_name"]
        if name is not None:
            _expect(name, f"{ipath}.class_name", str, "a string or null")
            if vocab_names is not None and name not in vocab_names:
                raise SchemaError(f"{ipath}.class_name: '{name}' not in the vocabulary")
        actionness = None
        if "actionness" in inst:
            actionness = _expect_number(inst["actionness"], f"{ipath}.actionness")
            if not 0.0 <= actionness <= 1.0:
                raise SchemaError(f"{ipath}.actionness: must lie in [0, 1]")
        out.append(Annotation(start=start, end=end, class_name=name, actionness=actionness))
    return video_id, int(duration), out


def write_annotations(path: str, video_id: str, duration: int, annotations) -> None:
    atomic_write_json(path, annotations_to_dict(video_id, duration, annotations))


def read_annotations(path: str, vocab_names=None):
    return annotations_from_dict(load_json(path), path=path, vocab_names=vocab_names)


# --------------------------------------------------------------------- vocabulary

def vocab_to_dict(vocab: Vocabulary) -> dict:
    classes = []
    for name, proto, novel in zip(vocab.names, vocab.prototypes, vocab.novel_mask):
        classes.append({
            "name": name,
            "split": "novel" if novel else "base",
            "prototype": [float(x) for x in proto],
        })
    return {"dim": int(vocab.dim), "classes": classes}


def vocab_from_dict(record: dict, path: str = "vocabulary") -> Vocabulary:
    _expect(record, path, dict, "an object")
    _reject_unknown(record, path, {"dim", "classes"})
    dim = int(_expect_number(record.get("dim"), f"{path}.dim"))
    classes = _expect(record.get("classes"), f"{path}.classes", list, "a list")
    names, protos, novel = [], [], []
    for i, cls in enumerate(classes):
        cpath = f"{path}.classes[{i}]"
        _expect(cls, cpath, dict, "an object")
        _reject_unknown(cls, cpath, {"name", "split", "prototype"})
        names.append(_expect(cls.get("name"), f"{cpath}.name", str, "a string"))
        split = cls.get("split")
        if split not in ("base", "novel"):
            raise SchemaError(f"{cpath}.split: must be 'base' or 'novel'")
        novel.append(split == "novel")
        proto = _expect(cls.get("prototype"), f"{cpath}.prototype", list, "a list of numbers")
        if len(proto) != dim:
            raise SchemaError(f"{cpath}.prototype: expected {dim} values")
        protos.append([_expect_number(x, f"{cpath}.prototype[{j}]") for j, x in enumerate(proto)])
    return Vocabulary(names=names, prototypes=np.array(protos), novel_mask=np.array(novel, dtype=bool))


def write_vocab(path: str, vocab: Vocabulary) -> None:
    atomic_write_json(path, vocab_to_dict(vocab))


def read_vocab(path: str) -> Vocabulary:
    return vocab_from_dict(load_json(path), path=path)


# --------------------------------------------------------------------- predictions

def predictions_to_dict(predictions) -> dict:
    rows = []
    for p in predictions:
        rows.append({"video_id": p.video_id, "start": p.start, "end": p.end,
                     "class_name": p.class_name, "score": p.score})
    return {"predictions": rows}


def predictions_from_dict(record: dict, path: str = "predictions"):
    _expect(record, path, dict, "an object")
    _reject_unknown(record, path, {"predictions"})
    rows = _expect(record.get("predictions"), f"{path}.predictions", list, "a list")
    out = []
    for i, row in enumerate(rows):
        rpath = f"{path}.predictions[{i}]"
        _expect(row, rpath, dict, "an object")
        _reject_unknown(row, rpath, {"video_id", "start", "end", "class_name", "score"})
        for key in ("video_id", "start", "end", "class_name", "score"):
            if key not in row:
                raise SchemaError(f"{rpath}.{key}: missing field")
        out.append(LabeledSegment(
            video_id=_expect(row["video_id"], f"{rpath}.video_id", str, "a string"),
            start=_expect_number(row["start"], f"{rpath}.start"),
            end=_expect_number(row["end"], f"{rpath}.end"),
            class_name=_expect(row["class_name"], f"{rpath}.class_name", str, "a string"),
            score=_expect_number(row["score"], f"{rpath}.score"),
        ))
    return out


def write_predictions(path: str, predictions) -> None:
    atomic_write_json(path, predictions_to_dict(predictions))


def read_predictions(path: str):
    return predictions_from_dict(load_json(path), path=path)


# --------------------------------------------------------------------- reports

def _agg_to_dict(per_t: dict, avg, grid) -> dict:
    out = {f"{t:g}": per_t[t] for t in grid}
    out["avg"] = avg
    return out


def report_to_dict(report: EvalReport) -> dict:
    rows = [{"class_name": name, "tiou": t, "ap": report.per_class_ap[(name, t)]}
            for name in report.class_names for t in report.tiou_grid]
    return {
        "protocol": report.protocol,
        "tiou_grid": list(report.tiou_grid),
        "per_class_ap": rows,
        "base_classes": list(report.base_names),
        "novel_classes": list(report.novel_names),
        "map_all": _agg_to_dict(report.map_all, report.avg_map_all, report.tiou_grid),
        "map_base": _agg_to_dict(report.map_base, report.avg_map_base, report.tiou_grid),
        "map_novel": _agg_to_dict(report.map_novel, report.avg_map_novel, report.tiou_grid),
    }


def report_from_dict(record: dict, path: str = "report") -> EvalReport:
    _expect(record, path, dict, "an object")
    known = {"protocol", "tiou_grid", "per_class_ap", "base_classes", "novel_classes",
             "map_all", "map_base", "map_novel"}
    _reject_unknown(record, path, known)
    for key in known:
        if key not in record:
            raise SchemaError(f"{path}.{key}: missing field")
    grid = tuple(_expect_number(t, f"{path}.tiou_grid[{i}]")
                 for i, t in enumerate(_expect(record["tiou_grid"], f"{path}.tiou_grid", list, "a list")))
    report = EvalReport(protocol=record["protocol"], tiou_grid=grid)
    report.base_names = list(record["base_classes"])
    report.novel_names = list(record["novel_classes"])
    seen = []
    for i, row in enumerate(_expect(record["per_class_ap"], f"{path}.per_class_ap", list, "a list")):
        rpath = f"{path}.per_class_ap[{i}]"
        _reject_unknown(_expect(row, rpath, dict, "an object"), rpath, {"class_name", "tiou", "ap"})
        name = row["class_name"]
        t = _expect_number(row["tiou"], f"{rpath}.tiou")
        report.per_class_ap[(name, t)] = _expect_number(row["ap"], f"{rpath}.ap")
        if name not in seen:
            seen.append(name)
    report.class_names = seen

    def agg_from(key):
        agg = _expect(record[key], f"{path}.{key}", dict, "an object")
        per_t = {}
        for t in grid:
            value = agg.get(f"{t:g}")
            per_t[t] = None if value is None else _expect_number(value, f"{path}.{key}.{t:g}")
        avg = agg.get("avg")
        return per_t, (None if avg is None else _expect_number(avg, f"{path}.{key}.avg"))

    report.map_all, report.avg_map_all = agg_from("map_all")
    report.map_base, report.avg_map_base = agg_from("map_base")
    report.map_novel, report.avg_map_novel = agg_from("map_novel")
    return report


def write_report(path: str, report: EvalReport) -> None:
    atomic_write_json(path, report_to_dict(report))


def read_report(path: str) -> EvalReport:
    return report_from_dict(load_json(path), path=path)


# --------------------------------------------------------------------- sweep CSV

SWEEP_CSV_HEADER = "axis,value,map_all,map_base,map_novel"


def write_sweep_csv(path: str, rows) -> None:
    """rows: iterable of (axis, value, map_all, map_base, map_novel)."""
    def cell(x):
        return "" if x is None else (f"{x!r}" if isinstance(x, float) else str(x))

    lines = [SWEEP_CSV_HEADER]
    for axis, value, m_a, m_b, m_n in rows:
        lines.append(",".join([str(axis), str(value), cell(m_a), cell(m_b), cell(m_n)]))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


# --------------------------------------------------------------------- models

def save_model(path: str, params: LocalizerParams) -> None:
    meta = {
        "levels": params.geometry.levels,
        "inner_boundaries": [b for b in params.geometry.range_boundaries if math.isfinite(b) and b > 0.0],
        "feat_dim": params.feat_dim,
        "channels": params.channels,
    }
    arrays = {name: t.data for name, t in params.tensors.items()}
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(dump_json(meta), dtype=np.uint8), **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path: str) -> LocalizerParams:
    with np.load(path) as archive:
        try:
            meta = json.loads(bytes(archive["__meta__"]).decode("utf-8"))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"{path}: missing or invalid model metadata") from exc
        geometry = PyramidGeometry(
            levels=int(meta["levels"]),
            range_boundaries=tuple([0.0] + [float(b) for b in meta["inner_boundaries"]] + [math.inf]),
        )
        tensors = {name: Tensor(archive[name], requires_grad=True)
                   for name in archive.files if name != "__meta__"}
    return LocalizerParams(geometry, int(meta["feat_dim"]), int(meta["channels"]), tensors)


# --------------------------------------------------------------------- manifests

def write_manifest(path: str, command: str, args: dict, seed, extra: dict = None) -> None:
    import time

    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "seed": seed,
        "package_version": __version__,
        "created_unix": time.time(),
    }
    if extra:
        manifest.update(extra)
    atomic_write_json(path, manifest)
