"""On-disk formats: binary feature/label files, prediction ribbons, key=value reports."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

FEAT_MAGIC = b"CPKDFEAT"
LABEL_MAGIC = b"CPKDLABL"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sIII")


def write_features(path, features):
    features = np.asarray(features)
    T, D = features.shape
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    Path(path).write_bytes(_HEAD.pack(FEAT_MAGIC, FORMAT_VERSION, T, D) + payload)


def read_features(path):
    raw = Path(path).read_bytes()
    T, D = _check_head(raw, FEAT_MAGIC, path)
    data = np.frombuffer(raw, dtype="<f4", offset=_HEAD.size)
    if data.size != T * D:
        raise ValueError(f"{path}: expected {T * D} values, found {data.size}")
    return data.reshape(T, D).astype(np.float64)


def write_labels(path, labels, num_classes):
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels.argmax(axis=1)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes or num_classes > 256:
        raise ValueError("labels must be class indices in [0, num_classes) with num_classes <= 256")
    Path(path).write_bytes(_HEAD.pack(LABEL_MAGIC, FORMAT_VERSION, len(labels), num_classes) + labels.astype(np.uint8).tobytes())


def read_labels(path):
    """Returns (class indices, num_classes)."""
    raw = Path(path).read_bytes()
    T, C = _check_head(raw, LABEL_MAGIC, path)
    data = np.frombuffer(raw, dtype=np.uint8, offset=_HEAD.size)
    if data.size != T:
        raise ValueError(f"{path}: expected {T} labels, found {data.size}")
    return data.astype(np.int64), C


def _check_head(raw, magic, path):
    if len(raw) < _HEAD.size:
        raise ValueError(f"{path}: truncated header")
    got, version, a, b = _HEAD.unpack_from(raw)
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    return a, b


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def write_ribbon(path, true_labels, probs):
    """CSV ``frame,true,pred,prob_0..prob_{C-1}``; ``true`` is -1 when unknown."""
    probs = np.asarray(probs)
    C = probs.shape[1]
    true_labels = np.full(len(probs), -1) if true_labels is None else np.asarray(true_labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "true", "pred"] + [f"prob_{c}" for c in range(C)])
        for i, row in enumerate(probs):
            w.writerow([i, int(true_labels[i]), int(row.argmax())] + [repr(float(v)) for v in row])


def read_ribbon(path):
    """Returns (true labels, predicted labels, probabilities)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["frame", "true", "pred"]:
        raise ValueError(f"{path}: not a prediction ribbon")
    body = rows[1:]
    true = np.array([int(r[1]) for r in body], dtype=np.int64)
    pred = np.array([int(r[2]) for r in body], dtype=np.int64)
    probs = np.array([[float(v) for v in r[3:]] for r in body])
    return true, pred, probs


def format_report(values):
    lines = []
    for k, v in values.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def write_report(path, values):
    Path(path).write_text(format_report(values))


def parse_report(text):
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"report line without '=': {line!r}")
        out[key.strip()] = _coerce(value.strip())
    return out


def read_report(path):
    return parse_report(Path(path).read_text())


def _coerce(v):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v
