"""File formats: demo JSONL videos, CSV reports, and atomic writes.

A demo file holds one video as line-delimited JSON: a header line with the
schema version, identity, descriptor dimension, and optional ground-truth
bindings, followed by one frame per line. Write -> read -> write round-trips
byte-identically.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from typing import Optional

import numpy as np

from .geometry import ConstraintType, PixelPoint
from .graphs import FeaturePoint

DEMO_SCHEMA = "geomimic-demo"
DEMO_SCHEMA_VERSION = 1


def atomic_write_text(path, text: str):
    """Write a file via temp + rename so readers never see partial content."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    lines = []
    out = _CsvBuffer(lines)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, "".join(lines))


class _CsvBuffer:
    def __init__(self, lines):
        self.lines = lines

    def write(self, text):
        self.lines.append(text)


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True, allow_nan=False)


def write_demo_file(path, video):
    """Serialize one DemoVideo to JSONL."""
    header = {
        "schema": DEMO_SCHEMA,
        "schema_version": DEMO_SCHEMA_VERSION,
        "video_id": video.video_id,
        "category_id": video.category_id,
        "descriptor_dim": int(video.descriptor_dim),
        "ground_truth": _ground_truth_to_doc(video.ground_truth),
    }
    lines = [_dump(header)]
    for frame_idx, features in zip(video.frame_indices, video.frames):
        record = {
            "video_id": video.video_id,
            "category_id": video.category_id,
            "frame_idx": int(frame_idx),
            "features": [
                {
                    "id": int(f.id),
                    "u": float(f.coords.u),
                    "v": float(f.coords.v),
                    "descriptor": [float(x) for x in f.descriptor],
                    **({"segment": f.segment} if f.segment is not None else {}),
                }
                for f in features
            ],
        }
        lines.append(_dump(record))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_demo_file(path):
    """Parse one JSONL demo file back into a DemoVideo."""
    from .training import DemoVideo

    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = [line for line in fh.read().splitlines() if line.strip()]
    if not raw_lines:
        raise ValueError(f"empty demo file: {path}")
    header = json.loads(raw_lines[0])
    if header.get("schema") != DEMO_SCHEMA:
        raise ValueError(f"not a {DEMO_SCHEMA} file: {path}")
    if header.get("schema_version") != DEMO_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported demo schema version {header.get('schema_version')!r}"
        )
    dim = int(header["descriptor_dim"])

    frames, frame_indices = [], []
    for line in raw_lines[1:]:
        record = json.loads(line)
        features = []
        for f in record["features"]:
            descriptor = np.asarray(f["descriptor"], dtype=float)
            if descriptor.shape != (dim,):
                raise ValueError(
                    f"descriptor of feature {f['id']} has dim {descriptor.size}, "
                    f"header says {dim}"
                )
            features.append(
                FeaturePoint(
                    id=int(f["id"]),
                    descriptor=descriptor,
                    coords=PixelPoint(float(f["u"]), float(f["v"])),
                    segment=f.get("segment"),
                )
            )
        frames.append(features)
        frame_indices.append(int(record["frame_idx"]))

    return DemoVideo(
        video_id=header["video_id"],
        category_id=header["category_id"],
        frames=frames,
        frame_indices=frame_indices,
        ground_truth=_ground_truth_from_doc(header.get("ground_truth")),
    )


def _ground_truth_to_doc(ground_truth) -> Optional[dict]:
    if ground_truth is None:
        return None
    return {ctype.value: [int(i) for i in key] for ctype, key in sorted(
        ground_truth.items(), key=lambda kv: kv[0].value
    )}


def _ground_truth_from_doc(doc):
    if doc is None:
        return None
    return {
        ConstraintType.from_string(name): tuple(int(i) for i in key)
        for name, key in doc.items()
    }


def read_demo_dir(directory):
    """All demo files (``*.jsonl``) under a directory, sorted by filename."""
    paths = sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.endswith(".jsonl")
    )
    return [read_demo_file(p) for p in paths]
