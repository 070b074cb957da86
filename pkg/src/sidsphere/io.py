"""On-disk formats: trajectory CSV + JSON sidecar, tables, manifests.

Floats are written with ``repr``, the shortest decimal string that parses
back to the same double, so files round-trip exactly and reruns diff clean.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .simulate import SimConfig, TrajectoryRecord

SCHEMA_VERSION = 1


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format (sha1 of ``blob <len>\\0<data>``)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def header_line(kind: str, config_hash: str) -> str:
    return f"# sidsphere {kind} schema_version={SCHEMA_VERSION} config_hash={config_hash}\n"


def table_csv(kind: str, config_hash: str, columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(header_line(kind, config_hash))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in row])
    return buf.getvalue()


def read_table_csv(text: str) -> tuple[dict, list[str], list[list[str]]]:
    lines = text.splitlines()
    meta = {}
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
        lines = lines[1:]
    reader = csv.reader(lines)
    columns = next(reader)
    return meta, columns, [row for row in reader]


# ---------------------------------------------------------------------------
# trajectories


def record_columns(rec: TrajectoryRecord) -> list[str]:
    N, d = rec.m.shape[1], rec.x.shape[1]
    return (["t"] + [f"m{i}" for i in range(N)] + [f"mean_{lbl}" for lbl in rec.test_labels]
            + [f"X{i}" for i in range(d)])


def record_csv(rec: TrajectoryRecord) -> str:
    rows = (
        [t, *m, *f, *x]
        for t, m, f, x in zip(rec.times, rec.m, rec.test_means, rec.x)
    )
    return table_csv("trajectory", rec.config.config_hash(), record_columns(rec), rows)


def record_sidecar(rec: TrajectoryRecord) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "trajectory",
        "config": rec.config.to_dict(),
        "config_hash": rec.config.config_hash(),
        "seed": rec.seed,
        "failed": rec.failed,
        "message": rec.message,
        "columns": record_columns(rec),
        "test_labels": list(rec.test_labels),
        "n_checkpoints": int(len(rec.times)),
    }


def record_json(rec: TrajectoryRecord) -> dict:
    out = record_sidecar(rec)
    out.update({
        "t": rec.times.tolist(),
        "m": rec.m.tolist(),
        "test_means": rec.test_means.tolist(),
        "X": rec.x.tolist(),
    })
    return out


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def read_record(csv_path) -> TrajectoryRecord:
    """Load a trajectory CSV together with its JSON sidecar."""
    csv_path = Path(csv_path)
    side = json.loads(sidecar_path(csv_path).read_text())
    if side.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{csv_path}: unsupported schema_version {side.get('schema_version')}")
    config = SimConfig.from_dict(side["config"])
    _, columns, rows = read_table_csv(csv_path.read_text())
    data = np.array([[float(v) for v in row] for row in rows], dtype=np.float64).reshape(len(rows), len(columns))
    labels = tuple(side["test_labels"])
    N = sum(1 for c in columns if c[0] == "m" and c[1:].isdigit())
    J = len(labels)
    return TrajectoryRecord(
        config=config,
        times=data[:, 0],
        m=data[:, 1:1 + N],
        test_means=data[:, 1 + N:1 + N + J],
        x=data[:, 1 + N + J:],
        test_labels=labels,
        failed=bool(side["failed"]),
        message=side.get("message", ""),
    )


def find_records(path) -> list[Path]:
    """Trajectory CSVs at ``path`` (a file, or every ``*.csv`` with a sidecar in a directory)."""
    p = Path(path)
    if p.is_dir():
        return sorted(q for q in p.glob("*.csv") if sidecar_path(q).exists())
    return [p]


# ---------------------------------------------------------------------------
# atomic output


class OutputSet:
    """Collects named outputs and commits them atomically.

    Files are staged in a temporary directory next to the destination and
    moved into place only when every file has been written; on failure the
    staging area is removed.
    """

    def __init__(self, dest: Path, directory: bool):
        self.dest = Path(dest)
        self.directory = directory
        self.files: dict[str, bytes] = {}

    def add(self, name: str, content: str | bytes):
        self.files[name] = content.encode() if isinstance(content, str) else content

    def hashes(self) -> dict[str, str]:
        return {name: git_blob_hash(data) for name, data in sorted(self.files.items())}

    def commit(self):
        parent = self.dest.parent if str(self.dest.parent) else Path(".")
        parent.mkdir(parents=True, exist_ok=True)
        stage = Path(tempfile.mkdtemp(prefix=".sidsphere-", dir=parent))
        try:
            for name, data in self.files.items():
                (stage / name).write_bytes(data)
            if self.directory:
                if self.dest.exists():
                    if not self.dest.is_dir() or any(self.dest.iterdir()):
                        raise FileExistsError(f"output directory {self.dest} exists and is not empty")
                    self.dest.rmdir()
                os.replace(stage, self.dest)
            else:
                for name in self.files:
                    target = self.dest if name == self.dest.name else self.dest.parent / name
                    os.replace(stage / name, target)
                shutil.rmtree(stage)
        except BaseException:
            shutil.rmtree(stage, ignore_errors=True)
            raise
