"""CSV emission for analysis results."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def sha256_of(obj) -> str:
    """Hash of a file path or of an array's float64 bytes."""
    if isinstance(obj, (str, Path)):
        return hashlib.sha256(Path(obj).read_bytes()).hexdigest()
    return hashlib.sha256(np.ascontiguousarray(obj, dtype=np.float64).tobytes()).hexdigest()


def write_analysis_csv(path: str | Path, columns: Mapping[str, Sequence[float]], meta: Mapping) -> Path:
    """Write equal-length columns under a single ``# meta: {json}`` comment line."""
    path = Path(path)
    cols = {k: np.asarray(v, dtype=np.float64).reshape(-1) for k, v in columns.items()}
    lengths = {v.size for v in cols.values()}
    if len(lengths) > 1:
        raise ValueError("columns differ in length")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("# meta: " + json.dumps(dict(meta), sort_keys=True, default=str) + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([repr(float(v)) for v in row])
    return path


def read_analysis_csv(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, newline="") as f:
        first = f.readline()
        if not first.startswith("# meta: "):
            raise ValueError(f"{path}: missing '# meta:' header")
        meta = json.loads(first[len("# meta: "):])
        rows = list(csv.reader(f))
    names = rows[0]
    data = np.array(rows[1:], dtype=np.float64).reshape(-1, len(names))
    return meta, {n: data[:, i] for i, n in enumerate(names)}
