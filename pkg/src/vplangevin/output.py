"""Plot-data files, skip logs and the reproducibility manifest.

Plot outputs are plain two/three-column whitespace-separated text with a
``#`` header line, consumable by any plotting tool and comparable bit for
bit. The manifest lists every pipeline output with its content hash so rerun
identity is a checkable property.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def write_plot_data(path, columns: list[tuple[str, np.ndarray]]) -> None:
    names = [name for name, _ in columns]
    arrays = [np.asarray(arr) for _, arr in columns]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("plot-data columns differ in length")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for i in range(n):
            fh.write(" ".join(repr(float(a[i])) for a in arrays) + "\n")


def write_jsonl(path, entries: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(path, out_dir, input_files: dict, config_dict: dict) -> None:
    """Manifest with content hashes of every artifact in ``out_dir``."""
    out_dir = Path(out_dir)
    outputs = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != Path(path).name:
            outputs[p.relative_to(out_dir).as_posix()] = sha256_file(p)
    manifest = {
        "inputs": {str(k): sha256_file(v) for k, v in input_files.items()},
        "config": config_dict,
        "outputs": outputs,
    }
    write_json(path, manifest)
