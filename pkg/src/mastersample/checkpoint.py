"""Versioned checkpoint files.

A checkpoint is a nested dict of numpy arrays, scalars, strings, lists and
dicts (numpy ``bit_generator.state`` dicts included). Arrays are stored as
npz members; everything else goes into a JSON metadata tree where each
array is replaced by a ``{"__array__": key}`` placeholder. A SHA-256 digest
over all members guards against truncated or edited files.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from pathlib import Path
from typing import Any

import numpy as np

FORMAT_TAG = "mastersample-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be read or has the wrong version."""


def _flatten(obj: Any, prefix: str, arrays: dict[str, np.ndarray]) -> Any:
    if isinstance(obj, np.ndarray):
        key = prefix or "root"
        arrays[key] = obj
        return {"__array__": key}
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if not isinstance(k, str):
                raise TypeError(f"checkpoint keys must be str, got {type(k).__name__}")
            out[k] = _flatten(v, f"{prefix}/{k}" if prefix else k, arrays)
        return out
    if isinstance(obj, (list, tuple)):
        return [_flatten(v, f"{prefix}/{i}", arrays) for i, v in enumerate(obj)]
    if isinstance(obj, np.generic):
        return obj.item()
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise TypeError(f"cannot checkpoint object of type {type(obj).__name__}")


def _unflatten(obj: Any, arrays: dict[str, np.ndarray]) -> Any:
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return arrays[obj["__array__"]]
        return {k: _unflatten(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unflatten(v, arrays) for v in obj]
    return obj


def _digest(meta: bytes, arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256(meta)
    for key in sorted(arrays):
        a = np.ascontiguousarray(arrays[key])
        h.update(key.encode())
        h.update(str(a.dtype).encode())
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | os.PathLike, payload: dict) -> None:
    """Write ``payload`` atomically to ``path``."""
    arrays: dict[str, np.ndarray] = {}
    tree = _flatten(payload, "", arrays)
    meta = json.dumps(
        {"format": FORMAT_TAG, "version": FORMAT_VERSION, "payload": tree},
        sort_keys=True,
    ).encode()
    digest = _digest(meta, arrays)
    members = {f"a:{k}": v for k, v in arrays.items()}
    members["__meta__"] = np.frombuffer(meta, dtype=np.uint8)
    members["__digest__"] = np.frombuffer(digest.encode(), dtype=np.uint8)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **members)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> dict:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: unreadable file, digest mismatch, or a format
            tag/version this build does not understand.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        with np.load(io.BytesIO(raw), allow_pickle=False) as npz:
            members = {k: npz[k] for k in npz.files}
    except (OSError, ValueError, zipfile.BadZipFile, EOFError, KeyError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if "__meta__" not in members or "__digest__" not in members:
        raise CheckpointError(f"{path} is not a checkpoint (missing metadata)")
    meta = members.pop("__meta__").tobytes()
    stored = members.pop("__digest__").tobytes().decode(errors="replace")
    arrays = {k[2:]: v for k, v in members.items() if k.startswith("a:")}
    if _digest(meta, arrays) != stored:
        raise CheckpointError(f"checkpoint {path} is corrupt (digest mismatch)")

    try:
        doc = json.loads(meta)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} has unreadable metadata") from exc
    if doc.get("format") != FORMAT_TAG:
        raise CheckpointError(f"{path}: unknown format tag {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {doc.get('version')} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    return _unflatten(doc["payload"], arrays)
