"""Versioned JSON checkpoints for parameter groups.

JSON keeps the format inspectable while staying bit-exact: Python renders
float64 via repr, which round-trips every finite value. Keys are written
sorted so identical parameters always produce identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataError
from .nn import ParamGroup

FORMAT_NAME = "spansent-checkpoint"
FORMAT_VERSION = 1


def checkpoint_payload(groups: dict[str, ParamGroup], meta: dict[str, Any] | None = None) -> dict:
    payload: dict[str, Any] = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "groups": {},
    }
    for gname, group in groups.items():
        entry: dict[str, Any] = {"learning_rate": group.learning_rate, "tensors": {}}
        for tname, tensor in group.named_tensors():
            entry["tensors"][tname] = {
                "shape": list(tensor.shape),
                "values": tensor.data.reshape(-1).tolist(),
            }
        payload["groups"][gname] = entry
    return payload


def save_checkpoint(path: str | Path, groups: dict[str, ParamGroup], meta: dict[str, Any] | None = None) -> None:
    payload = checkpoint_payload(groups, meta)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[dict[str, dict[str, np.ndarray]], dict[str, Any]]:
    """Read a checkpoint into {group: {tensor_name: array}} plus its meta dict."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if payload.get("format") != FORMAT_NAME:
        raise DataError(f"checkpoint {path} has unknown format {payload.get('format')!r}")
    if payload.get("version") != FORMAT_VERSION:
        raise DataError(f"checkpoint {path} has unsupported version {payload.get('version')!r}")
    groups: dict[str, dict[str, np.ndarray]] = {}
    for gname, entry in payload["groups"].items():
        tensors = {}
        for tname, spec in entry["tensors"].items():
            arr = np.asarray(spec["values"], dtype=np.float64).reshape(spec["shape"])
            tensors[tname] = arr
        groups[gname] = tensors
    return groups, payload.get("meta", {})


def restore_into(groups: dict[str, ParamGroup], stored: dict[str, dict[str, np.ndarray]]) -> None:
    """Copy stored arrays into existing parameter tensors, checking shapes."""
    for gname, group in groups.items():
        stored_tensors = stored.get(gname, {})
        for tname, tensor in group.named_tensors():
            if tname not in stored_tensors:
                raise DataError(f"checkpoint is missing tensor {gname}/{tname}")
            arr = stored_tensors[tname]
            if arr.shape != tensor.shape:
                raise DataError(
                    f"checkpoint tensor {gname}/{tname} has shape {arr.shape}, expected {tensor.shape}"
                )
            tensor.data = arr.copy()
