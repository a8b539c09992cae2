"""JSON documents holding named float arrays.

The on-disk form is a single object: each key maps to
``{"shape": [...], "data": [... row-major floats ...]}``, and the
reserved key ``"_meta"`` holds a plain string/number mapping. JSON float
serialization is shortest-round-trip, so values survive save/load
bit-exactly.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np

from ..assignment import Box
from .pfm import PfmParams, flatten_params, unflatten_params

META_KEY = "_meta"


def save_arrays(path: str, arrays: dict[str, np.ndarray],
                meta: dict | None = None) -> None:
    doc: dict = {}
    if meta:
        doc[META_KEY] = dict(meta)
    for name, arr in sorted(arrays.items()):
        if name == META_KEY:
            raise ValueError(f"array name {META_KEY!r} is reserved")
        a = np.asarray(arr, dtype=np.float64)
        doc[name] = {"shape": list(a.shape), "data": a.reshape(-1).tolist()}
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")
    os.replace(tmp, path)


def load_arrays(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a JSON object at top level")
    meta = doc.pop(META_KEY, {})
    arrays = {}
    for name, entry in doc.items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64)
        except (TypeError, KeyError) as e:
            raise ValueError(f"{path}: bad array entry {name!r}") from e
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(
                f"{path}: {name!r} has {data.size} values for shape {shape}")
        arrays[name] = data.reshape(shape)
    return arrays, meta


_INPUT_KEYS = ("vis_t", "vis_prev", "ir_t", "ir_prev")


def save_pfm_fixture(path: str, params: PfmParams,
                     images: dict[str, np.ndarray],
                     prev_boxes: Iterable[Box]) -> None:
    """One self-contained file: parameters, the four input frames, and
    the previous-frame boxes feeding the heatmap."""
    arrays = {f"params.{k}": v for k, v in flatten_params(params).items()}
    for k in _INPUT_KEYS:
        arrays[f"input.{k}"] = images[k]
    box_rows = [(b.x, b.y, b.w, b.h) for b in prev_boxes]
    arrays["input.prev_boxes"] = (
        np.asarray(box_rows, dtype=np.float64).reshape(len(box_rows), 4))
    save_arrays(path, arrays,
                meta={"kind": "pfm_fixture", "variant": params.variant,
                      "n_heads": params.n_heads})


def load_pfm_fixture(path: str):
    """Returns (params, images, prev_boxes) from save_pfm_fixture output."""
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "pfm_fixture":
        raise ValueError(f"{path}: not a fusion fixture (kind={meta.get('kind')!r})")
    variant = meta.get("variant")
    n_heads = int(meta.get("n_heads", 0))
    if n_heads < 1:
        raise ValueError(f"{path}: missing or bad n_heads in _meta")
    flat = {k[len("params."):]: v for k, v in arrays.items()
            if k.startswith("params.")}
    params = unflatten_params(flat, variant, n_heads)
    images = {}
    for k in _INPUT_KEYS:
        key = f"input.{k}"
        if key not in arrays:
            raise ValueError(f"{path}: missing {key!r}")
        images[k] = arrays[key]
    rows = arrays.get("input.prev_boxes")
    if rows is None or rows.ndim != 2 or rows.shape[1] != 4:
        raise ValueError(f"{path}: input.prev_boxes must be (n, 4)")
    boxes = [Box(x=r[0], y=r[1], w=r[2], h=r[3]) for r in rows]
    return params, images, boxes
