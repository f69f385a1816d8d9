"""JSON files for partitions, systems, barriers and weights.

Writes are deterministic (sorted keys, floats rounded to 12 significant
digits) and atomic (temp file in the target directory, then rename).
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .barrier import LeakyAlpha, PWABarrier
from .dynamics import AffinePiece, PWADynamics, ReLUNetwork
from .errors import PWAError
from .geometry import Partition, Polytope


class InputError(PWAError):
    """Unreadable, malformed or schema-violating input file."""


# -- schemas ------------------------------------------------------------------

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_poly = {
    "type": "object",
    "required": ["E", "e"],
    "properties": {"E": _mat, "e": _vec, "vertices": {"type": "array", "items": _vec}},
}


def _cells_schema(extra_req=(), extra_props=None):
    cell = {
        "type": "object",
        "required": ["E", "e", *extra_req],
        "properties": {**_poly["properties"], **(extra_props or {})},
    }
    return {
        "type": "object",
        "required": ["domain", "cells"],
        "properties": {"domain": _poly, "cells": {"type": "array", "items": cell, "minItems": 1}},
    }


SCHEMAS = {
    "partition": _cells_schema(),
    "system": _cells_schema(("A", "a"), {"A": _mat, "a": _vec}),
    "barrier": {
        **_cells_schema(("s", "t"), {"s": _vec, "t": {"type": "number"}}),
        "required": ["domain", "cells", "alpha_1", "alpha_m"],
    },
    "weights": {
        "type": "object",
        "required": ["W1", "b1", "W2", "b2"],
        "properties": {"W1": _mat, "b1": _vec, "W2": _mat, "b2": _vec},
    },
}
SCHEMAS["barrier"]["properties"].update(alpha_1={"type": "number"}, alpha_m={"type": "number"})


# -- primitives ---------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.12g}") + 0.0  # +0.0 folds -0.0
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":")) + "\n"


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, dumps(obj))


def read_json(path, kind=None):
    """Parse ``path`` and optionally validate it against ``SCHEMAS[kind]``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if kind is not None:
        validate(obj, kind, str(path))
    return obj


def validate(obj, kind, label="<input>"):
    v = jsonschema.Draft202012Validator(SCHEMAS[kind])
    errs = sorted(v.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        where = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path) or "(root)"
        raise InputError(f"{label}: {kind} schema error at ${where}: {e.message}")


def write_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{float(v):.12g}" for v in r])
    atomic_write(path, buf.getvalue())


# -- object <-> dict ----------------------------------------------------------


def polytope_to_dict(p: Polytope, with_vertices=True):
    out = {"E": p.E, "e": p.e}
    if with_vertices:
        out["vertices"] = p.vertices
    return out


def polytope_from_dict(d) -> Polytope:
    E = np.asarray(d["E"], float)
    e = np.asarray(d["e"], float)
    if E.ndim != 2 or E.shape[0] != e.shape[0]:
        raise InputError(f"polytope with E of shape {E.shape} and e of shape {e.shape}")
    V = d.get("vertices")
    return Polytope(E, e, None if V is None else np.asarray(V, float))


def partition_to_dict(part: Partition):
    return {
        "kind": "partition",
        "domain": polytope_to_dict(part.domain, with_vertices=False),
        "cells": [polytope_to_dict(c) for c in part.cells],
    }


def partition_from_dict(d) -> Partition:
    return Partition([polytope_from_dict(c) for c in d["cells"]], polytope_from_dict(d["domain"]))


def system_to_dict(sys: PWADynamics):
    out = partition_to_dict(sys.partition)
    out["kind"] = "pwa_system"
    for c, p in zip(out["cells"], sys.pieces):
        c["A"], c["a"] = p.A, p.a
    return out


def system_from_dict(d) -> PWADynamics:
    part = partition_from_dict(d)
    try:
        pieces = [AffinePiece(c["A"], c["a"]) for c in d["cells"]]
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return PWADynamics(part, pieces)


def barrier_to_dict(b: PWABarrier, alpha: LeakyAlpha, extra=None):
    out = partition_to_dict(b.partition)
    out["kind"] = "pwa_barrier"
    for c, s, t in zip(out["cells"], b.S, b.T):
        c["s"], c["t"] = s, float(t)
    out["alpha_1"], out["alpha_m"] = alpha.alpha_1, alpha.alpha_m
    out.update(extra or {})
    return out


def barrier_from_dict(d):
    """Returns (PWABarrier, LeakyAlpha)."""
    part = partition_from_dict(d)
    b = PWABarrier(part, [c["s"] for c in d["cells"]], [c["t"] for c in d["cells"]])
    return b, LeakyAlpha(float(d["alpha_1"]), float(d["alpha_m"]))


def weights_from_dict(d) -> ReLUNetwork:
    try:
        return ReLUNetwork(*(np.asarray(d[k], float) for k in ("W1", "b1", "W2", "b2")))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def load_system(path):
    return system_from_dict(read_json(path, "system"))


def load_barrier(path):
    return barrier_from_dict(read_json(path, "barrier"))


def load_weights(path):
    return weights_from_dict(read_json(path, "weights"))


@dataclass
class RunManifest:
    command: str
    argv: list
    inputs: dict
    config: dict
    outputs: list = field(default_factory=list)
    elapsed_s: float = 0.0
    version: str = ""

    def write(self, path):
        write_json(path, asdict(self))
