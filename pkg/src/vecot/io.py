"""JSON instance I/O, content digests and atomic writes."""

import hashlib
import json
import os
import tempfile

import jsonschema
import numpy as np

from .measure import build_measure

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["points", "weights", "densities"],
    "properties": {
        "points": {"type": "array", "items": {"anyOf": [_VEC, _NUM]}, "minItems": 1},
        "weights": _VEC,
        "densities": _MAT,
        "costs": _MAT,
        "witness": {"type": "object"},
    },
}

PAIR_SCHEMA = {
    "type": "object",
    "required": ["x", "y"],
    "properties": {"x": INSTANCE_SCHEMA, "y": INSTANCE_SCHEMA, "pair_cost": _MAT},
}


class SchemaError(ValueError):
    """Input JSON does not match the expected layout."""


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _validate(doc, schema, where):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {loc}: {exc.message}") from None


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(doc):
    """sha256 of the canonical JSON encoding."""
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def instance_from_dict(doc, where="instance"):
    """Build ``(measure, costs)`` from a parsed instance object; costs may be None."""
    _validate(doc, INSTANCE_SCHEMA, where)
    measure = build_measure(doc["points"], doc["weights"], doc["densities"])
    costs = np.asarray(doc["costs"], dtype=np.float64) if "costs" in doc else None
    return measure, costs


def instance_to_dict(measure, costs=None):
    doc = measure.to_dict()
    if costs is not None:
        doc["costs"] = np.asarray(costs, dtype=np.float64).tolist()
    return doc


def load_instance(path):
    """Returns ``(measure, costs, document)``."""
    doc = _load_json(path)
    measure, costs = instance_from_dict(doc, str(path))
    return measure, costs, doc


def load_matrix(path, key):
    """A matrix stored bare or under ``key`` in a JSON file."""
    doc = _load_json(path)
    if isinstance(doc, dict):
        if key not in doc:
            raise SchemaError(f"{path}: missing key {key!r}")
        doc = doc[key]
    _validate(doc, _MAT, str(path))
    return np.asarray(doc, dtype=np.float64), doc


def load_labels(path):
    doc = _load_json(path)
    if isinstance(doc, dict):
        doc = doc.get("labels")
    _validate(doc, {"type": "array", "items": {"type": "integer", "minimum": 0}}, str(path))
    return np.asarray(doc, dtype=np.int64)


def load_pair(path):
    """Returns ``(mx, my, pair_cost or None, document)``."""
    doc = _load_json(path)
    _validate(doc, PAIR_SCHEMA, str(path))
    mx, _ = instance_from_dict(doc["x"], f"{path}:x")
    my, _ = instance_from_dict(doc["y"], f"{path}:y")
    cost = np.asarray(doc["pair_cost"], dtype=np.float64) if "pair_cost" in doc else None
    return mx, my, cost, doc


def write_atomic(path, text):
    """Write ``text`` to a temporary file beside ``path`` and rename it into place."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_report(doc):
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True) + "\n"


def to_jsonable(obj):
    """Convert numpy containers and scalars to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj
