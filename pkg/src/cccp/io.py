"""JSON problem and result files.

Complex matrices are written as ``{"re": [[...]], "im": [[...]]}`` (``im``
optional) or as a plain real nested list. Scalars of the right-hand side may
be plain numbers.
"""
from __future__ import annotations

import json
import math
import os
import tempfile

import jsonschema
import numpy as np

from . import __version__
from .cnormal import ComplexNormal, validate as validate_normal
from .errors import CCCPError
from .reformulate import ChanceRow, IndividualCCCP, JointCCCP


class SchemaError(CCCPError, ValueError):
    """Input file rejected; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC}
_CMAT = {"oneOf": [_MAT, {"type": "object", "required": ["re"], "additionalProperties": False,
                          "properties": {"re": _MAT, "im": _MAT}}]}
_CSCALAR = {"oneOf": [_NUM, _CMAT,
                      {"type": "object", "required": ["re"], "additionalProperties": False,
                       "properties": {"re": _NUM, "im": _NUM}}]}
_LEVEL = {"type": "number", "minimum": 0.5, "exclusiveMaximum": 1}

_RHS = {
    "type": "object", "additionalProperties": False, "required": ["mean_re"],
    "properties": {"mean_re": _NUM, "mean_im": _NUM, "gamma": _CSCALAR, "relation": _CSCALAR},
}
_ROW = {
    "type": "object", "additionalProperties": False, "required": ["mean_re", "gamma", "b"],
    "properties": {"mean_re": _VEC, "mean_im": _VEC, "gamma": _CMAT, "relation": _CMAT,
                   "b": _RHS, "p": _LEVEL},
}
_OBJECTIVE = {
    "type": "object", "additionalProperties": False, "required": ["mean_re", "gamma"],
    "properties": {"mean_re": _VEC, "mean_im": _VEC, "gamma": _CMAT, "relation": _CMAT,
                   "q1": {"type": "number", "minimum": 0}, "q2": {"type": "number", "minimum": 0}},
}
PROBLEM_SCHEMA = {
    "type": "object", "additionalProperties": False,
    "required": ["kind", "n", "objective", "rows"],
    "properties": {
        "kind": {"enum": ["individual", "joint"]},
        "n": {"type": "integer", "minimum": 1},
        "objective": _OBJECTIVE,
        "rows": {"type": "array", "minItems": 1, "items": _ROW},
        "p": _LEVEL,
        "theta": {"type": "number", "minimum": 1},
        "nonneg": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "individual"}}},
         "then": {"properties": {"rows": {"items": {"required": ["p"]}}}}},
        {"if": {"properties": {"kind": {"const": "joint"}}}, "then": {"required": ["p"]}},
    ],
}


def field_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _schema_check(doc):
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return
    err = max(errors, key=lambda e: len(e.absolute_path))
    # ``required`` failures point at the parent; name the missing field
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = [f for f in err.validator_value if isinstance(err.instance, dict) and f not in err.instance]
        if missing:
            path.append(missing[0])
    if err.validator == "oneOf" and err.context:
        err = max(err.context, key=lambda e: len(e.absolute_path))
        path = path + list(err.relative_path)
    raise SchemaError(field_path(path), err.message)


def _cmat(v, shape, path):
    if v is None:
        return np.zeros(shape, dtype=complex)
    if isinstance(v, (int, float)):
        v = [[v]]
    if isinstance(v, dict):
        re = np.asarray(_as_matrix(v["re"]), dtype=float)
        im = np.asarray(_as_matrix(v.get("im", np.zeros_like(re))), dtype=float)
        if re.shape != im.shape:
            raise SchemaError(f"{path}.im", f"shape {im.shape} differs from re {re.shape}")
        out = re + 1j * im
    else:
        out = np.asarray(v, dtype=float).astype(complex)
    if out.shape != shape:
        raise SchemaError(path, f"expected shape {shape}, got {out.shape}")
    return out


def _as_matrix(v):
    return [[v]] if isinstance(v, (int, float)) else v


def _vec(doc, key, n, path):
    v = doc.get(key)
    if v is None:
        return np.zeros(n)
    out = np.asarray(v, dtype=float)
    if out.shape != (n,):
        raise SchemaError(f"{path}.{key}", f"expected length {n}, got {out.shape[0]}")
    return out


def _normal(doc, n, path, matrix=True) -> ComplexNormal:
    if matrix:
        mean = _vec(doc, "mean_re", n, path) + 1j * _vec(doc, "mean_im", n, path)
    else:
        mean = np.array([doc["mean_re"] + 1j * doc.get("mean_im", 0.0)])
    gamma = _cmat(doc.get("gamma"), (n, n), f"{path}.gamma")
    rel = _cmat(doc.get("relation"), (n, n), f"{path}.relation")
    d = ComplexNormal(mean, gamma, rel)
    rep = validate_normal(d)
    if not rep.valid:
        raise SchemaError(path, "invalid distribution: " + ", ".join(sorted(rep.violations)))
    return d


def parse_problem(doc: dict):
    """Validate a problem document and build an ``IndividualCCCP`` or ``JointCCCP``."""
    _schema_check(doc)
    n = doc["n"]
    obj_doc = doc["objective"]
    obj = _normal(obj_doc, n, "objective")
    rows = []
    for i, r in enumerate(doc["rows"]):
        row = _normal(r, n, f"rows[{i}]")
        rhs = _normal(r["b"], 1, f"rows[{i}].b", matrix=False)
        rows.append(ChanceRow(row, rhs, r.get("p")))
    q1, q2 = obj_doc.get("q1", 1.0), obj_doc.get("q2", 1.0)
    nonneg = doc.get("nonneg", True)
    try:
        if doc["kind"] == "individual":
            return IndividualCCCP(obj, rows, q1, q2, nonneg)
        return JointCCCP(obj, rows, doc["p"], doc.get("theta", 1.0), q1, q2, nonneg)
    except CCCPError as exc:
        raise SchemaError("", str(exc)) from exc


def load_problem(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"not valid JSON: {exc}") from exc
    return parse_problem(doc), doc


# -- results -------------------------------------------------------------------

def finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def solution_dict(z, y=None):
    if z is None:
        return None
    z = np.asarray(z, dtype=complex)
    return {"z_re": [float(v) for v in z.real], "z_im": [float(v) for v in z.imag],
            "y": None if y is None else [float(v) for v in y]}


def solution_z(sol: dict) -> np.ndarray:
    return np.asarray(sol["z_re"], dtype=float) + 1j * np.asarray(sol["z_im"], dtype=float)


def result_header(method: str, seed: int) -> dict:
    return {"tool": "cccp", "version": __version__, "method": method, "seed": int(seed)}


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
