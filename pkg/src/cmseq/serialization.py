"""JSON layouts for models, representations, boundaries and block matrices.

Model files look like::

    {"kind": "cml", "N": 3, "d": 1,
     "params": {"transition": [[[0.667]], [[0.5]]], ...},
     "boundary": {"endpoint_cov": [[4.0]], "cross_gain": [[0.25]], "other_end_cov": [[0.75]]}}

Every parameter is a list of ``d x d`` blocks in increasing time order over the
index range of that field (see :func:`cmseq.models.parameter_ranges`).
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .blockmat import BlockMatrix
from .errors import CMSeqError, MalformedInput
from .models import (
    Boundary,
    CML0k2Model,
    CMcModel,
    MarkovModel,
    parameter_ranges,
)
from .transforms import Representation

KINDS = ("markov", "cml", "cmf", "cml_0k2")


def _block_out(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _block_in(value, where: str, d: int) -> np.ndarray:
    try:
        arr = np.atleast_2d(np.array(value, dtype=float))
    except (TypeError, ValueError):
        raise MalformedInput(f"{where}: expected a {d}x{d} numeric block") from None
    if arr.shape != (d, d):
        raise MalformedInput(f"{where}: block has shape {arr.shape}, expected ({d}, {d})")
    return arr


def _field(obj: dict, name: str, where: str):
    if not isinstance(obj, dict):
        raise MalformedInput(f"{where}: expected an object")
    if name not in obj:
        raise MalformedInput(f"{where}: missing field {name!r}")
    return obj[name]


def _int_field(obj, name, where) -> int:
    value = _field(obj, name, where)
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedInput(f"{where}.{name}: expected an integer, got {value!r}")
    return value


def _series_in(values, indices, where, d) -> dict:
    if not isinstance(values, list):
        raise MalformedInput(f"{where}: expected a list of blocks")
    if len(values) != len(indices):
        raise MalformedInput(f"{where}: expected {len(indices)} blocks for times {indices}, got {len(values)}")
    return {k: _block_in(v, f"{where}[{i}]", d) for i, (k, v) in enumerate(zip(indices, values))}


# --- models ---------------------------------------------------------------------

def model_kind(m) -> str:
    if isinstance(m, MarkovModel):
        return "markov"
    if isinstance(m, CMcModel):
        return "cml" if m.direction == "L" else "cmf"
    if isinstance(m, CML0k2Model):
        return "cml_0k2"
    raise TypeError(f"not a model: {type(m).__name__}")


def boundary_to_json(b: Boundary) -> dict:
    out = {"endpoint_cov": _block_out(b.endpoint_cov)}
    if b.cross_gain is not None:
        out["cross_gain"] = _block_out(b.cross_gain)
    if b.other_end_cov is not None:
        out["other_end_cov"] = _block_out(b.other_end_cov)
    return out


def model_to_json(m) -> dict:
    kind = model_kind(m)
    out = {"kind": kind, "N": m.N, "d": m.d}
    if kind == "cml_0k2":
        out["k2"] = m.k2
    params = {
        name: [_block_out(getattr(m, name)[k]) for k in indices]
        for name, indices in parameter_ranges(m).items()
    }
    if kind == "cmf" and m.first_step is not None:
        params["first_step"] = [_block_out(m.first_step)]
    out["params"] = params
    if kind in ("cml", "cmf") and m.boundary is not None:
        out["boundary"] = boundary_to_json(m.boundary)
    return out


def _skeleton(kind, N, d, k2=None):
    """Empty model of the right kind, only used to look up index ranges."""
    if kind == "markov":
        return MarkovModel(N, d, {}, {})
    if kind in ("cml", "cmf"):
        return CMcModel("L" if kind == "cml" else "F", N, d, {}, {}, {})
    return CML0k2Model(N, d, k2, {}, {}, {}, {}, {})


def model_from_json(obj: dict):
    kind = _field(obj, "kind", "model")
    if kind not in KINDS:
        raise MalformedInput(f"model.kind: {kind!r} is not one of {list(KINDS)}")
    N, d = _int_field(obj, "N", "model"), _int_field(obj, "d", "model")
    if N < 1 or d < 1:
        raise MalformedInput(f"model: N={N} and d={d} must be positive")
    k2 = _int_field(obj, "k2", "model") if kind == "cml_0k2" else None
    params = _field(obj, "params", "model")
    if not isinstance(params, dict):
        raise MalformedInput("model.params: expected an object")
    ranges = parameter_ranges(_skeleton(kind, N, d, k2))
    allowed = set(ranges) | ({"first_step"} if kind == "cmf" else set())
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise MalformedInput(f"model.params: unknown field(s) {unknown}")
    series = {
        name: _series_in(_field(params, name, "model.params"), idx, f"model.params.{name}", d)
        for name, idx in ranges.items()
    }
    if kind == "markov":
        return MarkovModel(N, d, **series)
    if kind == "cml_0k2":
        return CML0k2Model(N, d, k2, **series)
    boundary = None
    if "boundary" in obj:
        boundary = boundary_from_json(obj["boundary"], d, kind, "model.boundary")
    first_step = None
    if kind == "cmf":
        first_step = _series_in(_field(params, "first_step", "model.params"), [1],
                                "model.params.first_step", d)[1]
    return CMcModel("L" if kind == "cml" else "F", N, d, boundary=boundary,
                    first_step=first_step, **series)


def boundary_from_json(obj, d: int, kind: str = "cml", where: str = "boundary") -> Boundary:
    endpoint = _block_in(_field(obj, "endpoint_cov", where), f"{where}.endpoint_cov", d)
    if kind == "cmf":
        return Boundary(endpoint)
    gain = _block_in(_field(obj, "cross_gain", where), f"{where}.cross_gain", d)
    other = _block_in(_field(obj, "other_end_cov", where), f"{where}.other_end_cov", d)
    return Boundary(endpoint, gain, other)


def endpoint_joint_from_json(obj, d: int, where: str = "boundary") -> dict:
    """``{"cov_x0", "cov_xN", "cross"}`` blocks of an origin/destination joint law."""
    return {name: _block_in(_field(obj, name, where), f"{where}.{name}", d)
            for name in ("cov_x0", "cov_xN", "cross")}


def endpoint_joint_to_json(joint: dict) -> dict:
    return {name: _block_out(joint[name]) for name in ("cov_x0", "cov_xN", "cross")}


# --- representations and matrices -------------------------------------------------

def representation_to_json(r: Representation) -> dict:
    return {
        "direction": r.direction,
        "underlying": model_to_json(r.underlying),
        "gamma": [_block_out(r.Gamma(k)) for k in r.times],
        "endpoint_cov": _block_out(r.endpoint_cov),
    }


def representation_from_json(obj) -> Representation:
    direction = _field(obj, "direction", "representation")
    if direction not in ("L", "F"):
        raise MalformedInput(f"representation.direction: expected 'L' or 'F', got {direction!r}")
    underlying = model_from_json(_field(obj, "underlying", "representation"))
    if not isinstance(underlying, MarkovModel):
        raise MalformedInput("representation.underlying: expected a markov model")
    N, d = underlying.N + 1, underlying.d
    times = list(range(0, N)) if direction == "L" else list(range(1, N + 1))
    gamma = _series_in(_field(obj, "gamma", "representation"), times, "representation.gamma", d)
    endpoint = _block_in(_field(obj, "endpoint_cov", "representation"),
                         "representation.endpoint_cov", d)
    return Representation(direction, underlying, gamma, endpoint)


def matrix_to_json(J: BlockMatrix, kind: str | None = None) -> dict:
    out = J.to_json()
    if kind is not None:
        out["kind"] = kind
    return out


def matrix_from_json(obj) -> BlockMatrix:
    try:
        return BlockMatrix.from_json(obj, symmetric=True)
    except CMSeqError as exc:
        raise MalformedInput(f"matrix: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise MalformedInput(f"matrix: {exc}") from None


# --- files ------------------------------------------------------------------------

def loads(text: str, source: str = "<input>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load(path: str):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), path)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def model_digest(m) -> str:
    """SHA-256 of the canonical (sorted, compact) model JSON."""
    canonical = json.dumps(model_to_json(m), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
