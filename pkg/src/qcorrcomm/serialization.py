"""JSON encoding for states, distributions, factorizations and protocols.

File layouts::

    {"kind": "pure", "dims": [...], "amplitudes": [{"index": [...], "re": x, "im": y}, ...]}
    {"kind": "density", "dims": [...], "matrix": [[{"re": x, "im": y}, ...], ...]}
    {"kind": "dist", "dims": [...], "probs": [{"index": [...], "p": x}, ...]}

Sparse entries omit zeros; an omitted ``im`` reads as zero. Factorizations
and protocols reuse the dense ``{"re", "im"}`` matrix cells.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .psd_rank import PsdFactorization
from .synthesis import DiscardStep, GenerationProtocol, IsometryStep, ProtocolError, SendStep
from .tensor_core import ClassicalDistribution, DensityOperator, InvariantError, PureState


def _cell(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def encode_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[_cell(z) for z in row] for row in m]


def _number(v, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvariantError(f"{what} must be a number, got {v!r}")
    return float(v)


def _read_cell(c) -> complex:
    if isinstance(c, dict):
        return complex(_number(c.get("re", 0.0), "re"), _number(c.get("im", 0.0), "im"))
    return complex(_number(c, "matrix entry"))


def decode_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise InvariantError("matrix must be a list of rows")
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise InvariantError("matrix rows have different lengths")
    return np.array([[_read_cell(c) for c in r] for r in rows], dtype=complex).reshape(
        len(rows), widths.pop() if widths else 0)


def _sparse(tensor: np.ndarray, value) -> list:
    out = []
    for idx in zip(*np.nonzero(tensor)):
        out.append({"index": [int(i) for i in idx], **value(tensor[idx])})
    return out


def _read_sparse(entries, dims, value) -> np.ndarray:
    if not isinstance(entries, list):
        raise InvariantError("sparse entries must be a list")
    t = np.zeros(dims, dtype=complex)
    seen = set()
    for e in entries:
        idx = e.get("index") if isinstance(e, dict) else None
        if not isinstance(idx, list) or len(idx) != len(dims):
            raise InvariantError(f"entry index {idx!r} does not address {len(dims)} parties")
        idx = tuple(idx)
        if any(not isinstance(i, int) or not 0 <= i < d for i, d in zip(idx, dims)):
            raise InvariantError(f"entry index {list(idx)} out of range for dims {list(dims)}")
        if idx in seen:
            raise InvariantError(f"duplicate entry at index {list(idx)}")
        seen.add(idx)
        t[idx] = value(e)
    return t


def state_to_json(psi: PureState) -> dict:
    return {"kind": "pure", "dims": list(psi.dims),
            "amplitudes": _sparse(psi.amplitudes, _cell)}


def density_to_json(rho: DensityOperator) -> dict:
    return {"kind": "density", "dims": list(rho.dims), "matrix": encode_matrix(rho.matrix)}


def distribution_to_json(p: ClassicalDistribution) -> dict:
    return {"kind": "dist", "dims": list(p.dims),
            "probs": _sparse(p.probs, lambda v: {"p": float(v)})}


def factorization_to_json(f: PsdFactorization) -> dict:
    return {"kind": "psd_factorization", "k": f.k, "r": f.r,
            "factors": [[encode_matrix(c) for c in stack] for stack in f.factors]}


def _step_to_json(s) -> dict:
    if isinstance(s, IsometryStep):
        return {"op": "isometry", "party": s.party, "matrix": encode_matrix(s.matrix),
                "inputs": None if s.inputs is None else list(s.inputs),
                "outputs": None if s.outputs is None else list(s.outputs)}
    if isinstance(s, SendStep):
        return {"op": "send", "from": s.src, "to": s.dst, "qubits": s.qubits, "register": s.register}
    return {"op": "discard", "party": s.party, "register": s.register}


def protocol_to_json(p: GenerationProtocol) -> dict:
    return {"kind": "protocol", "label": p.label, "k": p.k, "seed": state_to_json(p.seed),
            "owners": list(p.owners), "steps": [_step_to_json(s) for s in p.steps],
            "target": to_json(p.target)}


def to_json(obj) -> dict:
    if isinstance(obj, PureState):
        return state_to_json(obj)
    if isinstance(obj, DensityOperator):
        return density_to_json(obj)
    if isinstance(obj, ClassicalDistribution):
        return distribution_to_json(obj)
    if isinstance(obj, PsdFactorization):
        return factorization_to_json(obj)
    if isinstance(obj, GenerationProtocol):
        return protocol_to_json(obj)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _dims(obj) -> list[int]:
    dims = obj["dims"]
    if not isinstance(dims, list) or not dims or not all(
            isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims):
        raise InvariantError(f"dims must be a nonempty list of positive integers, got {dims!r}")
    if math.prod(dims) > 4096:
        raise InvariantError(f"total dimension {math.prod(dims)} exceeds cap 4096")
    return dims


def _step_from_json(s: dict):
    op = s.get("op")
    if op == "isometry":
        return IsometryStep(int(s["party"]), decode_matrix(s["matrix"]),
                            None if s.get("inputs") is None else tuple(s["inputs"]),
                            None if s.get("outputs") is None else tuple(s["outputs"]))
    if op == "send":
        return SendStep(int(s["from"]), int(s["to"]), int(s["qubits"]), s.get("register"))
    if op == "discard":
        return DiscardStep(int(s["party"]), int(s["register"]))
    raise InvariantError(f"unknown protocol step {op!r}")


def from_json(obj: dict):
    """Decode any object written by :func:`to_json`.

    Raises
    ------
    InvariantError
        On malformed input or when the decoded object breaks its invariants.
    """
    if not isinstance(obj, dict):
        raise InvariantError("expected a JSON object")
    kind = obj.get("kind")
    try:
        if kind == "pure":
            dims = _dims(obj)
            return PureState(dims, _read_sparse(obj["amplitudes"], dims, _read_cell))
        if kind == "density":
            return DensityOperator(_dims(obj), decode_matrix(obj["matrix"]))
        if kind == "dist":
            dims = _dims(obj)
            t = _read_sparse(obj["probs"], dims, lambda e: _number(e.get("p"), "p"))
            return ClassicalDistribution(dims, t.real)
        if kind == "psd_factorization":
            return PsdFactorization([np.stack([decode_matrix(c) for c in stack])
                                     for stack in obj["factors"]])
        if kind == "protocol":
            return GenerationProtocol(int(obj["k"]), from_json(obj["seed"]), list(obj["owners"]),
                                      [_step_from_json(s) for s in obj["steps"]],
                                      from_json(obj["target"]), obj.get("label", ""))
    except KeyError as e:
        raise InvariantError(f"missing field {e.args[0]!r} in {kind!r} object") from None
    except (TypeError, AttributeError) as e:
        raise InvariantError(f"malformed {kind!r} object: {e}") from None
    except ValueError as e:
        if isinstance(e, (InvariantError, ProtocolError)):
            raise
        raise InvariantError(f"malformed {kind!r} object: {e}") from None
    raise InvariantError(f"unknown object kind {kind!r}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def load(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InvariantError(f"cannot read {path}: {e.strerror}") from None
    try:
        return from_json(json.loads(text))
    except json.JSONDecodeError as e:
        raise InvariantError(f"{path} is not valid JSON: {e.msg}") from None


def save(obj, path) -> None:
    Path(path).write_text(dumps(to_json(obj)))
