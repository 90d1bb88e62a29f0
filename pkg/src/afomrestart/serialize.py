"""JSON documents for problems, certificates, generator specs and bound reports.

A problem document looks like::

    {"problem": {"kind": "quadratic", "H": [[...]], "c": [...], "lb": null, ...},
     "certificate": {"optimal_value": ..., "optimal_point": [...], ...},
     "qfg": {"level": "inf", "mu": 1.0}}

A generator document is ``{"generator": {...GeneratorSpec fields...}}``.
Non-finite floats are written as the strings ``"inf"``, ``"-inf"`` and
``"nan"`` so the output stays strict JSON.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import BoundsReport
from .engines import DualQpProblem
from .errors import InputError
from .problem import CompositeObjective, OptimumCertificate, QfgCertificate, lasso, quadratic
from .suite import Generated, GeneratorSpec, generate

__all__ = [
    "bounds_to_dict",
    "certificate_from_dict",
    "certificate_to_dict",
    "dump_generated",
    "dump_problem",
    "load_document",
    "problem_from_dict",
    "problem_to_dict",
    "read_json",
    "write_json",
]

_SPECIAL = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _encode(value):
    if isinstance(value, np.ndarray):
        return [_encode(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, np.integer):
        return int(value)
    return value


def _decode_float(value):
    if isinstance(value, str):
        try:
            return _SPECIAL[value]
        except KeyError:
            raise InputError(f"not a number: {value!r}") from None
    return float(value)


def _array(value, name, ndim=1):
    if value is None:
        return None
    try:
        if ndim == 1:
            arr = np.array([_decode_float(v) for v in value], dtype=float)
        else:
            arr = np.array([[_decode_float(v) for v in row] for row in value], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"field {name!r} is not a {ndim}-d numeric array") from exc
    return arr


def problem_to_dict(problem) -> dict:
    if isinstance(problem, DualQpProblem):
        return _encode({
            "kind": "dual-qp", "H": problem.H, "c": problem.c,
            "lb": problem.lb, "ub": problem.ub,
            "G": None if problem.is_box else problem.G,
            "h": None if problem.is_box else problem.h,
            "precondition": problem.row_scaling is not None,
        })
    if isinstance(problem, CompositeObjective):
        if not problem.params:
            raise InputError("objective was assembled by hand and cannot be serialized")
        return _encode(problem.params)
    raise InputError(f"cannot serialize {type(problem).__name__}")


def problem_from_dict(doc: dict):
    try:
        kind = doc["kind"]
    except (KeyError, TypeError):
        raise InputError("problem document needs a 'kind' field") from None
    if kind == "quadratic":
        H = _array(doc.get("H"), "H", 2)
        if H is None:
            raise InputError("quadratic problem needs H")
        smooth = doc.get("smoothness")
        return quadratic(H, _array(doc.get("c"), "c"), _array(doc.get("lb"), "lb"),
                         _array(doc.get("ub"), "ub"), _decode_float(doc.get("offset", 0.0)),
                         None if smooth is None else _decode_float(smooth))
    if kind == "lasso":
        return lasso(_array(doc["A"], "A", 2), _array(doc["b"], "b"), _decode_float(doc["weight"]))
    if kind == "dual-qp":
        H, c = _array(doc["H"], "H", 2), _array(doc["c"], "c")
        if doc.get("G") is not None:
            return DualQpProblem(H, c, _array(doc["G"], "G", 2), _array(doc["h"], "h"))
        return DualQpProblem.from_box(H, c, _array(doc.get("lb"), "lb"), _array(doc.get("ub"), "ub"),
                                      precondition=bool(doc.get("precondition", False)))
    raise InputError(f"unknown problem kind {kind!r}")


def certificate_to_dict(cert: OptimumCertificate) -> dict:
    return _encode({
        "optimal_value": cert.optimal_value,
        "optimal_point": np.asarray(cert.optimal_point),
        "unique": cert.projection is not None,
        "numerical": cert.numerical,
        "accuracy": cert.accuracy,
    })


def certificate_from_dict(doc: dict) -> OptimumCertificate:
    x = _array(doc["optimal_point"], "optimal_point")
    x.setflags(write=False)
    return OptimumCertificate(
        optimal_value=_decode_float(doc["optimal_value"]),
        optimal_point=x,
        projection=(lambda _: x) if doc.get("unique", False) else None,
        numerical=bool(doc.get("numerical", False)),
        accuracy=_decode_float(doc.get("accuracy", 0.0)),
    )


def dump_problem(problem, certificate: Optional[OptimumCertificate] = None,
                 qfg: Optional[QfgCertificate] = None) -> dict:
    doc = {"problem": problem_to_dict(problem)}
    if certificate is not None:
        doc["certificate"] = certificate_to_dict(certificate)
    if qfg is not None:
        doc["qfg"] = _encode({"level": qfg.level, "mu": qfg.mu})
    return doc


def dump_generated(g: Generated) -> dict:
    doc = dump_problem(g.problem, g.certificate, g.qfg)
    doc["generator"] = _encode(g.spec.to_dict())
    return doc


def bounds_to_dict(report: BoundsReport) -> dict:
    return _encode(report.to_dict())


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(_encode(doc), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    return doc


def load_document(doc: dict) -> Generated:
    """Turn a problem or generator document into a :class:`Generated`.

    A document holding both ``problem`` and ``generator`` is read from its
    explicit problem data; the generator block is informational.
    """
    if "problem" in doc:
        problem = problem_from_dict(doc["problem"])
        cert = certificate_from_dict(doc["certificate"]) if "certificate" in doc else None
        qfg = None
        if "qfg" in doc:
            qfg = QfgCertificate(_decode_float(doc["qfg"]["level"]), _decode_float(doc["qfg"]["mu"]))
        spec = GeneratorSpec.from_dict(doc["generator"]) if "generator" in doc else None
        if isinstance(problem, DualQpProblem):
            primal = quadratic(problem.H, problem.c, lb=problem.lb, ub=problem.ub) if problem.is_box else None
        else:
            primal = problem
        return Generated(spec, problem, cert, qfg, primal, ["loaded from document"])
    if "generator" in doc:
        return generate(GeneratorSpec.from_dict(doc["generator"]))
    raise InputError("document holds neither 'problem' nor 'generator'")
