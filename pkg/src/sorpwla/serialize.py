"""Versioned JSON documents for instances ("sor-v1").

A document always carries the sum-of-ratios data. Instances produced by the
application generators also carry a ``family`` block with the generating
parameters, which the exponential-bilinear exporter needs.

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import json
import math

from .apps import ApInstance, McpInstance
from .core import (
    Affine,
    BudgetRow,
    ConstraintSet,
    ExpAffine,
    LinearRow,
    LinExpAffine,
    PiecewiseLinear,
    RatioTerm,
    SorProblem,
    Zero,
)
from .errors import ParseError, SorError

SCHEMA = "sor-v1"

_FN_FIELDS = {
    "zero": (Zero, ()),
    "affine": (Affine, ("a0", "a1")),
    "exp_affine": (ExpAffine, ("c", "eta", "kappa")),
    "lin_exp_affine": (LinExpAffine, ("eta", "kappa")),
}
_FN_TAGS = {cls: tag for tag, (cls, _) in _FN_FIELDS.items()}

_MCP_FIELDS = ("m", "T", "q", "Uc", "eta", "kappa", "lower", "upper", "budget", "cardinality", "budget_form", "name")
_AP_FIELDS = ("m", "T", "eta", "kappa", "lower", "upper", "alpha", "budget", "cardinality", "weight", "name")


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(e) for e in v]
    return v


def fn_to_dict(fn) -> dict:
    if isinstance(fn, PiecewiseLinear):
        return {"type": "piecewise_linear", "breakpoints": [list(p) for p in fn.breakpoints]}
    tag = _FN_TAGS.get(type(fn))
    if tag is None:
        raise SorError(f"cannot serialize function of type {type(fn).__name__}")
    out = {"type": tag}
    for name in _FN_FIELDS[tag][1]:
        out[name] = getattr(fn, name)
    return out


def problem_to_dict(problem: SorProblem, family=None) -> dict:
    """Plain-data form of ``problem`` and optionally its generating instance."""
    doc = {
        "schema": SCHEMA,
        "name": problem.name,
        "m": problem.m,
        "T": problem.T,
        "lower": list(problem.lower),
        "upper": list(problem.upper),
        "constant": problem.constant,
        "terms": [
            {"a": r.a, "b": r.b, "g": [fn_to_dict(f) for f in r.g], "h": [fn_to_dict(f) for f in r.h]}
            for r in problem.terms
        ],
        "constraints": {
            "linear_rows": [
                {"coeff_x": list(r.coeff_x), "coeff_y": list(r.coeff_y), "rhs": r.rhs}
                for r in problem.constraints.linear_rows
            ],
            "budget_rows": [
                {"alpha": list(r.alpha), "rhs": r.rhs} for r in problem.constraints.bilinear_budget_rows
            ],
        },
    }
    if family is not None:
        doc["family"] = family_to_dict(family)
    return doc


def family_to_dict(inst) -> dict:
    if isinstance(inst, McpInstance):
        kind, fields = "mcp", _MCP_FIELDS
    elif isinstance(inst, ApInstance):
        kind, fields = "ap", _AP_FIELDS
    else:
        raise SorError(f"unsupported instance type {type(inst).__name__}")
    out = {"type": kind}
    for name in fields:
        out[name] = _plain(getattr(inst, name))
    return out


def dumps(problem: SorProblem, family=None) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(problem_to_dict(problem, family), indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _obj(d, required, optional=(), where="document") -> dict:
    if not isinstance(d, dict):
        raise ParseError(f"{where} must be an object")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ParseError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ParseError(f"missing field(s) in {where}: {', '.join(missing)}")
    return d


def _num(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"{where} must be a finite number")
    return float(v)


def _int(v, where) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{where} must be an integer")
    return v


def _nums(v, where) -> list[float]:
    if not isinstance(v, list):
        raise ParseError(f"{where} must be a list")
    return [_num(e, f"{where}[{i}]") for i, e in enumerate(v)]


def fn_from_dict(d, where="function"):
    if not isinstance(d, dict) or "type" not in d:
        raise ParseError(f"{where} needs a 'type' field")
    tag = d["type"]
    if tag == "piecewise_linear":
        _obj(d, ("type", "breakpoints"), where=where)
        bps = d["breakpoints"]
        if not isinstance(bps, list):
            raise ParseError(f"{where}.breakpoints must be a list")
        pts = []
        for i, p in enumerate(bps):
            pair = _nums(p, f"{where}.breakpoints[{i}]")
            if len(pair) != 2:
                raise ParseError(f"{where}.breakpoints[{i}] must be an (x, value) pair")
            pts.append(tuple(pair))
        return PiecewiseLinear(tuple(pts))
    if tag not in _FN_FIELDS:
        raise ParseError(f"{where} has unknown type {tag!r}")
    cls, fields = _FN_FIELDS[tag]
    _obj(d, ("type",) + fields, where=where)
    return cls(*(_num(d[k], f"{where}.{k}") for k in fields))


def _family_from_dict(d):
    if not isinstance(d, dict) or d.get("type") not in ("mcp", "ap"):
        raise ParseError("family.type must be 'mcp' or 'ap'")
    if d["type"] == "mcp":
        cls, fields = McpInstance, _MCP_FIELDS
    else:
        cls, fields = ApInstance, _AP_FIELDS
    _obj(d, ("type",) + fields, where="family")
    return cls(**{k: d[k] for k in fields})


def problem_from_dict(doc: dict):
    """Inverse of :func:`problem_to_dict`; returns ``(problem, family_or_None)``."""
    try:
        return _problem_from_dict(doc)
    except ParseError:
        raise
    except (SorError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid instance: {exc}") from exc


def _problem_from_dict(doc: dict):
    top = ("schema", "name", "m", "T", "lower", "upper", "terms", "constraints")
    _obj(doc, top, ("constant", "family"))
    if doc["schema"] != SCHEMA:
        raise ParseError(f"unsupported schema {doc['schema']!r}, expected {SCHEMA!r}")
    if not isinstance(doc["name"], str):
        raise ParseError("name must be a string")
    m, T = _int(doc["m"], "m"), _int(doc["T"], "T")
    if not isinstance(doc["terms"], list):
        raise ParseError("terms must be a list")
    terms = []
    for t, r in enumerate(doc["terms"]):
        w = f"terms[{t}]"
        _obj(r, ("a", "b", "g", "h"), where=w)
        if not isinstance(r["g"], list) or not isinstance(r["h"], list):
            raise ParseError(f"{w}.g and {w}.h must be lists")
        terms.append(RatioTerm(
            _num(r["a"], f"{w}.a"), _num(r["b"], f"{w}.b"),
            tuple(fn_from_dict(f, f"{w}.g[{i}]") for i, f in enumerate(r["g"])),
            tuple(fn_from_dict(f, f"{w}.h[{i}]") for i, f in enumerate(r["h"])),
        ))
    cons = _obj(doc["constraints"], ("linear_rows", "budget_rows"), where="constraints")
    lin = []
    for j, r in enumerate(cons["linear_rows"]):
        w = f"constraints.linear_rows[{j}]"
        _obj(r, ("coeff_x", "coeff_y", "rhs"), where=w)
        lin.append(LinearRow(_nums(r["coeff_x"], f"{w}.coeff_x"), _nums(r["coeff_y"], f"{w}.coeff_y"), _num(r["rhs"], f"{w}.rhs")))
    bud = []
    for j, r in enumerate(cons["budget_rows"]):
        w = f"constraints.budget_rows[{j}]"
        _obj(r, ("alpha", "rhs"), where=w)
        bud.append(BudgetRow(_nums(r["alpha"], f"{w}.alpha"), _num(r["rhs"], f"{w}.rhs")))
    problem = SorProblem(
        m=m, T=T, lower=_nums(doc["lower"], "lower"), upper=_nums(doc["upper"], "upper"),
        terms=tuple(terms), constraints=ConstraintSet(tuple(lin), tuple(bud)),
        constant=_num(doc.get("constant", 0.0), "constant"), name=doc["name"],
    )
    family = _family_from_dict(doc["family"]) if "family" in doc else None
    return problem, family


def loads(text: str):
    """Parse JSON text; malformed input raises :class:`ParseError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return problem_from_dict(doc)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads(text)
