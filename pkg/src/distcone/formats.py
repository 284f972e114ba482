"""JSON and CSV encodings of matrices, triples, polytopes and fingerprints.

Matrix JSON::

    {"order": n, "upper": [r_12, r_13, r_23, r_14, ...]}

Rational entries are written as integers or ``"p/q"`` strings; a file whose
entries are all integers or strings is read in the rational domain, anything
with a JSON float is read in the float domain. An optional ``"domain"`` key
overrides the inference. CSV files hold the full symmetric square.
"""
from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path

import numpy as np

from .cone import FLOAT, RATIONAL, DistanceMatrix, StructureError, to_fraction

FORMAT_VERSION = "1"


class FormatError(StructureError):
    """Malformed file; ``location`` names the offending line or field."""

    def __init__(self, message: str, source: str | None = None, location: str | None = None):
        self.source = source
        self.location = location
        where = ":".join(x for x in (source, location) if x)
        super().__init__(f"{where}: {message}" if where else message)


def num_to_json(x):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _num_from_json(x, where: str, source):
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise FormatError(f"expected a number, got {x!r}", source, where)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise FormatError(f"cannot parse {x!r} as p/q", source, where) from None
    return x


def matrix_to_json(r: DistanceMatrix, **extra) -> dict:
    out = {"order": r.order, "domain": r.domain, "upper": [num_to_json(x) for x in r.upper()]}
    out.update(extra)
    return out


def matrix_from_json(obj, source: str | None = None) -> DistanceMatrix:
    if not isinstance(obj, dict):
        raise FormatError("matrix must be a JSON object", source)
    for key in ("order", "upper"):
        if key not in obj:
            raise FormatError(f"missing field {key!r}", source, key)
    order = obj["order"]
    if isinstance(order, bool) or not isinstance(order, int) or order < 1:
        raise FormatError(f"order must be a positive integer, got {order!r}", source, "order")
    upper = obj["upper"]
    if not isinstance(upper, list):
        raise FormatError("upper must be a list", source, "upper")
    expected = order * (order - 1) // 2
    if len(upper) != expected:
        raise FormatError(f"order {order} needs {expected} entries, got {len(upper)}", source, "upper")
    vals = [_num_from_json(x, f"upper[{k}]", source) for k, x in enumerate(upper)]
    domain = obj.get("domain")
    if domain is not None and domain not in (RATIONAL, FLOAT):
        raise FormatError(f"unknown domain {domain!r}", source, "domain")
    if domain == FLOAT:
        vals = [float(v) for v in vals]
    elif domain == RATIONAL:
        vals = [to_fraction(v) for v in vals]
    return DistanceMatrix.from_upper(order, vals, domain=domain)


def matrix_to_csv(r: DistanceMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in r.to_array():
        w.writerow([num_to_json(x) for x in row])
    return buf.getvalue()


def matrix_from_csv(text: str, source: str | None = None, domain: str | None = None) -> DistanceMatrix:
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        vals = []
        for col, cell in enumerate(row, start=1):
            cell = cell.strip()
            try:
                if "/" in cell or cell.lstrip("-").isdigit():
                    vals.append(Fraction(cell))
                else:
                    vals.append(float(cell))
            except (ValueError, ZeroDivisionError):
                raise FormatError(f"cannot parse {cell!r}", source, f"line {lineno}, field {col}") from None
        rows.append(vals)
    if not rows:
        raise FormatError("empty CSV", source)
    n = len(rows)
    for lineno, row in enumerate(rows, start=1):
        if len(row) != n:
            raise FormatError(f"{len(row)} fields, expected {n}", source, f"line {lineno}")
    try:
        return DistanceMatrix(rows, domain=domain)
    except StructureError as exc:
        raise FormatError(str(exc), source) from None


def load_matrix(path) -> DistanceMatrix:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        return matrix_from_csv(text, source=str(path))
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, str(path), f"line {exc.lineno}, column {exc.colno}") from None
    if isinstance(obj, dict) and "matrix" in obj and "upper" not in obj:
        obj = obj["matrix"]
    return matrix_from_json(obj, source=str(path))


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def polytope_to_json(P, vertices) -> dict:
    return {
        "format": f"distcone.polytope/{FORMAT_VERSION}",
        "base": matrix_to_json(P.base),
        "constraints": [c.as_dict() for c in P.constraints],
        "vertices": [[num_to_json(x) for x in v] for v in vertices],
        "ray": [num_to_json(x) for x in P.ray],
    }


def triple_to_json(T) -> dict:
    return T.as_dict()


def triple_from_json(obj, source: str | None = None):
    from .distribution import MetricTriple

    if not isinstance(obj, dict):
        raise FormatError("triple must be a JSON object", source)
    for key in ("metric_upper", "weights"):
        if key not in obj:
            raise FormatError(f"missing field {key!r}", source, key)
    upper, weights = obj["metric_upper"], obj["weights"]
    if not isinstance(upper, list) or not isinstance(weights, list):
        raise FormatError("metric_upper and weights must be lists", source)
    n = len(weights)
    points = obj.get("points")
    if points is not None and (not isinstance(points, list) or len(points) != n):
        raise FormatError(f"points must be a list of {n} labels", source, "points")
    if len(upper) != n * (n - 1) // 2:
        raise FormatError(f"{n} weights need {n * (n - 1) // 2} metric entries, got {len(upper)}",
                          source, "metric_upper")
    metric = matrix_from_json({"order": n, "upper": upper, **({"domain": obj["domain"]} if "domain" in obj else {})},
                              source)
    w = [_num_from_json(x, f"weights[{k}]", source) for k, x in enumerate(weights)]
    return MetricTriple(points, metric, w)


def load_triple(path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, str(path), f"line {exc.lineno}, column {exc.colno}") from None
    return triple_from_json(obj, source=str(path))


def fingerprint_to_json(f, **extra) -> dict:
    out = {
        "format": f"distcone.fingerprint/{FORMAT_VERSION}",
        "k": f.k,
        "num_samples": f.num_samples,
        "bin_edges": [float(x) for x in f.bin_edges],
        "counts": [list(key) + [c] for key, c in sorted(f.counts.items())],
        "overflow": f.overflow,
        "seed": f.seed,
        "generator": f.generator,
    }
    if f.meta:
        out["meta"] = f.meta
    out.update(extra)
    return out


def fingerprint_from_json(obj, source: str | None = None):
    from .distribution import Fingerprint

    if not isinstance(obj, dict):
        raise FormatError("fingerprint must be a JSON object", source)
    for key in ("k", "num_samples", "bin_edges", "counts"):
        if key not in obj:
            raise FormatError(f"missing field {key!r}", source, key)
    k = obj["k"]
    if not isinstance(k, int) or k < 2:
        raise FormatError("k must be an integer >= 2", source, "k")
    P = k * (k - 1) // 2
    edges = np.asarray(obj["bin_edges"], dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise FormatError("bin edges must be strictly increasing", source, "bin_edges")
    counts = {}
    for n, row in enumerate(obj["counts"]):
        if not isinstance(row, list) or len(row) != P + 1 or not all(isinstance(x, int) for x in row):
            raise FormatError(f"expected {P} bin indices and a count", source, f"counts[{n}]")
        if any(not 0 <= b < len(edges) for b in row[:P]) or row[P] < 1:
            raise FormatError("bin index or count out of range", source, f"counts[{n}]")
        counts[tuple(row[:P])] = row[P]
    total = sum(counts.values())
    if total != obj["num_samples"]:
        raise FormatError(f"counts sum to {total}, not num_samples", source, "counts")
    return Fingerprint(k, obj["num_samples"], edges, counts, obj.get("seed"),
                       obj.get("generator", ""), int(obj.get("overflow", 0)), obj.get("meta", {}))


def load_fingerprint(path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, str(path), f"line {exc.lineno}, column {exc.colno}") from None
    return fingerprint_from_json(obj, source=str(path))
