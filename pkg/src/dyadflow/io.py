"""Flat-file ingestion and deterministic, atomic output.

Inputs are three CSVs:

* nodes: ``id`` followed by numeric covariate columns (blank = missing);
* dyads: ``i,j,D,CM`` with each unordered pair listed at least once;
* edges: ``src,dst,count``.

Every writer goes through a temporary file in the target directory followed
by ``os.replace``, so an interrupted run never leaves a truncated file.
Floats are written with ``repr`` and JSON with sorted keys, which makes the
bytes a pure function of the values.
"""

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InputError
from .network import build_network
from .srm import DyadTable, NodeTable

# -- reading ------------------------------------------------------------------


def _open_rows(path, required):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}:1: missing column(s) {missing}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            rows.append((line_no, dict(zip(header, (c.strip() for c in row)))))
    return path, header, rows


def _number(path, line_no, column, text, allow_blank=False):
    if text == "" and allow_blank:
        return float("nan")
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{path}:{line_no}: column {column!r} is not a number: {text!r}") from None
    if math.isinf(value) or (math.isnan(value) and not allow_blank):
        raise InputError(f"{path}:{line_no}: column {column!r} is not finite: {text!r}")
    return value


def read_nodes(path):
    path, header, rows = _open_rows(path, ["id"])
    names = [c for c in header if c != "id"]
    ids, values = [], {c: [] for c in names}
    seen = set()
    for line_no, row in rows:
        node = row["id"]
        if not node:
            raise InputError(f"{path}:{line_no}: empty node id")
        if node in seen:
            raise InputError(f"{path}:{line_no}: duplicate node id {node!r}")
        seen.add(node)
        ids.append(node)
        for c in names:
            values[c].append(_number(path, line_no, c, row[c], allow_blank=True))
    if not ids:
        raise InputError(f"{path}: no nodes")
    return NodeTable(tuple(ids), values)


def read_dyads(path, nodes):
    """Travel minutes and co-membership; a pair given twice must agree both ways."""
    path, _, rows = _open_rows(path, ["i", "j", "D", "CM"])
    order = tuple(nodes)
    idx = {v: k for k, v in enumerate(order)}
    n = len(order)
    dist = np.full((n, n), np.nan)
    cm = np.full((n, n), np.nan)
    for line_no, row in rows:
        i, j = row["i"], row["j"]
        for v in (i, j):
            if v not in idx:
                raise InputError(f"{path}:{line_no}: unknown node id {v!r}")
        if i == j:
            raise InputError(f"{path}:{line_no}: dyad row pairs node {i!r} with itself")
        d = _number(path, line_no, "D", row["D"])
        c = _number(path, line_no, "CM", row["CM"])
        if c not in (0.0, 1.0):
            raise InputError(f"{path}:{line_no}: CM must be 0 or 1")
        a, b = idx[i], idx[j]
        for mat, val, name in ((dist, d, "D"), (cm, c, "CM")):
            prev = mat[b, a]
            if not np.isnan(prev) and prev != val:
                raise InputError(f"{path}:{line_no}: {name} for ({i!r}, {j!r}) disagrees with the reverse row")
            mat[a, b] = mat[b, a] = val
    np.fill_diagonal(dist, 0.0)
    np.fill_diagonal(cm, 0.0)
    missing = np.argwhere(np.isnan(dist))
    if missing.size:
        a, b = missing[0]
        raise InputError(f"{path}: no dyad row for pair ({order[a]!r}, {order[b]!r})")
    return DyadTable(order, dist, cm)


def read_edges(path, nodes):
    path, _, rows = _open_rows(path, ["src", "dst", "count"])
    known = set(nodes)
    edges = []
    for line_no, row in rows:
        count = _number(path, line_no, "count", row["count"])
        for v in (row["src"], row["dst"]):
            if v not in known:
                raise InputError(f"{path}:{line_no}: unknown node id {v!r}")
        if count != int(count) or count < 0:
            raise InputError(f"{path}:{line_no}: count must be a non-negative integer")
        if row["src"] == row["dst"]:
            raise InputError(f"{path}:{line_no}: self-loop on node {row['src']!r}")
        edges.append((row["src"], row["dst"], int(count)))
    return build_network(nodes, edges)


# -- writing ------------------------------------------------------------------


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    return obj


def dumps(obj):
    """Canonical JSON: sorted keys, non-finite floats as null, trailing newline."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def atomic_write_bytes(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text(path, text):
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    return write_text(path, dumps(obj))


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return write_text(path, buf.getvalue())


def write_nodes(path, table):
    names = list(table.columns)
    rows = [[v] + [table.columns[c][k] for c in names] for k, v in enumerate(table.nodes)]
    return write_csv(path, ["id"] + names, rows)


def write_dyads(path, table):
    n = len(table.nodes)
    rows = [(table.nodes[i], table.nodes[j], table.distance[i, j], int(table.co_membership[i, j]))
            for i in range(n) for j in range(i + 1, n)]
    return write_csv(path, ["i", "j", "D", "CM"], rows)


def write_edges(path, net):
    rows = [(s, d, c) for (s, d), c in sorted(net.counts.items())]
    return write_csv(path, ["src", "dst", "count"], rows)


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
