"""Reading numeric CSV input and writing matrices, graphs and study tables.

External files use 1-based vertex indices.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import CondGraphError, DataMatrix, DepMatrix, Graph, validate_data

GRAPH_FORMATS = ("edge-list", "dot", "json-adjacency", "csv-matrix")
MATRIX_FORMATS = ("csv-matrix", "json")


class ParseError(CondGraphError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


def parse_csv(text: str) -> DataMatrix:
    """Parse comma-separated numeric data whose first row is the header."""
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("empty input")
    names = [c.strip() for c in rows[0]]
    p = len(names)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != p:
            raise ParseError(f"expected {p} fields, found {len(row)}", lineno)
        parsed = []
        for col, cell in enumerate(row, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"cannot parse {cell!r} as a number (column {names[col - 1]!r})", lineno, col
                ) from None
        values.append(parsed)
    return validate_data(np.array(values, dtype=float).reshape(len(values), p), names)


def read_csv(path) -> DataMatrix:
    return parse_csv(Path(path).read_text())


def write_data_csv(data: DataMatrix, path) -> None:
    lines = [",".join(data.names)]
    lines += [",".join(_num(v) for v in row) for row in data.values]
    atomic_write(path, "\n".join(lines) + "\n")


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename, so a
    failed run never leaves a partial file behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _csv_matrix(values: np.ndarray, names) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([""] + list(names))
    for name, row in zip(names, values):
        w.writerow([name] + [_num(v) if not isinstance(v, (np.integer, int)) else str(v) for v in row])
    return out.getvalue()


def dep_matrix_text(dep: DepMatrix, fmt: str = "csv-matrix") -> str:
    if fmt == "csv-matrix":
        return _csv_matrix(dep.values, dep.names)
    if fmt == "json":
        doc = {
            "p": dep.p,
            "names": list(dep.names),
            "values": [[float(v) for v in row] for row in dep.values],
            "excluded": [[i + 1, j + 1] for i, j in dep.excluded],
        }
        return json.dumps(doc, indent=1) + "\n"
    raise ValueError(f"unsupported matrix format {fmt!r}")


def exclusions_text(dep: DepMatrix) -> str:
    lines = ["i,j,name_i,name_j"]
    lines += [f"{i + 1},{j + 1},{dep.names[i]},{dep.names[j]}" for i, j in dep.excluded]
    return "\n".join(lines) + "\n"


def read_dep_matrix_csv(path) -> np.ndarray:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def graph_text(graph: Graph, fmt: str) -> str:
    names = graph.labels()
    edges = graph.sorted_edges()
    if fmt == "edge-list":
        lines = [f"{i + 1}\t{j + 1}\t{names[i]}\t{names[j]}" for i, j in edges]
        return "".join(line + "\n" for line in lines)
    if fmt == "json-adjacency":
        doc = {"p": graph.p, "names": list(names), "edges": [[i + 1, j + 1] for i, j in edges]}
        return json.dumps(doc) + "\n"
    if fmt == "dot":
        lines = ["graph G {"]
        lines += [f'  {k + 1} [label="{_dot_escape(s)}"];' for k, s in enumerate(names)]
        lines += [f"  {i + 1} -- {j + 1};" for i, j in edges]
        lines.append("}")
        return "\n".join(lines) + "\n"
    if fmt == "csv-matrix":
        return _csv_matrix(graph.adjacency(), names)
    raise ValueError(f"unsupported graph format {fmt!r}")


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def parse_graph_json(text: str) -> Graph:
    try:
        doc = json.loads(text)
        p = int(doc["p"])
        edges = [(int(a) - 1, int(b) - 1) for a, b in doc["edges"]]
        names = doc.get("names")
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"invalid json-adjacency document: {exc}") from exc
    return Graph(p, frozenset(edges), tuple(names) if names is not None else None)


def read_graph_json(path) -> Graph:
    return parse_graph_json(Path(path).read_text())


STUDY_COLUMNS = ("model", "method", "n", "reps", "mean_tpr", "mean_fpr", "sd_tpr", "sd_fpr",
                 "failures")


def study_table_text(summary) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(STUDY_COLUMNS)
    for r in summary:
        w.writerow([r.model, r.method, r.n, r.reps, _num(r.tpr), _num(r.fpr), _num(r.sd_tpr),
                    _num(r.sd_fpr), r.failures])
    return out.getvalue()


def replications_text(records, failures, model: str = "") -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("replicate", "model", "method", "n", "tpr", "fpr", "edges", "error"))
    rows = [(r.replicate, r.model, r.method, r.n, _num(r.tpr), _num(r.fpr), r.edges, "")
            for r in records]
    rows += [(f.replicate, model, f.method, "", "", "", "", f.error) for f in failures]
    rows.sort(key=lambda row: (row[0], row[2]))
    w.writerows(rows)
    return out.getvalue()
