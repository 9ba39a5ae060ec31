"""Value types shared across the package: data, coefficient matrices, graphs.

Vertices are 0-based everywhere inside the library. The I/O layer converts
to 1-based indices when writing or reading external files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class CondGraphError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CondGraphError, ValueError):
    pass


class NonFiniteError(ValidationError):
    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col}")


class TooFewRowsError(ValidationError):
    pass


class TooFewColsError(ValidationError):
    pass


class DuplicateNameError(ValidationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"duplicate column name {name!r}")


class DimensionMismatchError(CondGraphError, ValueError):
    pass


def default_names(p: int) -> tuple[str, ...]:
    return tuple(f"X{k + 1}" for k in range(p))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """An ``n x p`` sample with one label per column.

    Build instances with :func:`validate_data`; the constructor itself does
    not check invariants.
    """

    values: np.ndarray
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DataMatrix):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


def validate_data(raw, names: Sequence[str] | None = None) -> DataMatrix:
    """Check a raw sample and wrap it as a :class:`DataMatrix`.

    Accepts an existing ``DataMatrix`` (names are taken from it unless given),
    so validation is idempotent.

    Raises
    ------
    NonFiniteError
        First NaN/inf entry in row-major order.
    TooFewRowsError
        Fewer than two rows.
    TooFewColsError
        Fewer than three columns; every pair needs a nonempty conditioning set.
    DuplicateNameError
        Repeated column label.
    """
    if isinstance(raw, DataMatrix):
        if names is None:
            names = raw.names
        raw = raw.values
    try:
        values = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"data is not a rectangular numeric array: {exc}") from exc
    if values.ndim != 2:
        raise ValidationError(f"expected a 2-d array, got {values.ndim} dimension(s)")
    n, p = values.shape
    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        raise NonFiniteError(int(bad[0, 0]), int(bad[0, 1]))
    if n < 2:
        raise TooFewRowsError(f"need at least 2 rows, got {n}")
    if p < 3:
        raise TooFewColsError(f"need at least 3 columns, got {p}")
    if names is None:
        names = default_names(p)
    names = tuple(str(s) for s in names)
    if len(names) != p:
        raise ValidationError(f"got {len(names)} names for {p} columns")
    seen: set[str] = set()
    for s in names:
        if s in seen:
            raise DuplicateNameError(s)
        seen.add(s)
    return DataMatrix(_frozen(values), names)


@dataclass(frozen=True, eq=False)
class DepMatrix:
    """Estimated conditional dependence coefficients, one per ordered pair.

    ``values[i, j]`` is the coefficient of column ``i`` on column ``j`` given
    the rest. The diagonal is fixed at 1 and never used for selection.
    ``excluded`` lists ordered pairs whose estimate had a zero denominator;
    their entries are stored as 0.
    """

    values: np.ndarray
    names: tuple[str, ...]
    excluded: tuple[tuple[int, int], ...] = ()

    @property
    def p(self) -> int:
        return self.values.shape[0]


def _canonical(edges: Iterable[Sequence[int]], p: int) -> frozenset[tuple[int, int]]:
    out = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if i == j:
            raise ValidationError(f"self-loop on vertex {i}")
        if not (0 <= i < p and 0 <= j < p):
            raise ValidationError(f"edge ({i}, {j}) out of range for p={p}")
        out.add((i, j) if i < j else (j, i))
    return frozenset(out)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on vertices ``0..p-1``.

    Edges are stored once as ``(i, j)`` with ``i < j``; any orientation may
    be passed in.
    """

    p: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", _canonical(self.edges, self.p))
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.p:
                raise ValidationError(f"got {len(names)} names for {self.p} vertices")
            object.__setattr__(self, "names", names)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def labels(self) -> tuple[str, ...]:
        return self.names if self.names is not None else default_names(self.p)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=np.int8)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def __len__(self) -> int:
        return len(self.edges)

    @classmethod
    def complete(cls, p: int, names=None) -> "Graph":
        return cls(p, frozenset((i, j) for i in range(p) for j in range(i + 1, p)), names)

    @classmethod
    def from_adjacency(cls, adj, names=None) -> "Graph":
        a = np.asarray(adj)
        p = a.shape[0]
        iu, ju = np.triu_indices(p, 1)
        keep = (a[iu, ju] != 0) | (a[ju, iu] != 0)
        return cls(p, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())), names)


def _check_same_p(a: Graph, b: Graph) -> None:
    if a.p != b.p:
        raise DimensionMismatchError(f"graphs have {a.p} and {b.p} vertices")


def graph_equal(a: Graph, b: Graph) -> bool:
    _check_same_p(a, b)
    return a.edges == b.edges


def graph_diff(a: Graph, b: Graph) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Compare ``a`` against the reference ``b``.

    Returns ``(missing, extra)``: edges of ``b`` absent from ``a``, and edges
    of ``a`` absent from ``b``.
    """
    _check_same_p(a, b)
    return set(b.edges - a.edges), set(a.edges - b.edges)


@dataclass(frozen=True)
class SelectionConfig:
    """Threshold settings for edge selection.

    ``lam=None`` means the calibrated default ``1/n``, resolved against the
    data at selection time.
    """

    lam: float | None = None
    rule: str = "ge"
    seed: int = 0

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.rule not in ("ge", "gt"):
            raise ValidationError(f"unknown edge rule {self.rule!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    def resolve_lambda(self, n: int) -> float:
        return 1.0 / n if self.lam is None else float(self.lam)
