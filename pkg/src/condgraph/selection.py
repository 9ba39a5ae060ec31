"""From a coefficient matrix to an undirected graph."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .codec import codec_matrix
from .core import (
    CondGraphError,
    DataMatrix,
    DepMatrix,
    Graph,
    SelectionConfig,
    ValidationError,
    validate_data,
)

log = logging.getLogger(__name__)


class NegativeLambdaError(CondGraphError, ValueError):
    pass


@dataclass(frozen=True)
class ThresholdedMatrix:
    values: np.ndarray
    lam: float

    @property
    def p(self) -> int:
        return self.values.shape[0]


def _square(m) -> np.ndarray:
    a = np.asarray(m.values if isinstance(m, DepMatrix) else m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    return a


def symmetrize_max(r) -> np.ndarray:
    """``out[i, j] = max(|r[i, j]|, |r[j, i]|)`` off the diagonal; the
    diagonal is copied unchanged."""
    a = _square(r)
    out = np.maximum(np.abs(a), np.abs(a).T)
    np.fill_diagonal(out, np.diag(a))
    return out


def soft_threshold(m, lam: float) -> ThresholdedMatrix:
    """Closed-form minimiser of ``0.5 * ||m - S||_F^2 + lam * ||S||_1,off``.

    Off-diagonal entries become ``sign(x) * max(|x| - lam, 0)``; the
    diagonal is not penalised and is returned as is.
    """
    if not lam >= 0:
        raise NegativeLambdaError(f"lambda must be >= 0, got {lam}")
    a = _square(m)
    out = np.sign(a) * np.maximum(np.abs(a) - lam, 0.0)
    np.fill_diagonal(out, np.diag(a))
    return ThresholdedMatrix(out, float(lam))


def select_edges(m, config: SelectionConfig | float, names=None) -> Graph:
    """Edges ``{i, j}`` whose (symmetric) score reaches the threshold.

    With the default ``"ge"`` rule an edge needs ``m[i, j] >= lam``; with
    ``"gt"`` it needs ``m[i, j] > lam``. Exact zeros are never selected, so
    ``lam = 0`` gives the nonzero pattern.
    """
    if not isinstance(config, SelectionConfig):
        config = SelectionConfig(lam=float(config))
    if config.lam is None:
        raise ValidationError("select_edges needs an explicit lambda")
    lam = config.lam
    a = _square(m)
    p = a.shape[0]
    iu, ju = np.triu_indices(p, 1)
    v = a[iu, ju]
    hit = (v >= lam) if config.rule == "ge" else (v > lam)
    hit &= v != 0
    return Graph(p, frozenset(zip(iu[hit].tolist(), ju[hit].tolist())), names)


@dataclass(frozen=True)
class GgmResult:
    graph: Graph
    dep: DepMatrix
    lam: float

    @property
    def excluded(self) -> tuple[tuple[int, int], ...]:
        return self.dep.excluded


def ggm_recover(data, config: SelectionConfig | None = None, *,
                rank_convention: str = "ge", threads: int | None = None) -> GgmResult:
    """Estimate all coefficients, max-symmetrise and threshold.

    Ordered pairs with an undefined coefficient carry no evidence (they are
    stored as 0) and are reported in ``result.excluded``.
    """
    dm = data if isinstance(data, DataMatrix) else validate_data(data)
    config = config or SelectionConfig()
    lam = config.resolve_lambda(dm.n)
    dep = codec_matrix(dm, config.seed, rank_convention=rank_convention, threads=threads)
    if dep.excluded:
        log.warning("%d ordered pair(s) had a zero denominator and were excluded",
                    len(dep.excluded))
    sym = symmetrize_max(dep)
    graph = select_edges(sym, SelectionConfig(lam=lam, rule=config.rule, seed=config.seed),
                         names=dm.names)
    return GgmResult(graph, dep, lam)


def theorem3_band(r_min: float, c_a_n: float) -> tuple[float, float] | None:
    """Range of thresholds ``[c_a_n, r_min - c_a_n]`` that separates every
    nonzero coefficient (at least ``r_min``) from zero when the estimation
    error is at most ``c_a_n``. ``None`` when ``r_min <= 2 * c_a_n``."""
    if not (r_min > 0 and c_a_n > 0):
        raise ValidationError("r_min and c_a_n must be positive")
    if r_min > 2 * c_a_n:
        return (c_a_n, r_min - c_a_n)
    return None


def support_graph(target, names=None) -> Graph:
    """Graph of the nonzero off-diagonal pattern of a matrix (either
    triangle counts)."""
    a = _square(target)
    return Graph.from_adjacency((a != 0) | (a.T != 0), names)
