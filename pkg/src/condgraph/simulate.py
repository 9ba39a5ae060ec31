"""Synthetic benchmark models with known graphs, TPR/FPR, replication studies.

Models M1-M4 share the graph 1-2, 1-3, 3-4, 5-6 (1-based) and M5-M6 a chain
over vertices 1..12; every remaining column is independent N(0, 1) noise.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import CondGraphError, DataMatrix, Graph, SelectionConfig, ValidationError, validate_data
from .precision import PgConfig, glasso_path, glasso_support, lambda_path, npn_skeptic, sample_correlation
from .selection import ggm_recover

log = logging.getLogger(__name__)

MODELS = ("M1", "M2", "M3", "M4", "M5", "M6")
METHODS = ("GGM", "Glasso", "GlassoNpn")
_TAG_DATA = 3
_TAG_REP = 4


class BadDimensionError(CondGraphError, ValueError):
    pass


class NoTrueEdgesError(CondGraphError, ValueError):
    pass


def _min_p(model_id: str) -> int:
    return 13 if model_id in ("M5", "M6") else 7


@dataclass(frozen=True)
class SimModel:
    id: str
    n: int
    p: int = 100
    seed: int = 0
    exp_param: str = "rate"

    def __post_init__(self):
        if self.id not in MODELS:
            raise ValidationError(f"unknown model {self.id!r}; expected one of {MODELS}")
        if self.p < _min_p(self.id):
            raise BadDimensionError(f"{self.id} needs p >= {_min_p(self.id)}, got {self.p}")
        if self.n < 2:
            raise ValidationError("n must be >= 2")
        if self.exp_param not in ("rate", "mean"):
            raise ValidationError("exp_param must be 'rate' or 'mean'")


def _seed_words(seed: int, *extra: int) -> list[int]:
    s = int(seed)
    return [s & 0xFFFFFFFF, s >> 32, *extra]


def replication_seed(study_seed: int, r: int) -> int:
    """64-bit seed of replication ``r``; independent of execution order."""
    lo, hi = np.random.SeedSequence(_seed_words(study_seed, _TAG_REP, r)).generate_state(2)
    return int(lo) | (int(hi) << 32)


def true_graph(model_id: str, p: int = 100) -> Graph:
    if p < _min_p(model_id):
        raise BadDimensionError(f"{model_id} needs p >= {_min_p(model_id)}, got {p}")
    if model_id in ("M1", "M2", "M3", "M4"):
        edges = [(0, 1), (0, 2), (2, 3), (4, 5)]
    elif model_id in ("M5", "M6"):
        edges = [(0, 1)]
        for j in range(10):
            edges += [(j, j + 2), (j + 1, j + 2)]
    else:
        raise ValidationError(f"unknown model {model_id!r}")
    return Graph(p, frozenset(edges))


def _t3(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal(n)
    chi2 = (rng.standard_normal((n, 3)) ** 2).sum(axis=1)
    return z / np.sqrt(chi2 / 3.0)


def generate(model: SimModel) -> tuple[DataMatrix, Graph]:
    """Draw ``model.n`` i.i.d. rows and return them with the true graph.

    ``Ex(r)`` is exponential with rate ``r`` (``exp_param="rate"``) or with
    mean ``r`` (``exp_param="mean"``).
    """
    rng = np.random.default_rng(np.random.SeedSequence(_seed_words(model.seed, _TAG_DATA)))
    n, p = model.n, model.p

    def ex(r):
        return rng.exponential(1.0 / r if model.exp_param == "rate" else r, n)

    X = rng.standard_normal((n, p))
    mid = model.id
    if mid in ("M1", "M2", "M3", "M4"):
        if mid in ("M1", "M3"):
            X[:, 1] = ex(1.0)
            X[:, 3] = _t3(rng, n)
            X[:, 5] = ex(3.0)
        eps = rng.standard_normal((n, 3))
        if mid in ("M1", "M2"):
            X[:, 2] = 0.1 * X[:, 3] + eps[:, 0]
            X[:, 0] = 0.2 * X[:, 1] + X[:, 2] + eps[:, 1]
            X[:, 4] = 0.1 * X[:, 5] + eps[:, 2]
        else:
            X[:, 2] = 0.1 * np.exp(X[:, 3]) + eps[:, 0]
            X[:, 0] = 0.2 * np.sin(X[:, 1]) + np.sin(X[:, 2]) + eps[:, 1]
            X[:, 4] = 0.2 * np.exp(X[:, 5]) + eps[:, 2]
    else:
        if mid == "M5":
            X[:, 0] = ex(1.0)
            X[:, 1] = ex(3.0)
        eps = rng.standard_normal((n, 10))
        for j in range(10):
            if mid == "M5":
                X[:, j + 2] = 0.2 * X[:, j] + 0.3 * X[:, j + 1] + eps[:, j]
            else:
                X[:, j + 2] = 0.2 * np.sin(X[:, j]) + 0.3 * np.sin(X[:, j + 1]) + eps[:, j]
    return validate_data(X), true_graph(mid, p)


@dataclass(frozen=True)
class MetricsRecord:
    tpr: float
    fpr: float
    model: str = ""
    method: str = ""
    n: int = 0
    reps: int = 1
    sd_tpr: float = 0.0
    sd_fpr: float = 0.0
    failures: int = 0
    replicate: int | None = None
    edges: int = 0


def tpr_fpr(predicted: Graph, truth: Graph) -> MetricsRecord:
    """True/false positive rates over unordered vertex pairs."""
    if predicted.p != truth.p:
        raise ValidationError(f"graphs have {predicted.p} and {truth.p} vertices")
    if not truth.edges:
        raise NoTrueEdgesError("TPR is undefined for a graph without edges")
    p = truth.p
    non_edges = p * (p - 1) // 2 - len(truth.edges)
    tp = len(predicted.edges & truth.edges)
    fp = len(predicted.edges - truth.edges)
    fpr = fp / non_edges if non_edges else 0.0
    return MetricsRecord(tp / len(truth.edges), fpr, edges=len(predicted.edges))


@dataclass(frozen=True)
class StudySettings:
    lam: float | None = None
    rank_convention: str = "ge"
    glasso_lambdas: int = 10
    glasso_ratio: float = 0.1
    glasso_tol: float = 1e-7
    glasso_max_iter: int = 500


def _glasso_graph(S, settings: StudySettings) -> Graph:
    cfg = PgConfig(tol=settings.glasso_tol, max_iter=settings.glasso_max_iter)
    path = glasso_path(S, lambda_path(S, settings.glasso_lambdas, settings.glasso_ratio), cfg)
    return glasso_support(path[-1])


def run_method(method: str, data: DataMatrix, seed: int, settings: StudySettings) -> Graph:
    if method == "GGM":
        cfg = SelectionConfig(lam=settings.lam, seed=seed)
        return ggm_recover(data, cfg, rank_convention=settings.rank_convention, threads=1).graph
    if method == "Glasso":
        return _glasso_graph(sample_correlation(data), settings)
    if method == "GlassoNpn":
        return _glasso_graph(npn_skeptic(data), settings)
    raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class Failure:
    replicate: int
    method: str
    error: str


def _one_replication(args):
    model, r, methods, settings = args
    rep_model = replace(model, seed=replication_seed(model.seed, r))
    records, failures = [], []
    try:
        data, truth = generate(rep_model)
    except CondGraphError as exc:
        return records, [Failure(r, m, f"{type(exc).__name__}: {exc}") for m in methods]
    for m in methods:
        try:
            graph = run_method(m, data, rep_model.seed, settings)
            rec = tpr_fpr(graph, truth)
        except (CondGraphError, np.linalg.LinAlgError, FloatingPointError) as exc:
            failures.append(Failure(r, m, f"{type(exc).__name__}: {exc}"))
            continue
        records.append(replace(rec, model=model.id, method=m, n=model.n, replicate=r))
    return records, failures


@dataclass
class StudyResult:
    summary: list[MetricsRecord]
    replications: list[MetricsRecord] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)

    def get(self, method: str) -> MetricsRecord:
        for rec in self.summary:
            if rec.method == method:
                return rec
        raise KeyError(method)


def _mean_sd(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values)
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), sd


def run_study(model: SimModel, methods=("GGM",), reps: int = 100,
              settings: StudySettings | None = None, workers: int | None = None) -> StudyResult:
    """Replicate ``generate -> method -> tpr_fpr`` and average per method.

    Replication ``r`` draws its data with ``replication_seed(model.seed, r)``;
    the same seed drives GGM tie-breaking. Failed replications are listed
    and left out of the averages.
    """
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}; expected one of {METHODS}")
    settings = settings or StudySettings()
    jobs = [(model, r, methods, settings) for r in range(reps)]
    workers = workers if workers and workers > 0 else (os.cpu_count() or 1)
    if workers > 1 and reps > 1:
        with ProcessPoolExecutor(min(workers, reps)) as pool:
            outs = list(pool.map(_one_replication, jobs))
    else:
        outs = [_one_replication(j) for j in jobs]
    records = [rec for recs, _ in outs for rec in recs]
    failures = [f for _, fs in outs for f in fs]
    for f in failures:
        log.warning("replication %d, %s failed: %s", f.replicate, f.method, f.error)
    summary = []
    for m in methods:
        mine = [rec for rec in records if rec.method == m]
        mt, st = _mean_sd([rec.tpr for rec in mine])
        mf, sf = _mean_sd([rec.fpr for rec in mine])
        summary.append(MetricsRecord(
            mt, mf, model.id, m, model.n, len(mine), st, sf,
            failures=sum(1 for f in failures if f.method == m),
        ))
    return StudyResult(summary, records, failures)
