"""Partial-correlation graphs from estimated precision matrices.

Covers the sample covariance, the rank-based (Kendall tau) correlation
estimate for Gaussian copula data, the graphical lasso with an
off-diagonal L1 penalty, a ridge-inverse baseline and threshold selection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from .core import CondGraphError, DataMatrix, Graph, ValidationError, validate_data


class NotConvergedError(CondGraphError, RuntimeError):
    def __init__(self, max_iter: int, partial: "PrecisionEstimate"):
        self.max_iter = max_iter
        self.partial = partial
        super().__init__(
            f"graphical lasso did not converge in {max_iter} iterations "
            f"(last change {partial.last_change:.3g}, KKT residual {partial.kkt_residual:.3g})"
        )


class SingularInputError(CondGraphError, np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PgConfig:
    lam: float | None = None
    t_n: float | None = None
    tol: float = 1e-7
    max_iter: int = 500

    def __post_init__(self):
        if self.lam is not None and not self.lam >= 0:
            raise ValidationError(f"lambda must be >= 0, got {self.lam}")
        if self.t_n is not None and not self.t_n > 0:
            raise ValidationError(f"t_n must be > 0, got {self.t_n}")
        if not self.tol > 0:
            raise ValidationError("tol must be > 0")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")


@dataclass(frozen=True)
class PrecisionEstimate:
    values: np.ndarray
    lam: float
    iterations: int = 0
    kkt_residual: float = 0.0
    covariance: np.ndarray | None = None
    last_change: float = 0.0

    @property
    def p(self) -> int:
        return self.values.shape[0]


def _values(data) -> np.ndarray:
    if isinstance(data, DataMatrix):
        return data.values
    return validate_data(data).values


def sample_covariance(data) -> np.ndarray:
    """Unbiased sample covariance, ``1/(n-1)`` normalisation."""
    X = _values(data)
    centred = X - X.mean(axis=0)
    S = centred.T @ centred / (X.shape[0] - 1)
    return (S + S.T) / 2


def sample_correlation(data) -> np.ndarray:
    S = sample_covariance(data)
    d = np.sqrt(np.diag(S))
    d[d == 0] = 1.0
    C = S / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    return C


def kendall_tau_matrix(X: np.ndarray) -> np.ndarray:
    """Pairwise Kendall tau-b of the columns of ``X``.

    Pairs involving a constant column get 0.
    """
    n, p = X.shape
    if p * n * n > 40_000_000:
        tau = np.eye(p)
        for a in range(p):
            for b in range(a + 1, p):
                t = stats.kendalltau(X[:, a], X[:, b]).statistic
                tau[a, b] = tau[b, a] = 0.0 if np.isnan(t) else t
        return tau
    iu, ju = np.triu_indices(n, 1)
    signs = np.sign(X[iu] - X[ju]).T  # p x n(n-1)/2
    cross = signs @ signs.T
    norm = np.sqrt(np.outer(np.diag(cross), np.diag(cross)))
    with np.errstate(invalid="ignore", divide="ignore"):
        tau = np.where(norm > 0, cross / norm, 0.0)
    np.fill_diagonal(tau, 1.0)
    return np.clip(tau, -1.0, 1.0)


def npn_skeptic(data, floor: float = 1e-8) -> np.ndarray:
    """Correlation estimate ``sin(pi/2 * tau)`` from pairwise Kendall tau.

    The result can be indefinite; in that case eigenvalues are clipped at
    ``floor`` to get a positive semi-definite matrix.
    """
    X = _values(data)
    C = np.sin(np.pi / 2 * kendall_tau_matrix(X))
    np.fill_diagonal(C, 1.0)
    C = (C + C.T) / 2
    w, V = np.linalg.eigh(C)
    if w.min() < 0:
        C = (V * np.maximum(w, floor)) @ V.T
        C = (C + C.T) / 2
    return C


@numba.njit(cache=True)
def _bcd_sweep(W, S, B, lam, inner_tol, inner_max):
    """One pass of block coordinate descent over all columns, in place.

    For column ``j`` solves the lasso ``min_b 0.5 b'Vb - s'b + lam |b|_1``
    with ``V`` = ``W`` without row/column ``j`` and ``s = S[-j, j]`` by
    cyclic coordinate descent, then sets ``W[-j, j] = V b``.
    """
    p = W.shape[0]
    g = np.zeros(p)
    for j in range(p):
        for k in range(p):
            acc = 0.0
            if k != j:
                for l in range(p):
                    if l != j:
                        acc += W[k, l] * B[l, j]
            g[k] = acc
        for _ in range(inner_max):
            dmax = 0.0
            for k in range(p):
                if k == j:
                    continue
                old = B[k, j]
                r = S[k, j] - (g[k] - W[k, k] * old)
                if r > lam:
                    new = (r - lam) / W[k, k]
                elif r < -lam:
                    new = (r + lam) / W[k, k]
                else:
                    new = 0.0
                if new != old:
                    d = new - old
                    for l in range(p):
                        if l != j:
                            g[l] += W[l, k] * d
                    B[k, j] = new
                    step = abs(d) * W[k, k]
                    if step > dmax:
                        dmax = step
            if dmax < inner_tol:
                break
        for k in range(p):
            if k != j:
                W[k, j] = g[k]
                W[j, k] = g[k]


def _precision_from(W: np.ndarray, B: np.ndarray) -> np.ndarray:
    p = W.shape[0]
    K = np.zeros((p, p))
    for j in range(p):
        mask = np.arange(p) != j
        kjj = 1.0 / (W[j, j] - W[mask, j] @ B[mask, j])
        K[j, j] = kjj
        K[mask, j] = -B[mask, j] * kjj
    return (K + K.T) / 2


def glasso_kkt_residual(S, K, lam: float) -> float:
    """Largest violation of the optimality conditions of
    ``log det K - tr(SK) - lam * ||K||_1,off``."""
    S = np.asarray(S, dtype=float)
    K = np.asarray(K, dtype=float)
    G = np.linalg.inv(K) - S
    off = ~np.eye(K.shape[0], dtype=bool)
    worst = float(np.max(np.abs(np.diag(G)))) if K.size else 0.0
    nz = off & (K != 0)
    if nz.any():
        worst = max(worst, float(np.max(np.abs(G[nz] - lam * np.sign(K[nz])))))
    z = off & (K == 0)
    if z.any():
        worst = max(worst, float(np.max(np.abs(G[z]))) - lam)
    return max(worst, 0.0)


def _check_cov(s) -> np.ndarray:
    S = np.asarray(s, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {S.shape}")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise ValidationError("covariance input is not symmetric")
    return (S + S.T) / 2


def glasso(s, config: PgConfig | None = None, *, warm_start: PrecisionEstimate | None = None
           ) -> PrecisionEstimate:
    """Graphical lasso with an unpenalised diagonal.

    Maximises ``log det K - tr(SK) - lam * sum_{i != j} |K_ij|`` by block
    coordinate descent on the working covariance ``W``. Converged when the
    largest change of ``W`` over a sweep is below ``tol * mean(|diag S|)``.

    Raises
    ------
    SingularInputError
        ``lam == 0`` with a singular ``s``, or a zero variance.
    NotConvergedError
        ``max_iter`` sweeps without convergence; the partial estimate is
        attached.
    """
    config = config or PgConfig()
    S = _check_cov(s)
    p = S.shape[0]
    lam = 0.0 if config.lam is None else float(config.lam)
    diag = np.diag(S)
    if np.any(diag <= 0):
        raise SingularInputError("covariance has a zero variance")
    if lam == 0 and np.linalg.eigvalsh(S).min() <= 1e-12 * diag.max():
        raise SingularInputError("lambda = 0 requires a positive definite covariance")
    if warm_start is not None and warm_start.covariance is not None:
        W = warm_start.covariance.copy()
        K0 = warm_start.values
        B = -K0 / np.diag(K0)[None, :]
        np.fill_diagonal(B, 0.0)
    else:
        W = 0.95 * S
        np.fill_diagonal(W, diag)
        B = np.zeros((p, p))
    np.fill_diagonal(W, diag)
    scale = float(np.mean(np.abs(diag)))
    inner_tol = 0.1 * config.tol * scale
    change = np.inf
    it = 0
    for it in range(1, config.max_iter + 1):
        before = W.copy()
        _bcd_sweep(W, S, B, lam, inner_tol, 10_000)
        change = float(np.max(np.abs(W - before)))
        if change < config.tol * scale:
            break
    K = _precision_from(W, B)
    est = PrecisionEstimate(K, lam, it, glasso_kkt_residual(S, K, lam), W.copy(), change)
    if change >= config.tol * scale:
        raise NotConvergedError(config.max_iter, est)
    return est


def lambda_path(s, n_lambdas: int = 10, ratio: float = 0.1) -> np.ndarray:
    """Log-spaced penalties from the largest off-diagonal ``|s_ij|`` down to
    ``ratio`` times that value, in decreasing order."""
    S = np.asarray(s, dtype=float)
    off = np.abs(S[~np.eye(S.shape[0], dtype=bool)])
    lam_max = float(off.max()) if off.size else 0.0
    if lam_max == 0:
        return np.zeros(n_lambdas)
    return np.logspace(math.log10(lam_max), math.log10(lam_max * ratio), n_lambdas)


def glasso_path(s, lambdas, config: PgConfig | None = None) -> list[PrecisionEstimate]:
    """Fits along a decreasing penalty sequence, each warm-started from the
    previous solution."""
    config = config or PgConfig()
    out = []
    prev = None
    for lam in sorted((float(v) for v in lambdas), reverse=True):
        cfg = PgConfig(lam=lam, t_n=config.t_n, tol=config.tol, max_iter=config.max_iter)
        prev = glasso(s, cfg, warm_start=prev)
        out.append(prev)
    return out


def ridge_precision(s, epsilon: float) -> PrecisionEstimate:
    """Dense baseline ``(S + epsilon I)^{-1}``."""
    if not epsilon > 0:
        raise ValidationError("epsilon must be > 0")
    S = _check_cov(s)
    K = np.linalg.inv(S + epsilon * np.eye(S.shape[0]))
    return PrecisionEstimate((K + K.T) / 2, 0.0)


def default_tn(n: int, p: int) -> float:
    """``2 * sqrt(log p / n)``."""
    return 2.0 * math.sqrt(math.log(p) / n)


def pg_select(k, t_n: float, names=None) -> Graph:
    """Edges where ``|K_ij| >= t_n``."""
    if not t_n > 0:
        raise ValidationError(f"t_n must be > 0, got {t_n}")
    K = np.asarray(k.values if isinstance(k, PrecisionEstimate) else k, dtype=float)
    A = np.maximum(np.abs(K), np.abs(K).T)
    p = K.shape[0]
    iu, ju = np.triu_indices(p, 1)
    hit = A[iu, ju] >= t_n
    return Graph(p, frozenset(zip(iu[hit].tolist(), ju[hit].tolist())), names)


def glasso_support(k, names=None) -> Graph:
    """Nonzero off-diagonal pattern of a precision estimate."""
    K = np.asarray(k.values if isinstance(k, PrecisionEstimate) else k)
    return Graph.from_adjacency(K != 0, names)
