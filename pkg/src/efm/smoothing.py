"""Quadratic (order-2) l1 trend filtering of daily climatologies.

Solves ``min_b 0.5*||y - b||^2 + lam*||D b||_1`` with ``D`` the third-order
difference operator, by ADMM (Ramdas & Tibshirani splitting) with a banded
Cholesky factorisation for the quadratic step. Every few
iterations the ADMM support estimate is polished into an exact KKT solution;
when the polished point passes the optimality check the solver stops early.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import cho_solve_banded, cholesky_banded
from numba import njit
from scipy.sparse.linalg import splu

from .errors import NoConvergence, NoConvergenceWarning, ValidationError

ORDER = 2


@dataclass(frozen=True)
class SmootherConfig:
    lam: float = 1250.0
    order: int = ORDER
    max_iter: int = 5000
    tol: float = 1e-6
    polish_every: int = 25

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValidationError("lambda must be nonnegative")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.order != ORDER:
            raise ValidationError("only quadratic (order 2) trend filtering is supported")


@dataclass
class TrendFilterResult:
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    polished: bool


def difference_matrix(n: int, k: int = ORDER + 1):
    """Sparse k-th order forward difference operator, shape (n - k, n)."""
    d = sparse.identity(n, format="csr")
    for _ in range(k):
        m = d.shape[0]
        d = (sparse.eye(m - 1, m, k=1) - sparse.eye(m - 1, m)) @ d
    return d.tocsr()


def objective(y, beta, lam) -> float:
    y = np.asarray(y, float)
    beta = np.asarray(beta, float)
    d = np.diff(beta, n=ORDER + 1)
    return 0.5 * float(np.dot(y - beta, y - beta)) + lam * float(np.abs(d).sum())


def _banded_system(DtD_diags, rho, n):
    w = len(DtD_diags)
    ab = np.zeros((w, n))
    for k in range(w):
        ab[w - 1 - k, k:] = rho * DtD_diags[k]
    ab[w - 1] += 1.0
    return cholesky_banded(ab, lower=False)


def _polish(y, D, lam, Db, thresh):
    """Exact solution for the sign/support pattern of ``Db``; None if it fails KKT."""
    active = np.abs(Db) <= thresh
    sigma = np.sign(Db)
    sigma[active] = 0.0
    base = y - lam * (D.T @ sigma)
    DA = D[np.flatnonzero(active)]
    if DA.shape[0]:
        lhs = (DA @ DA.T).tocsc()
        nu = splu(lhs).solve(DA @ base)
        beta = base - DA.T @ nu
    else:
        nu = np.zeros(0)
        beta = base
    # dual feasibility on the zero set, sign consistency off it
    if nu.size and np.max(np.abs(nu)) > lam * (1 + 1e-9):
        return None
    Dbeta = D @ beta
    inactive = ~active
    if np.any(sigma[inactive] * Dbeta[inactive] <= 0):
        return None
    return beta


@njit(cache=True, nogil=True)
def tv1d_denoise(y, lam):
    """Exact 1-D total-variation denoising, ``min_x 0.5||x-y||^2 + lam*sum|x[i+1]-x[i]|``.

    Direct (non-iterative) taut-string algorithm of Condat (2013).
    """
    n = y.size
    x = np.empty(n)
    if n == 0:
        return x
    k = k0 = kplus = kminus = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    x[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = kplus = k0
                vmax = y[k]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return x
        umin += y[k + 1] - vmin
        if umin < -lam:
            while True:
                x[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin = lam
            umax = -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            while True:
                x[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin = lam
            umax = -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def trend_filter_detailed(y, cfg: SmootherConfig = SmootherConfig()) -> TrendFilterResult:
    """ADMM over the split ``D3 = D1 @ D2``; the D1 subproblem is exact 1-D TV."""
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if y.ndim != 1 or n < 4:
        raise ValidationError("trend filtering needs a 1-D vector with at least 4 samples")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite input")
    lam = float(cfg.lam)
    if lam == 0.0:
        return TrendFilterResult(y.copy(), 0.0, 0, True, False)

    D = difference_matrix(n)
    D2 = difference_matrix(n, ORDER)
    DtD = (D2.T @ D2)
    diags = [np.asarray(DtD.diagonal(k)) for k in range(ORDER + 1)]

    scale = max(float(np.max(np.abs(y))), 1e-300)
    rho = lam
    chol = _banded_system(diags, rho, n)
    alpha = D2 @ y
    u = np.zeros_like(alpha)
    best = y.copy()
    best_obj = objective(y, y, lam)
    converged = polished = False
    beta = y
    it = 0
    for it in range(1, cfg.max_iter + 1):
        beta = cho_solve_banded((chol, False), y + rho * (D2.T @ (alpha + u)))
        D2b = D2 @ beta
        alpha_old = alpha
        alpha = tv1d_denoise(D2b - u, lam / rho)
        u = u + alpha - D2b
        r_norm = np.linalg.norm(alpha - D2b)
        s_norm = rho * np.linalg.norm(D2.T @ (alpha - alpha_old))
        eps_pri = cfg.tol * max(np.linalg.norm(D2b), np.linalg.norm(alpha), 1e-12 * scale)
        eps_dual = cfg.tol * max(rho * np.linalg.norm(D2.T @ u), 1e-12 * scale)
        done = r_norm <= eps_pri and s_norm <= eps_dual

        if it % cfg.polish_every == 0 or done:
            cand = _polish(y, D, lam, np.diff(alpha), 0.0)
            if cand is not None:
                cobj = objective(y, cand, lam)
                if cobj <= objective(y, beta, lam) + 1e-12 * max(1.0, abs(cobj)):
                    best, best_obj = cand, cobj
                    converged = polished = True
                    break
        if done:
            converged = True
            break

    if not polished:
        obj = objective(y, beta, lam)
        if obj < best_obj:
            best, best_obj = beta, obj
    return TrendFilterResult(best, best_obj, it, converged, polished)


def trend_filter(y, cfg: SmootherConfig = SmootherConfig()) -> np.ndarray:
    """Quadratic trend filter of ``y``; warns if the solver hit ``max_iter``."""
    res = trend_filter_detailed(y, cfg)
    if not res.converged:
        warnings.warn(f"trend filter did not converge in {res.iterations} iterations",
                      NoConvergenceWarning, stacklevel=2)
    return res.beta


def smooth_field(field, cfg: SmootherConfig = SmootherConfig(), strict: bool = True):
    """Apply :func:`trend_filter` independently to every grid cell of ``field``.

    With ``strict`` a non-converged cell raises :class:`NoConvergence`
    carrying the (lat, lon) index; otherwise the best iterate is kept.
    """
    series = field.cell_series()
    out = np.empty_like(series)
    nlon = field.grid.lons.size
    for c in range(series.shape[0]):
        res = trend_filter_detailed(series[c], cfg)
        if not res.converged:
            cell = (c // nlon, c % nlon)
            if strict:
                raise NoConvergence(f"trend filter did not converge at cell {cell}", best=res.beta, cell=cell)
            warnings.warn(f"trend filter did not converge at cell {cell}", NoConvergenceWarning, stacklevel=2)
        out[c] = res.beta
    values = out.T.reshape(field.values.shape)
    meta = dict(field.metadata)
    meta["smoothing_lambda"] = cfg.lam
    return field.with_values(values, metadata=meta)
