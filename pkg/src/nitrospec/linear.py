"""Linear models used by the rankers and the feature-count curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

F_SENTINEL = float(np.finfo(float).max)


class LinearModelError(ValueError):
    pass


class ConvergenceError(LinearModelError):
    pass


@dataclass(frozen=True)
class LinearFit:
    coef: np.ndarray
    intercept: float
    lam: float
    kind: str
    n_iter: int = 0

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return self.intercept + np.asarray(Z, dtype=float) @ self.coef


def standardize(X: np.ndarray):
    """Centre columns and scale them to unit sample sd. Returns (Z, means, sds)."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    sds = X.std(axis=0, ddof=1)
    bad = np.nonzero(~(sds > 0))[0]
    if bad.size:
        raise LinearModelError(f"column {int(bad[0])} is constant")
    return (X - means) / sds, means, sds


def _centered(Z, y):
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    zm = Z.mean(axis=0)
    ym = float(y.mean())
    return Z - zm, y - ym, zm, ym


def ols_fit(Z: np.ndarray, y: np.ndarray) -> LinearFit:
    """Least squares with intercept via Cholesky on the centred normal equations."""
    Zc, yc, zm, ym = _centered(Z, y)
    n, p = Zc.shape
    if n <= p:
        raise LinearModelError(f"need n > p for OLS, got n={n}, p={p}")
    gram = Zc.T @ Zc
    scale = np.max(np.abs(np.diag(gram))) if p else 1.0
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError:
        raise LinearModelError("design is rank deficient") from None
    diag = np.diag(factor[0])
    if p and (diag.min() ** 2 <= 1e-12 * scale):
        raise LinearModelError("design is rank deficient")
    coef = linalg.cho_solve(factor, Zc.T @ yc)
    return LinearFit(coef=coef, intercept=ym - float(zm @ coef), lam=0.0, kind="ols")


def ridge_fit(Z: np.ndarray, y: np.ndarray, lam: float) -> LinearFit:
    """coef = (Z'Z + n*lam*I)^-1 Z'(y - ybar) on centred columns."""
    if lam < 0:
        raise LinearModelError("lambda must be >= 0")
    Zc, yc, zm, ym = _centered(Z, y)
    n, p = Zc.shape
    if lam == 0:
        fit = ols_fit(Z, y)
        return LinearFit(fit.coef, fit.intercept, 0.0, "ridge")
    A = Zc.T @ Zc + n * lam * np.eye(p)
    coef = linalg.solve(A, Zc.T @ yc, assume_a="pos")
    return LinearFit(coef=coef, intercept=ym - float(zm @ coef), lam=float(lam), kind="ridge")


@njit(cache=True, nogil=True)
def _lasso_cd(G, c, yy, lam, beta, tol, max_sweeps, trace):
    """Cyclic coordinate descent on the covariance form.

    Objective 0.5*(yy - 2 c'b + b'Gb) + lam*|b|_1 with G = Z'Z/n, c = Z'y/n.
    ``trace`` receives the objective after each sweep. Returns the sweep count,
    or -1 when ``max_sweeps`` ran out.
    """
    p = G.shape[0]
    grad = c - G @ beta  # c - G b
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            rho = grad[j] + gjj * old
            if rho > lam:
                new = (rho - lam) / gjj
            elif rho < -lam:
                new = (rho + lam) / gjj
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= G[k, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if sweep < trace.shape[0]:
            # b'Gb = b'(c - grad)
            l1 = 0.0
            cb = 0.0
            bgb = 0.0
            for j in range(p):
                l1 += abs(beta[j])
                cb += c[j] * beta[j]
                bgb += beta[j] * (c[j] - grad[j])
            trace[sweep] = 0.5 * (yy - 2.0 * cb + bgb) + lam * l1
        if max_delta < tol:
            return sweep + 1
    return -1


def lasso_fit(Z: np.ndarray, y: np.ndarray, lam: float, coef0: np.ndarray | None = None,
              tol: float = 1e-7, max_sweeps: int = 10_000) -> LinearFit:
    """Minimise (1/2n)||y - ybar - Zc b||^2 + lam*||b||_1 by coordinate descent."""
    if lam < 0:
        raise LinearModelError("lambda must be >= 0")
    Zc, yc, zm, ym = _centered(Z, y)
    n, p = Zc.shape
    G = Zc.T @ Zc / n
    c = Zc.T @ yc / n
    beta = np.zeros(p) if coef0 is None else np.array(coef0, dtype=float)
    sweeps = _lasso_cd(G, c, float(yc @ yc / n), float(lam), beta, tol, max_sweeps, np.empty(0))
    if sweeps < 0:
        raise ConvergenceError(f"lasso did not converge in {max_sweeps} sweeps (lambda={lam})")
    return LinearFit(coef=beta, intercept=ym - float(zm @ beta), lam=float(lam),
                     kind="lasso", n_iter=int(sweeps))


def lasso_trace(Z: np.ndarray, y: np.ndarray, lam: float, max_sweeps: int = 200,
                tol: float = 1e-7) -> np.ndarray:
    """Objective value after each coordinate-descent sweep (from a zero start)."""
    Zc, yc, _, _ = _centered(Z, y)
    n, p = Zc.shape
    trace = np.full(max_sweeps, np.nan)
    sweeps = _lasso_cd(Zc.T @ Zc / n, Zc.T @ yc / n, float(yc @ yc / n), float(lam), np.zeros(p),
                       tol, max_sweeps, trace)
    return trace[:sweeps] if sweeps > 0 else trace


def lasso_objective(Z, y, coef, lam) -> float:
    Zc, yc, _, _ = _centered(Z, y)
    r = yc - Zc @ coef
    return float(r @ r / (2 * len(yc)) + lam * np.abs(coef).sum())


def lasso_lambda_max(Z, y) -> float:
    Zc, yc, _, _ = _centered(Z, y)
    return float(np.max(np.abs(Zc.T @ yc)) / len(yc))


def f_scores(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Univariate regression F statistic r^2 (n-2) / (1 - r^2) per column."""
    Zc, yc, _, _ = _centered(Z, y)
    n = Zc.shape[0]
    if n < 3:
        raise LinearModelError("F scores need at least 3 samples")
    zn = np.sqrt(np.einsum("ij,ij->j", Zc, Zc))
    bad = np.nonzero(~(zn > 0))[0]
    if bad.size:
        raise LinearModelError(f"feature {int(bad[0])} has zero variance")
    yn = np.sqrt(yc @ yc)
    if not yn > 0:
        raise LinearModelError("target has zero variance")
    r = (Zc.T @ yc) / (zn * yn)
    r2 = np.clip(r * r, 0.0, 1.0)
    out = np.empty_like(r2)
    perfect = r2 >= 1.0 - 1e-15
    out[perfect] = F_SENTINEL
    out[~perfect] = r2[~perfect] * (n - 2) / (1.0 - r2[~perfect])
    return out


def loo_predictions(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Leave-one-out OLS predictions via leverages: y_i - e_i / (1 - h_ii)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    y = np.asarray(y, dtype=float)
    n, m = Z.shape
    if n <= m + 1:
        raise LinearModelError(f"LOOCV needs n > m + 1, got n={n}, m={m}")
    D = np.column_stack([np.ones(n), Z])
    Q, R = np.linalg.qr(D)
    if np.min(np.abs(np.diag(R))) <= 1e-10 * np.max(np.abs(np.diag(R))):
        raise LinearModelError("design is rank deficient")
    h = np.einsum("ij,ij->i", Q, Q)
    if np.any(h >= 1 - 1e-10):
        raise LinearModelError(f"leverage-one point at sample {int(np.argmax(h))}")
    resid = y - Q @ (Q.T @ y)
    return y - resid / (1.0 - h)


def loocv_mlr(Z: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    y = np.asarray(y, dtype=float)
    pred = loo_predictions(Z, y)
    err = y - pred
    sst = float(np.sum((y - y.mean()) ** 2))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    r2 = 1.0 - float(err @ err) / sst if sst > 0 else float("nan")
    return rmse, r2
