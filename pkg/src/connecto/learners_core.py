"""Single-model regressors: linear family, Bayesian ridge, Huber, SVR,
K-nearest-neighbors, PLS, and the k-means clustering used for
cluster-split forests.

Two faces per method: a spec-level function returning a typed model
(single target), and an estimator class with fit(X, Y)/predict(X) that
handles multi-column targets efficiently by sharing the per-design
precomputation (SVD, Gram/kernel matrices) across columns. Closed-form
solvers fall back to a 1e-10 diagonal jitter (with a warning) instead of
failing on singular systems; intercepts are always fit and never
regularized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from . import _kernels
from .errors import DataError, ParameterError
from .preprocess import _rows

JITTER = 1e-10
SIGMA_FLOOR = 1e-10


def _as_xy(x, y):
    x = _rows(x)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DataError("spec-level fits take a single target column")
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise DataError(f"bad shapes x{x.shape} y{y.shape}")
    return x, y


def _as_multi(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


# ---------------------------------------------------------------------------
# typed models


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    regularization: str = "none"

    def predict(self, x) -> np.ndarray:
        return _rows(x) @ self.weights + self.intercept


@dataclass(frozen=True)
class BayesianLinearModel:
    weights: np.ndarray
    intercept: float
    alpha: float  # noise precision
    lambda_: float  # weight precision
    posterior_var: np.ndarray  # posterior covariance diagonal
    converged: bool

    def predict(self, x) -> np.ndarray:
        return _rows(x) @ self.weights + self.intercept


@dataclass(frozen=True)
class KernelModel:
    coefficients: np.ndarray  # dual coefficients of the support vectors
    support_vectors: np.ndarray
    kernel: str
    gamma: float | None
    epsilon: float
    C: float
    bias: float

    def predict(self, x) -> np.ndarray:
        q = _rows(x)
        if self.coefficients.shape[0] == 0:
            return np.full(q.shape[0], self.bias)
        k = _kernel_matrix(q, self.support_vectors, self.kernel, self.gamma)
        return k @ self.coefficients + self.bias


@dataclass(frozen=True)
class NeighborModel:
    x: np.ndarray
    y: np.ndarray  # (n, K)
    k: int
    weighting: str  # "uniform" | "inverse_distance"


# ---------------------------------------------------------------------------
# linear least squares / ridge


def _center(x, y):
    xm = x.mean(axis=0)
    ym = y.mean(axis=0)
    return x - xm, y - ym, xm, ym


def _solve_linear_multi(x: np.ndarray, y2: np.ndarray, lam: float):
    """Ridge (lam > 0) or jittered OLS solve for all target columns at once.

    Uses the primal normal equations when n >= d and the exactly
    equivalent dual form otherwise. Returns (W (d, K), b (K,)).
    """
    n, d = x.shape
    xc, yc, xm, ym = _center(x, y2)
    if n >= d:
        a = xc.T @ xc
        if lam > 0:
            a[np.diag_indices(d)] += lam
        rhs = xc.T @ yc
        try:
            cf = scipy.linalg.cho_factor(a, check_finite=False)
            w = scipy.linalg.cho_solve(cf, rhs, check_finite=False)
        except np.linalg.LinAlgError:
            warnings.warn("singular normal equations; adding 1e-10 jitter")
            a[np.diag_indices(d)] += JITTER
            w = np.linalg.solve(a, rhs)
    else:
        g = xc @ xc.T
        g[np.diag_indices(n)] += lam if lam > 0 else JITTER
        try:
            cf = scipy.linalg.cho_factor(g, check_finite=False)
            dual = scipy.linalg.cho_solve(cf, yc, check_finite=False)
        except np.linalg.LinAlgError:
            warnings.warn("singular gram matrix; adding 1e-10 jitter")
            g[np.diag_indices(n)] += JITTER
            dual = np.linalg.solve(g, yc)
        w = xc.T @ dual
    b = ym - xm @ w
    return w, b


def fit_ols(x, y) -> LinearModel:
    """Least squares with intercept; singular systems get a 1e-10 jitter."""
    x, y = _as_xy(x, y)
    w, b = _solve_linear_multi(x, y[:, None], 0.0)
    return LinearModel(w[:, 0], float(b[0]), "none")


def fit_ridge(x, y, lam: float = 1.0) -> LinearModel:
    """L2-penalized least squares; the intercept is not penalized."""
    x, y = _as_xy(x, y)
    if lam < 0:
        raise ParameterError("lam must be >= 0")
    w, b = _solve_linear_multi(x, y[:, None], lam)
    return LinearModel(w[:, 0], float(b[0]), f"l2({lam})")


# ---------------------------------------------------------------------------
# elastic net / lasso (coordinate descent kernel)


def _standardize(x):
    xm = x.mean(axis=0)
    xs = x.std(axis=0)
    xs = np.where(xs > 0, xs, 1.0)
    return (x - xm) / xs, xm, xs


def _enet_fit_standardized(xs_f, yc, alpha, l1_ratio, tol, max_iter):
    w = np.zeros(xs_f.shape[1])
    iters, delta, converged = _kernels.enet_cd(
        xs_f, yc, w, alpha * l1_ratio, alpha * (1.0 - l1_ratio), max_iter, tol
    )
    if not converged:
        warnings.warn(
            f"elastic net did not converge in {iters} iterations (last delta {delta:.2e})"
        )
    return w


def fit_elastic_net(x, y, alpha: float, l1_ratio: float = 0.5,
                    tol: float = 1e-6, max_iter: int = 10000) -> LinearModel:
    """Coordinate descent on internally standardized features.

    Objective (on the standardized design): 1/(2n)||y - Xw||^2 +
    alpha*l1_ratio*|w|_1 + alpha*(1-l1_ratio)/2*|w|_2^2. Weights are
    back-transformed to the original scale.
    """
    x, y = _as_xy(x, y)
    if alpha <= 0:
        raise ParameterError("alpha must be > 0")
    if not 0.0 <= l1_ratio <= 1.0:
        raise ParameterError("l1_ratio must lie in [0, 1]")
    xs, xm, xscale = _standardize(x)
    ym = y.mean()
    ws = _enet_fit_standardized(
        np.asfortranarray(xs), y - ym, alpha, l1_ratio, tol, max_iter
    )
    w = ws / xscale
    b = ym - xm @ w
    reg = f"l1({alpha})" if l1_ratio == 1.0 else f"elastic({alpha}, {l1_ratio})"
    return LinearModel(w, float(b), reg)


def fit_lasso(x, y, alpha: float, tol: float = 1e-6, max_iter: int = 10000) -> LinearModel:
    return fit_elastic_net(x, y, alpha, 1.0, tol, max_iter)


def elastic_net_kkt_residual(model: LinearModel, x, y, alpha: float,
                             l1_ratio: float) -> float:
    """Max KKT violation of a fitted elastic net, on the standardized scale."""
    x, y = _as_xy(x, y)
    xs, xm, xscale = _standardize(x)
    n = x.shape[0]
    ws = model.weights * xscale
    r = (y - y.mean()) - xs @ ws
    g = xs.T @ r / n
    l1 = alpha * l1_ratio
    l2 = alpha * (1.0 - l1_ratio)
    res = 0.0
    for j in range(ws.shape[0]):
        if ws[j] != 0.0:
            res = max(res, abs(-g[j] + l2 * ws[j] + l1 * np.sign(ws[j])))
        else:
            res = max(res, max(0.0, abs(g[j]) - l1))
    return res


# ---------------------------------------------------------------------------
# orthogonal matching pursuit


def fit_omp(x, y, n_nonzero: int) -> LinearModel:
    """Greedy OMP: pick the column most correlated with the residual,
    refit least squares on the active set, repeat. Ties take the lowest
    column index."""
    x, y = _as_xy(x, y)
    n, d = x.shape
    if not 1 <= n_nonzero <= d:
        raise ParameterError(f"n_nonzero must lie in [1, {d}]")
    xc, yc, xm, ym = _center(x, y[:, None])
    yc = yc[:, 0]
    norms = np.sqrt((xc * xc).sum(axis=0))
    usable = norms > 0
    active: list[int] = []
    r = yc.copy()
    coef = np.zeros(0)
    for _ in range(n_nonzero):
        corr = np.where(usable, np.abs(xc.T @ r) / np.where(usable, norms, 1.0), -1.0)
        corr[active] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 1e-12:
            break
        active.append(j)
        coef, *_ = np.linalg.lstsq(xc[:, active], yc, rcond=None)
        r = yc - xc[:, active] @ coef
    w = np.zeros(d)
    if active:
        w[active] = coef
    b = ym[0] - xm @ w
    return LinearModel(w, float(b), f"l0({n_nonzero})")


# ---------------------------------------------------------------------------
# Bayesian ridge (evidence maximization on the shared SVD)


def _bayes_iterate(s2, z, n_samples, resid_base, max_iter, tol, prior=1e-6):
    """MacKay fixed point in the rotated basis; O(rank) per iteration."""
    s = np.sqrt(s2)
    alpha = 1.0
    lam = 1.0
    c = np.zeros_like(z)
    converged = False
    for _ in range(max_iter):
        c_old = c
        denom = alpha * s2 + lam
        c = alpha * s * z / denom
        wnorm2 = float(c @ c)
        resid = resid_base + float(((z - s * c) ** 2).sum())
        gamma = float((alpha * s2 / denom).sum())
        lam = (gamma + 2 * prior) / (wnorm2 + 2 * prior)
        alpha = (n_samples - gamma + 2 * prior) / (resid + 2 * prior)
        if np.max(np.abs(c - c_old)) < tol:
            converged = True
            break
    return c, alpha, lam, converged


def fit_bayesian_ridge(x, y, max_iter: int = 300, tol: float = 1e-4) -> BayesianLinearModel:
    """Evidence-maximization Bayesian linear regression (posterior mean).

    Noise precision alpha and weight precision lambda follow the usual
    fixed-point updates with Gamma hyperpriors of 1e-6; prediction uses
    the posterior-mean weights.
    """
    x, y = _as_xy(x, y)
    xc, yc, xm, ym = _center(x, y[:, None])
    yc = yc[:, 0]
    u, s, vt = np.linalg.svd(xc, full_matrices=False)
    return _finish_bayes(xc, yc, xm, float(ym[0]), u, s, vt, max_iter, tol)


def _finish_bayes(xc, yc, xm, ym, u, s, vt, max_iter, tol):
    z = u.T @ yc
    resid_base = max(float(yc @ yc - z @ z), 0.0)
    c, alpha, lam, converged = _bayes_iterate(
        s * s, z, xc.shape[0], resid_base, max_iter, tol
    )
    if not converged:
        warnings.warn("bayesian ridge fixed point did not converge")
    w = vt.T @ c
    denom = alpha * s * s + lam
    vsq = vt.T**2  # (d, r)
    post_var = vsq @ (1.0 / denom) + (1.0 - vsq.sum(axis=1)) / lam
    return BayesianLinearModel(
        weights=w,
        intercept=float(ym - xm @ w),
        alpha=float(alpha),
        lambda_=float(lam),
        posterior_var=post_var,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Huber regression with concomitant scale


def huber_objective(params, x, y, epsilon, lam):
    """Objective and gradient of the robust loss with joint scale.

    params = (w[0:d], b, sigma); f = n*sigma + sum_i rho_i + lam|w|^2
    where rho is quadratic inside |r| <= epsilon*sigma and linear outside.
    """
    d = x.shape[1]
    w = params[:d]
    b = params[d]
    sigma = params[d + 1]
    r = y - x @ w - b
    absr = np.abs(r)
    cut = epsilon * sigma
    inl = absr <= cut
    out = ~inl
    n = x.shape[0]
    f = (
        n * sigma
        + float((r[inl] ** 2).sum()) / sigma
        + 2.0 * epsilon * float(absr[out].sum())
        - epsilon * epsilon * sigma * int(out.sum())
        + lam * float(w @ w)
    )
    u = np.empty(n)
    u[inl] = 2.0 * r[inl] / sigma
    u[out] = 2.0 * epsilon * np.sign(r[out])
    gw = -(x.T @ u) + 2.0 * lam * w
    gb = -float(u.sum())
    gs = n - float((r[inl] ** 2).sum()) / sigma**2 - epsilon * epsilon * int(out.sum())
    return f, np.concatenate([gw, [gb], [gs]])


def _huber_dual_obj(params, k, y, epsilon, lam):
    # w = Xc^T beta, so Xc w = K beta and |w|^2 = beta K beta
    n = k.shape[0]
    beta = params[:n]
    b = params[n]
    sigma = params[n + 1]
    kb = k @ beta
    r = y - kb - b
    absr = np.abs(r)
    cut = epsilon * sigma
    inl = absr <= cut
    out = ~inl
    f = (
        n * sigma
        + float((r[inl] ** 2).sum()) / sigma
        + 2.0 * epsilon * float(absr[out].sum())
        - epsilon * epsilon * sigma * int(out.sum())
        + lam * float(beta @ kb)
    )
    u = np.empty(n)
    u[inl] = 2.0 * r[inl] / sigma
    u[out] = 2.0 * epsilon * np.sign(r[out])
    gbeta = k @ (2.0 * lam * beta - u)
    gb = -float(u.sum())
    gs = n - float((r[inl] ** 2).sum()) / sigma**2 - epsilon * epsilon * int(out.sum())
    return f, np.concatenate([gbeta, [gb], [gs]])


def _huber_minimize(obj, x0, args, tol, max_iter):
    bounds = [(None, None)] * (x0.shape[0] - 1) + [(SIGMA_FLOOR, None)]
    res = scipy.optimize.minimize(
        obj,
        x0,
        args=args,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-16},
    )
    return res.x


def fit_huber(x, y, epsilon: float = 1.35, lam: float = 1e-4,
              tol: float = 1e-6, max_iter: int = 2000) -> LinearModel:
    """Robust linear fit: quadratic loss for small residuals, linear for
    outliers, with the scale estimated jointly. Solved in the sample
    (dual) space when d > n; identical optimum either way."""
    x, y = _as_xy(x, y)
    if epsilon <= 0:
        raise ParameterError("epsilon must be > 0")
    n, d = x.shape
    xc, yc, xm, ym = _center(x, y[:, None])
    yc = yc[:, 0]
    sig0 = max(float(np.std(yc)), 1e-3)
    if d <= n:
        x0 = np.concatenate([np.zeros(d), [0.0], [sig0]])
        sol = _huber_minimize(huber_objective, x0, (xc, yc, epsilon, lam), tol, max_iter)
        w = sol[:d]
        b0 = sol[d]
    else:
        k = xc @ xc.T
        x0 = np.concatenate([np.zeros(n), [0.0], [sig0]])
        sol = _huber_minimize(_huber_dual_obj, x0, (k, yc, epsilon, lam), tol, max_iter)
        w = xc.T @ sol[:n]
        b0 = sol[n]
    return LinearModel(w, float(ym[0] + b0 - xm @ w), f"l2({lam})")


# ---------------------------------------------------------------------------
# support vector regression


def _kernel_matrix(a, b, kernel, gamma):
    if kernel == "linear":
        return a @ b.T
    if kernel == "rbf":
        aa = (a * a).sum(axis=1)[:, None]
        bb = (b * b).sum(axis=1)[None, :]
        d2 = np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)
        return np.exp(-gamma * d2)
    raise ParameterError(f"unknown kernel {kernel!r}")


def fit_svr(x, y, C: float = 1.0, epsilon: float = 0.1, kernel: str = "rbf",
            gamma: float | None = None, tol: float = 1e-3,
            max_iter: int = 200000) -> KernelModel:
    """Epsilon-insensitive SVR solved by pairwise SMO updates on the dual."""
    x, y = _as_xy(x, y)
    if C <= 0:
        raise ParameterError("C must be > 0")
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    if kernel == "rbf" and gamma is None:
        gamma = 1.0 / x.shape[1]
    k = np.ascontiguousarray(_kernel_matrix(x, x, kernel, gamma))
    beta, bias, _, _, converged = _kernels.svr_smo(
        k, np.ascontiguousarray(y), C, epsilon, tol, max_iter
    )
    if not converged:
        warnings.warn("SVR SMO hit the iteration cap before meeting KKT tolerance")
    sv = beta != 0.0
    return KernelModel(
        coefficients=beta[sv],
        support_vectors=x[sv],
        kernel=kernel,
        gamma=gamma,
        epsilon=epsilon,
        C=C,
        bias=bias,
    )


def svr_linear_weights(model: KernelModel) -> np.ndarray:
    """Explicit primal weights of a linear-kernel SVR."""
    if model.kernel != "linear":
        raise ParameterError("explicit weights exist only for the linear kernel")
    if model.coefficients.shape[0] == 0:
        return np.zeros(model.support_vectors.shape[1] if model.support_vectors.size else 0)
    return model.support_vectors.T @ model.coefficients


# ---------------------------------------------------------------------------
# k nearest neighbors


def fit_knn(x, y, k: int = 5, weighting: str = "uniform") -> NeighborModel:
    x = _rows(x)
    y2 = _as_multi(y)
    if not 1 <= k <= x.shape[0]:
        raise ParameterError(f"k must lie in [1, {x.shape[0]}]")
    if weighting not in ("uniform", "inverse_distance"):
        raise ParameterError(f"unknown weighting {weighting!r}")
    return NeighborModel(x=x.copy(), y=y2.copy(), k=k, weighting=weighting)


def knn_predict(model: NeighborModel, query) -> np.ndarray:
    """Euclidean k-NN prediction; exact matches short-circuit the
    inverse-distance weighting (their targets are averaged)."""
    q = _rows(query)
    xa = model.x
    d2 = (
        (q * q).sum(axis=1)[:, None]
        + (xa * xa).sum(axis=1)[None, :]
        - 2.0 * (q @ xa.T)
    )
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    out = np.empty((q.shape[0], model.y.shape[1]))
    for i in range(q.shape[0]):
        order = np.argsort(dist[i], kind="stable")[: model.k]
        dk = dist[i, order]
        yk = model.y[order]
        if model.weighting == "uniform":
            out[i] = yk.mean(axis=0)
        else:
            zero = dk == 0.0
            if zero.any():
                out[i] = yk[zero].mean(axis=0)
            else:
                w = 1.0 / dk
                out[i] = (w[:, None] * yk).sum(axis=0) / w.sum()
    return out


# ---------------------------------------------------------------------------
# PLS1 (NIPALS)


def fit_pls1(x, y, n_components: int) -> LinearModel:
    """NIPALS partial least squares with one target, expressed as an
    equivalent linear model. A constant target yields zero weights."""
    x, y = _as_xy(x, y)
    n, d = x.shape
    if not 1 <= n_components <= min(n, d):
        raise ParameterError(f"n_components must lie in [1, {min(n, d)}]")
    xc, yc, xm, ym = _center(x, y[:, None])
    yd = yc[:, 0].copy()
    xd = xc.copy()
    ws, ps, qs = [], [], []
    for _ in range(n_components):
        w = xd.T @ yd
        nw = float(np.linalg.norm(w))
        if nw < 1e-12:
            break
        w /= nw
        t = xd @ w
        tt = float(t @ t)
        if tt < 1e-12:
            break
        p = xd.T @ t / tt
        qv = float(yd @ t) / tt
        xd -= np.outer(t, p)
        yd -= qv * t
        ws.append(w)
        ps.append(p)
        qs.append(qv)
    if not ws:
        return LinearModel(np.zeros(d), float(ym[0]), "pls(0)")
    W = np.column_stack(ws)
    P = np.column_stack(ps)
    q = np.asarray(qs)
    beta = W @ np.linalg.solve(P.T @ W, q)
    return LinearModel(beta, float(ym[0] - xm @ beta), f"pls({len(qs)})")


# ---------------------------------------------------------------------------
# k-means


def kmeans(table, k: int, seed: int = 0, max_iter: int = 300):
    """k-means++ initialization plus Lloyd iterations to an assignment
    fixpoint. Returns (labels, centroids). Deterministic given the seed."""
    x = _rows(table)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0:
            centers[c] = x[int(rng.integers(n))]
        else:
            centers[c] = x[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((x - centers[c]) ** 2).sum(axis=1))
    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = (
            (x * x).sum(axis=1)[:, None]
            + (centers * centers).sum(axis=1)[None, :]
            - 2.0 * (x @ centers.T)
        )
        new_labels = np.argmin(dist, axis=1)
        for c in range(k):
            members = new_labels == c
            if not members.any():
                # re-seed an empty cluster with the worst-fit point
                worst = int(np.argmax(np.min(dist, axis=1)))
                new_labels[worst] = c
                members = new_labels == c
            centers[c] = x[members].mean(axis=0)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers


def kmeans_inertia(x, labels, centers) -> float:
    x = _rows(x)
    return float(((x - centers[labels]) ** 2).sum())


# ---------------------------------------------------------------------------
# estimator classes (multi-column targets, shared precomputation)


class LinearEstimator:
    """Joint multi-output least squares / ridge."""

    native_multioutput = True

    def __init__(self, lam: float = 0.0):
        if lam < 0:
            raise ParameterError("lam must be >= 0")
        self.lam = lam

    def fit(self, x, y, rng=None):
        x = _rows(x)
        self.w_, self.b_ = _solve_linear_multi(x, _as_multi(y), self.lam)
        return self

    def predict(self, x):
        return _rows(x) @ self.w_ + self.b_


class OLSEstimator(LinearEstimator):
    def __init__(self):
        super().__init__(0.0)


class RidgeEstimator(LinearEstimator):
    def __init__(self, lam: float = 1.0):
        super().__init__(lam)


class ElasticNetEstimator:
    native_multioutput = False

    def __init__(self, alpha: float = 1e-3, l1_ratio: float = 0.5,
                 tol: float = 1e-6, max_iter: int = 10000):
        if alpha <= 0:
            raise ParameterError("alpha must be > 0")
        if not 0.0 <= l1_ratio <= 1.0:
            raise ParameterError("l1_ratio must lie in [0, 1]")
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        xs, xm, xscale = _standardize(x)
        xs_f = np.asfortranarray(xs)
        ym = y2.mean(axis=0)
        w = np.empty((x.shape[1], y2.shape[1]))
        with warnings.catch_warnings():
            warnings.simplefilter("once")
            for t in range(y2.shape[1]):
                ws = _enet_fit_standardized(
                    xs_f, y2[:, t] - ym[t], self.alpha, self.l1_ratio,
                    self.tol, self.max_iter,
                )
                w[:, t] = ws / xscale
        self.w_ = w
        self.b_ = ym - xm @ w
        return self

    def predict(self, x):
        return _rows(x) @ self.w_ + self.b_


class LassoEstimator(ElasticNetEstimator):
    def __init__(self, alpha: float = 1e-3, tol: float = 1e-6, max_iter: int = 10000):
        super().__init__(alpha, 1.0, tol, max_iter)


class OMPEstimator:
    native_multioutput = False

    def __init__(self, n_nonzero: int = 10):
        self.n_nonzero = n_nonzero

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        k = min(self.n_nonzero, x.shape[1])
        models = [fit_omp(x, y2[:, t], k) for t in range(y2.shape[1])]
        self.w_ = np.column_stack([m.weights for m in models])
        self.b_ = np.array([m.intercept for m in models])
        return self

    def predict(self, x):
        return _rows(x) @ self.w_ + self.b_


class BayesianRidgeEstimator:
    native_multioutput = False

    def __init__(self, max_iter: int = 300, tol: float = 1e-4):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        xc, yc, xm, ym = _center(x, y2)
        u, s, vt = np.linalg.svd(xc, full_matrices=False)  # shared across columns
        w = np.empty((x.shape[1], y2.shape[1]))
        b = np.empty(y2.shape[1])
        with warnings.catch_warnings():
            warnings.simplefilter("once")
            for t in range(y2.shape[1]):
                m = _finish_bayes(
                    xc, yc[:, t], xm, float(ym[t]), u, s, vt, self.max_iter, self.tol
                )
                w[:, t] = m.weights
                b[t] = m.intercept
        self.w_ = w
        self.b_ = b
        return self

    def predict(self, x):
        return _rows(x) @ self.w_ + self.b_


class HuberEstimator:
    """Multi-column robust fits through a shared SVD reparametrization.

    With Xc = U S V^T the per-target problem over (a, b, sigma) with
    design D = U S and isotropic penalty lam*|a|^2 has the same optimum as
    the original (w = V a; any component of w outside V's span only adds
    penalty). Each target is warm-started at its closed-form ridge
    solution, which keeps the L-BFGS iteration counts small.
    """

    native_multioutput = False

    def __init__(self, epsilon: float = 1.35, lam: float = 1e-4,
                 tol: float = 1e-6, max_iter: int = 2000):
        self.epsilon = epsilon
        self.lam = lam
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        n, d = x.shape
        t = y2.shape[1]
        xc, yc, xm, ym = _center(x, y2)
        u, s, vt = np.linalg.svd(xc, full_matrices=False)
        design = u * s  # (n, r)
        r = design.shape[1]
        a_all = np.empty((r, t))
        b0 = np.empty(t)
        uty = u.T @ yc  # warm starts, shared factorization
        for j in range(t):
            sig0 = max(float(np.std(yc[:, j])), 1e-3)
            a_start = (s / (s * s + self.lam * sig0)) * uty[:, j]
            x0 = np.concatenate([a_start, [0.0], [sig0]])
            sol = _huber_minimize(
                huber_objective, x0, (design, yc[:, j], self.epsilon, self.lam),
                self.tol, self.max_iter,
            )
            a_all[:, j] = sol[:r]
            b0[j] = sol[r]
        w = vt.T @ a_all
        self.w_ = w
        self.b_ = ym + b0 - xm @ w
        return self

    def predict(self, x):
        return _rows(x) @ self.w_ + self.b_


class SVREstimator:
    native_multioutput = False

    def __init__(self, C: float = 1.0, epsilon: float = 0.1, kernel: str = "rbf",
                 gamma: float | None = None, tol: float = 1e-3,
                 max_iter: int = 200000):
        if C <= 0:
            raise ParameterError("C must be > 0")
        if epsilon < 0:
            raise ParameterError("epsilon must be >= 0")
        self.C = C
        self.epsilon = epsilon
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        gamma = self.gamma
        if self.kernel == "rbf" and gamma is None:
            gamma = 1.0 / x.shape[1]
        self.gamma_ = gamma
        self.x_ = x.copy()
        k = np.ascontiguousarray(_kernel_matrix(x, x, self.kernel, gamma))
        betas = np.empty((x.shape[0], y2.shape[1]))
        biases = np.empty(y2.shape[1])
        capped = 0
        for t in range(y2.shape[1]):
            beta, bias, _, _, converged = _kernels.svr_smo(
                k, np.ascontiguousarray(y2[:, t]), self.C, self.epsilon,
                self.tol, self.max_iter,
            )
            capped += not converged
            betas[:, t] = beta
            biases[t] = bias
        if capped:
            warnings.warn(f"SVR SMO hit the iteration cap on {capped} target(s)")
        self.beta_ = betas
        self.bias_ = biases
        return self

    def predict(self, x):
        q = _rows(x)
        k = _kernel_matrix(q, self.x_, self.kernel, self.gamma_)
        return k @ self.beta_ + self.bias_


class KNNEstimator:
    native_multioutput = True  # neighbor sets are target-independent

    def __init__(self, k: int = 5, weighting: str = "uniform"):
        self.k = k
        self.weighting = weighting

    def fit(self, x, y, rng=None):
        self.model_ = fit_knn(x, _as_multi(y), self.k, self.weighting)
        return self

    def predict(self, x):
        return knn_predict(self.model_, x)


class PLSEstimator:
    native_multioutput = False

    def __init__(self, n_components: int = 5):
        self.n_components = n_components

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        k = min(self.n_components, min(x.shape))
        models = [fit_pls1(x, y2[:, t], k) for t in range(y2.shape[1])]
        self.w_ = np.column_stack([m.weights for m in models])
        self.b_ = np.array([m.intercept for m in models])
        return self

    def predict(self, x):
        return _rows(x) @ self.w_ + self.b_
