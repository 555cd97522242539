"""Optimum of the regularised loss and empirical learning constants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.sparse.linalg import LinearOperator, cg

from ..errors import ConvergenceError, InvalidConfigError
from .data import SyntheticDataset
from .model import hessian_vector, loss_and_grad, model_dim


def estimate_optimum(
    X,
    y,
    reg: float = 0.5,
    tolerance: float = 1e-8,
    *,
    n_classes: int | None = None,
    w0=None,
    max_iter: int = 5000,
) -> tuple[float, np.ndarray]:
    """Minimise the pooled loss until the gradient norm drops below ``tolerance``.

    L-BFGS does the bulk of the work; a few Newton-CG steps with exact
    Hessian-vector products polish the result.

    Returns:
        ``(F*, w*)``.

    Raises:
        ConvergenceError: the gradient norm is still above ``tolerance``.
    """
    if not tolerance > 0:
        raise InvalidConfigError("tolerance must be positive")
    if not reg > 0:
        raise InvalidConfigError("the loss is only strongly convex for reg > 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    d = model_dim(X.shape[1], n_classes)
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=float)

    res = minimize(
        loss_and_grad, w, args=(X, y, reg), jac=True, method="L-BFGS-B",
        options=dict(maxiter=max_iter, gtol=tolerance / (10 * np.sqrt(d)), ftol=0.0, maxcor=20),
    )
    w = res.x
    f, g = loss_and_grad(w, X, y, reg)
    iters = int(res.nit)
    for _ in range(50):
        if np.linalg.norm(g) < tolerance:
            break
        H = LinearOperator((d, d), matvec=lambda v: hessian_vector(w, X, v, reg))
        step, _ = cg(H, -g, rtol=1e-12, atol=0.0, maxiter=4 * d)
        w = w + step
        f, g = loss_and_grad(w, X, y, reg)
        iters += 1
    gn = float(np.linalg.norm(g))
    if gn >= tolerance:
        raise ConvergenceError("optimum not reached", iterations=iters, grad_norm=gn)
    return f, w


def hessian_spectral_norm(w, X, *, n_iter: int = 200, rtol: float = 1e-8, seed: int = 0) -> float:
    """Largest eigenvalue of the unregularised cross-entropy Hessian by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(np.size(w))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        hv = hessian_vector(w, X, v, 0.0)
        new = float(np.dot(v, hv))
        nrm = np.linalg.norm(hv)
        if nrm == 0:
            return 0.0
        v = hv / nrm
        if abs(new - lam) <= rtol * abs(new):
            lam = new
            break
        lam = new
    return lam


@dataclass(frozen=True)
class LearningParams:
    """Constants of the learning problem that enter the convergence bound."""

    mu: float
    lipschitz: float
    hetero: float
    grad_bound: float
    gamma: float = 1000.0
    clip: float = 1.0
    batch: int = 32
    reg: float = 0.5
    f_star: float | None = None
    w_star: np.ndarray | None = None
    local_optima: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidConfigError("mu must be positive")
        if self.lipschitz < self.mu:
            raise InvalidConfigError("lipschitz constant cannot be below mu")
        if self.hetero < 0:
            raise InvalidConfigError("heterogeneity must be non-negative")

    @property
    def init_dist_sq(self) -> float | None:
        """``||0 - w*||^2`` for runs started at the origin."""
        return None if self.w_star is None else float(np.dot(self.w_star, self.w_star))


def estimate_learning_params(
    dataset: SyntheticDataset,
    reg: float = 0.5,
    *,
    clip: float = 1.0,
    gamma: float = 1000.0,
    batch: int = 32,
    tolerance: float = 1e-8,
) -> LearningParams:
    """Estimate mu, L, Gamma for ``dataset``; G is the configured clip value.

    mu is the regulariser weight, L adds the largest Hessian eigenvalue of the
    unregularised loss at the optimum, and Gamma compares the global optimum
    with the weighted local optima.
    """
    X, y = dataset.pooled()
    C = dataset.n_classes
    f_star, w_star = estimate_optimum(X, y, reg, tolerance, n_classes=C)
    lip = reg + hessian_spectral_norm(w_star, X)
    local = []
    for k in range(dataset.n_devices):
        Xk, yk = dataset.device(k)
        fk, _ = estimate_optimum(Xk, yk, reg, tolerance, n_classes=C, w0=w_star)
        local.append(fk)
    hetero = max(0.0, f_star - float(np.dot(dataset.weights, local)))
    return LearningParams(
        mu=float(reg), lipschitz=float(lip), hetero=hetero, grad_bound=float(clip),
        gamma=float(gamma), clip=float(clip), batch=int(batch), reg=float(reg),
        f_star=float(f_star), w_star=w_star, local_optima=tuple(local),
    )
