"""Sandwich (Huber-White) variances for the stacked systems, and pairs bootstrap."""

from dataclasses import dataclass
from functools import partial

import numpy as np

from . import equations
from ._parallel import parallel_map
from .errors import MixCausalError, SingularBreadError, UnreliableBootstrapError
from .propensity import Standardizer, check_delta
from .rng import stream

MAX_CONDITION = 1e14


@dataclass
class SandwichResult:
    """Variance of a linear contrast of an M-estimator.

    ``bread`` is ``-(1/N) sum d psi / d theta`` and ``meat`` is
    ``(1/N) sum psi psi'``; for the causal systems both are expressed in the
    standardized-covariate parametrization used by the solvers.
    """

    variance: float
    bread: np.ndarray
    meat: np.ndarray
    se: float
    condition_number: float


def numeric_jacobian(fn, theta):
    """Central-difference Jacobian with steps ``cbrt(eps) * max(1, |theta_j|)``."""
    theta = np.asarray(theta, dtype=float)
    base = np.cbrt(np.finfo(float).eps)
    cols = []
    for j in range(theta.size):
        h = base * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        cols.append((np.asarray(fn(up)) - np.asarray(fn(dn))) / (2.0 * h))
    return np.column_stack(cols)


def sandwich(psi, theta, contrast, jac=None):
    """Sandwich variance of ``contrast @ theta_hat``.

    ``psi(theta)`` returns per-unit contributions (N x k); ``jac(theta)`` their
    summed Jacobian.  Without ``jac`` the Jacobian is taken numerically.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))

    def rows_at(t):
        r = np.asarray(psi(t), dtype=float)
        return r[:, None] if r.ndim == 1 else r

    rows = rows_at(theta)
    n = rows.shape[0]
    J = jac(theta) if jac is not None else numeric_jacobian(lambda t: rows_at(t).sum(axis=0), theta)
    A = -np.atleast_2d(J) / n
    B = rows.T @ rows / n
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularBreadError(f"bread matrix is singular (condition number {cond:.3g})", cond)
    u = np.linalg.solve(A.T, np.atleast_1d(np.asarray(contrast, dtype=float)))
    variance = float(u @ B @ u) / n
    variance = max(variance, 0.0)
    return SandwichResult(variance, A, B, float(np.sqrt(variance)), float(cond))


def sandwich_se(sample, theta, system, delta=None, jacobian="analytic"):
    """Robust standard error of ``mu1 - mu0`` for the named estimating system.

    ``system`` is ``"ipw"``, ``"mipw"`` (requires ``delta``) or ``"ow"``;
    ``theta`` must solve that system on ``sample``.  ``jacobian="numeric"``
    swaps the analytic bread for central differences.
    """
    if system == "mipw":
        delta = check_delta(delta)
    psi, jac = equations.psi_for(system, delta)
    std = Standardizer.fit(sample.covariates)
    X = std.design(sample.covariates)
    z, y = sample.treatments, sample.outcomes
    vec = np.concatenate([std.to_standard(np.asarray(theta.beta)), [theta.pi, theta.mu1, theta.mu0]])
    fn = partial(_bound, psi, X=X, z=z, y=y)
    jfn = None if jacobian == "numeric" else partial(_bound, jac, X=X, z=z, y=y)
    return sandwich(fn, vec, equations.contrast_vector(X.shape[1]), jfn)


def _bound(f, theta, X, z, y):
    return f(theta, X, z, y)


@dataclass
class BootstrapResult:
    se: float
    replicate_estimates: np.ndarray
    failed_count: int


def _one_replicate(b, sample, estimator, seed):
    rng = stream(seed, b)
    idx = rng.integers(0, sample.n, size=sample.n)
    try:
        return float(estimator(sample.take(idx), rng))
    except (MixCausalError, ZeroDivisionError, np.linalg.LinAlgError):
        return float("nan")


def bootstrap_se(sample, estimator, B, seed, n_jobs=None, max_fail_frac=0.2):
    """Pairs-bootstrap standard error of ``estimator(sample, rng) -> float``.

    Replicate ``b`` resamples units with a stream derived from ``(seed, b)``
    and passes the same stream on to the estimator (for estimators that mix
    internally), so results do not depend on execution order.  Replicates
    that raise a package error are counted as failures and dropped.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    fn = partial(_one_replicate, sample=sample, estimator=estimator, seed=seed)
    est = np.array(parallel_map(fn, range(B), n_jobs))
    ok = np.isfinite(est)
    failed = int((~ok).sum())
    if failed > max_fail_frac * B:
        raise UnreliableBootstrapError(f"{failed} of {B} bootstrap replicates failed")
    good = est[ok]
    se = float(good.std(ddof=1)) if good.size >= 2 else float("nan")
    return BootstrapResult(se, good, failed)
