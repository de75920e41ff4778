"""Pure-numpy reference versions of the hot solver kernels.

Every function here has a twin with the same signature in the compiled
``_kernels`` extension; :mod:`mixcausal.kernels` picks one at import time.

Conventions shared by all kernels:

* ``X`` is a C-contiguous float64 design matrix (rows = units).
* ``z`` is a float64 0/1 vector.
* Each ``*_terms`` function returns ``(objective, gradient, hessian)`` of a
  smooth function of the coefficient vector, evaluated in one pass.
"""

import numpy as np

ETA_CLIP = 700.0


def _eta(X, beta):
    return np.clip(X @ beta, -ETA_CLIP, ETA_CLIP)


def logistic_terms(X, z, beta):
    """Log-likelihood, score and Hessian of the standard logistic model."""
    eta = _eta(X, beta)
    ll = float(z @ eta - np.logaddexp(0.0, eta).sum())
    p = 0.5 * (1.0 + np.tanh(0.5 * eta))
    grad = X.T @ (z - p)
    hess = -(X.T * (p * (1.0 - p))) @ X
    return ll, grad, hess


def _mixed_ratios(X, beta, delta, c):
    eta = _eta(X, beta)
    v = (1.0 - delta) * np.exp(eta)
    os = v + c
    r1 = v / os
    r2 = v / (1.0 + os)
    return os, r1, r2


def mixed_logistic_terms(X, z, beta, delta, c):
    """Log-likelihood of a sample whose propensity odds are ``(1-delta)*exp(x'b) + c``."""
    os, r1, r2 = _mixed_ratios(X, beta, delta, c)
    ll = float(z @ np.log(os) - np.log1p(os).sum())
    g = z * r1 - r2
    h = z * (r1 - r1 * r1) - (r2 - r2 * r2)
    grad = X.T @ g
    hess = (X.T * h) @ X
    return ll, grad, hess


def mipw_objective_terms(X, z, beta, delta, c):
    """Objective whose gradient is the first block of the observed-data MIPW system.

    Treated units contribute ``(1-delta) log e*`` and controls
    ``c log e* + log(1-e*)``, with ``e*`` the synthetic propensity score.
    """
    os, r1, r2 = _mixed_ratios(X, beta, delta, c)
    log_e = np.log(os) - np.log1p(os)
    log_1me = -np.log1p(os)
    q = float(((1.0 - delta) * z * log_e + (1.0 - z) * (c * log_e + log_1me)).sum())
    d1 = r1 - r2
    d2 = r1 - r1 * r1 - r2 + r2 * r2
    g = (1.0 - delta) * z * d1 + (1.0 - z) * (c * d1 - r2)
    h = (1.0 - delta) * z * d2 + (1.0 - z) * (c * d2 - (r2 - r2 * r2))
    grad = X.T @ g
    hess = (X.T * h) @ X
    return q, grad, hess


def eb_dual_terms(D, lam):
    """Entropy-balancing dual ``log sum exp(D @ lam)`` with gradient and Hessian.

    ``D`` holds control covariates minus the target moments.  Also returns the
    normalized weights ``q`` (summing to one).
    """
    s = D @ lam
    m = s.max()
    w = np.exp(s - m)
    total = w.sum()
    q = w / total
    grad = D.T @ q
    hess = (D.T * q) @ D - np.outer(grad, grad)
    return float(m + np.log(total)), grad, hess, q


def _chol_step(H, g):
    scale = max(np.abs(np.diag(H)).max(), 1e-12)
    ridge = 0.0
    for _ in range(60):
        try:
            L = np.linalg.cholesky(H + ridge * np.eye(len(g)))
            return np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            ridge = scale * 1e-8 if ridge == 0.0 else ridge * 10.0
    return g / scale


def eb_dual_solve(D, lam0, tol, max_iter, max_norm):
    """Damped Newton minimization of the entropy-balancing dual.

    Returns ``(lam, q, iterations, status, values)``; status 0 means
    converged, 1 stalled or hit ``max_iter``, 2 exceeded ``max_norm``.
    """
    lam = np.array(lam0, dtype=float)
    f, g, H, q = eb_dual_terms(D, lam)
    values = [f]
    for it in range(max_iter + 1):
        if np.linalg.norm(g) < tol:
            return lam, q, it, 0, values
        if it == max_iter:
            return lam, q, it, 1, values
        step = _chol_step(H, g)
        t = 1.0
        for _ in range(60):
            trial = lam - t * step
            fn, gn, Hn, qn = eb_dual_terms(D, trial)
            if np.isfinite(fn) and fn <= f + 1e-13 * max(1.0, abs(f)):
                break
            t *= 0.5
        else:
            return lam, q, it, 1, values
        lam, f, g, H, q = trial, fn, gn, Hn, qn
        values.append(f)
        if np.linalg.norm(lam) > max_norm:
            return lam, q, it + 1, 2, values
    return lam, q, max_iter, 1, values
