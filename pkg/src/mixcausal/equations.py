"""Stacked estimating equations for the IPW, MIPW and OW estimators.

Parameters are stacked as ``theta = (b, pi, mu1, mu0)`` where ``b`` are the
logistic coefficients for the design ``X`` (intercept first).  Each ``psi_*``
returns the per-unit contributions as an ``N x (p + 3)`` array and each
``jac_*`` the summed Jacobian ``sum_i d psi_i / d theta``.
"""

import numpy as np

from .propensity import expit

SYSTEMS = ("ipw", "mipw", "ow")


def split(theta, p):
    theta = np.asarray(theta, dtype=float)
    return theta[:p], theta[p], theta[p + 1], theta[p + 2]


def contrast_vector(p):
    c = np.zeros(p + 3)
    c[p + 1], c[p + 2] = 1.0, -1.0
    return c


def _odds(X, b):
    return np.exp(np.clip(X @ b, -700.0, 700.0))


def _mixed(X, b, delta, pi):
    odds = _odds(X, b)
    c = delta * pi / (1.0 - pi)
    v = (1.0 - delta) * odds
    os = v + c
    return odds, c, os, v / os, v / (1.0 + os)


def mipw_block1_weights(X, z, b, delta, pi):
    """Scalar multipliers g_i so that block 1 of the MIPW system is g_i * x_i."""
    _, c, _, r1, r2 = _mixed(X, b, delta, pi)
    return (1.0 - delta) * z * (r1 - r2) + (1.0 - z) * (c * (r1 - r2) - r2)


def psi_ipw(theta, X, z, y):
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    eta = X @ b
    e = expit(eta)
    odds = _odds(X, b)
    return np.column_stack([
        (z - e)[:, None] * X,
        z - pi,
        z * (y - mu1),
        odds * (1.0 - z) * (y - mu0),
    ])


def jac_ipw(theta, X, z, y):
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    e = expit(X @ b)
    odds = _odds(X, b)
    J = np.zeros((p + 3, p + 3))
    J[:p, :p] = -(X.T * (e * (1.0 - e))) @ X
    J[p, p] = -X.shape[0]
    J[p + 1, p + 1] = -z.sum()
    J[p + 2, :p] = X.T @ (odds * (1.0 - z) * (y - mu0))
    J[p + 2, p + 2] = -(odds * (1.0 - z)).sum()
    return J


def psi_mipw(theta, X, z, y, delta):
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    g = mipw_block1_weights(X, z, b, delta, pi)
    odds = _odds(X, b)
    return np.column_stack([
        g[:, None] * X,
        z - pi,
        z * (y - mu1),
        odds * (1.0 - z) * (y - mu0),
    ])


def jac_mipw(theta, X, z, y, delta):
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    odds, c, os, r1, r2 = _mixed(X, b, delta, pi)
    d2 = r1 - r1 * r1 - r2 + r2 * r2
    h = (1.0 - delta) * z * d2 + (1.0 - z) * (c * d2 - (r2 - r2 * r2))
    dr1 = -r1 / os
    dr2 = -r2 / (1.0 + os)
    dg_dc = (1.0 - delta) * z * (dr1 - dr2) + (1.0 - z) * ((r1 - r2) + c * (dr1 - dr2) - dr2)
    dc_dpi = delta / (1.0 - pi) ** 2
    J = np.zeros((p + 3, p + 3))
    J[:p, :p] = (X.T * h) @ X
    J[:p, p] = X.T @ (dg_dc * dc_dpi)
    J[p, p] = -X.shape[0]
    J[p + 1, p + 1] = -z.sum()
    J[p + 2, :p] = X.T @ (odds * (1.0 - z) * (y - mu0))
    J[p + 2, p + 2] = -(odds * (1.0 - z)).sum()
    return J


def psi_ow(theta, X, z, y):
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    e = expit(X @ b)
    return np.column_stack([
        (z - e)[:, None] * X,
        z - pi,
        (1.0 - e) * z * (y - mu1),
        e * (1.0 - z) * (y - mu0),
    ])


def jac_ow(theta, X, z, y):
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    e = expit(X @ b)
    w = e * (1.0 - e)
    J = np.zeros((p + 3, p + 3))
    J[:p, :p] = -(X.T * w) @ X
    J[p, p] = -X.shape[0]
    J[p + 1, :p] = -X.T @ (w * z * (y - mu1))
    J[p + 1, p + 1] = -((1.0 - e) * z).sum()
    J[p + 2, :p] = X.T @ (w * (1.0 - z) * (y - mu0))
    J[p + 2, p + 2] = -(e * (1.0 - z)).sum()
    return J


def psi_star(theta, X, z, y, X_star, z_star, y_star, delta):
    """Per-unit estimating function on an augmented (original + mixed) sample."""
    p = X.shape[1]
    b, pi, mu1, mu0 = split(theta, p)
    _, c, os, r1, r2 = _mixed(X_star, b, delta, pi)
    score = z_star * r1 - r2
    return np.column_stack([
        score[:, None] * X_star,
        z - pi,
        z * (y - mu1),
        (os - c) * (1.0 - z_star) * (y_star - mu0),
    ])


def psi_for(system, delta=None):
    """Return ``(psi, jac)`` callables with signature ``f(theta, X, z, y)``."""
    if system == "ipw":
        return psi_ipw, jac_ipw
    if system == "ow":
        return psi_ow, jac_ow
    if system == "mipw":
        if delta is None:
            raise ValueError("the mipw system needs delta")
        return (lambda t, X, z, y: psi_mipw(t, X, z, y, delta),
                lambda t, X, z, y: jac_mipw(t, X, z, y, delta))
    raise ValueError(f"unknown estimating system {system!r}; expected one of {SYSTEMS}")
