"""Logistic propensity fits and the odds algebra of mixed distributions.

Throughout, "odds" means the propensity odds ``e / (1 - e)`` and ``pi`` the
marginal treatment probability, so ``pi / (1 - pi)`` is the marginal odds.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from ._newton import maximize
from .errors import (BoundaryError, ConvergenceError, DegenerateMixingError,
                     SeparationError, SingularIdentificationError)

SCORE_TOL = 1e-10
MAX_ITER = 100
MAX_COEF_NORM = 1e6


def check_delta(delta):
    d = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d <= 0.0) or np.any(d >= 1.0):
        raise BoundaryError(f"delta must lie strictly inside (0,1), got {delta!r}")
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class Standardizer:
    """Affine map to centered, unit-scale covariates plus an intercept column.

    Solvers work on the standardized design for conditioning; coefficients are
    reported on the original covariate scale.
    """

    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        return cls(center, scale)

    def design(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], X.shape[1] + 1))
        out[:, 0] = 1.0
        out[:, 1:] = (X - self.center) / self.scale
        return out

    def to_original(self, b):
        slopes = b[1:] / self.scale
        return np.concatenate([[b[0] - slopes @ self.center], slopes])

    def to_standard(self, beta):
        slopes = beta[1:] * self.scale
        return np.concatenate([[beta[0] + beta[1:] @ self.center], slopes])


def expit(eta):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(eta, dtype=float)))


@dataclass(frozen=True, eq=False)
class PropensityFit:
    """Maximum-likelihood logistic propensity model; ``beta`` is intercept-first."""

    beta: np.ndarray
    fitted_probs: np.ndarray
    log_likelihood: float
    converged: bool
    iterations: int
    score_norm: float = 0.0

    @property
    def odds(self):
        p = self.fitted_probs
        return p / (1.0 - p)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return expit(self.beta[0] + X @ self.beta[1:])

    def predict_odds(self, X):
        X = np.asarray(X, dtype=float)
        return np.exp(np.clip(self.beta[0] + X @ self.beta[1:], -700, 700))


def _check_probs(p, what):
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise SeparationError(
            f"{what}: fitted propensities reached 0 or 1 in floating point; separation suspected",
            trace={"min_prob": float(p.min()), "max_prob": float(p.max())})


def fit_logistic(sample, tol=SCORE_TOL, max_iter=MAX_ITER):
    """Logistic regression of treatment on covariates by damped Newton-Raphson.

    Starts at zero and stops when the score, divided by N, has norm below
    ``tol``.  Raises :class:`SeparationError` when coefficients diverge or the
    iteration cap is hit.
    """
    std = Standardizer.fit(sample.covariates)
    X = std.design(sample.covariates)
    z = np.ascontiguousarray(sample.treatments)
    b0 = np.zeros(X.shape[1])
    try:
        res = maximize(lambda b: kernels.logistic_terms(X, z, b), b0, tol=tol, scale=sample.n,
                       max_iter=max_iter, max_norm=MAX_COEF_NORM, what="logistic fit")
    except SeparationError:
        raise
    except ConvergenceError as exc:
        raise SeparationError(f"{exc}; separation suspected", trace=exc.trace) from None
    p = expit(X @ res.x)
    _check_probs(p, "logistic fit")
    return PropensityFit(
        beta=std.to_original(res.x),
        fitted_probs=p,
        log_likelihood=res.value,
        converged=True,
        iterations=res.iterations,
        score_norm=float(np.linalg.norm(res.grad)),
    )


def fit_mixed_logistic(X, z, delta, pi, b0=None, tol=SCORE_TOL, max_iter=MAX_ITER):
    """MLE of ``b`` when the odds of ``z`` are ``(1-delta) exp(X b) + delta pi/(1-pi)``.

    ``X`` is an intercept-augmented design.  This is the likelihood of the
    synthetic propensity score on a mixed sample; returns the coefficients on
    the design's scale.
    """
    X = np.ascontiguousarray(X, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    c = delta * pi / (1.0 - pi)
    b0 = np.zeros(X.shape[1]) if b0 is None else np.asarray(b0, dtype=float)
    try:
        res = maximize(lambda b: kernels.mixed_logistic_terms(X, z, b, delta, c), b0, tol=tol,
                       scale=X.shape[0], max_iter=max_iter, max_norm=MAX_COEF_NORM,
                       what="mixed logistic fit")
    except SeparationError:
        raise
    except ConvergenceError as exc:
        raise SeparationError(f"{exc}; separation suspected", trace=exc.trace) from None
    return res


def simple_mixed_odds(odds, delta, pi):
    """Synthetic odds ``(1-delta) * odds + delta * pi/(1-pi)`` under simple mixing."""
    delta = check_delta(delta)
    odds = np.asarray(odds, dtype=float)
    out = (1.0 - delta) * odds + delta * (pi / (1.0 - pi))
    return float(out) if out.ndim == 0 else out


def adjust_mixed_weights(weights_star, delta, pi):
    """Map weights balancing a mixed sample back to the original sample.

    Inverse of :func:`simple_mixed_odds`: ``(w* - delta pi/(1-pi)) / (1-delta)``.
    The result may be negative for weights that were not produced from odds.
    """
    delta = check_delta(delta)
    w = (np.asarray(weights_star, dtype=float) - delta * pi / (1.0 - pi)) / (1.0 - delta)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class MixSpec:
    """Mixing proportions of a mixed distribution.

    ``theta1`` / ``theta0`` are the shares of the original treated density in
    the mixed treated / control densities; ``pi_star`` is the marginal
    treatment probability of the mixed distribution (``None`` means "same as
    the original").  Scalars or per-unit arrays are accepted.
    """

    theta1: object
    theta0: object
    pi_star: object = None
    delta: object = None

    @classmethod
    def simple(cls, delta, pi_star=None):
        delta = check_delta(delta)
        return cls(theta1=1.0 - delta, theta0=0.0, pi_star=pi_star, delta=delta)

    def resolved_pi_star(self, pi):
        return pi if self.pi_star is None else self.pi_star

    def identifiable(self):
        return bool(np.all(np.asarray(self.theta1) != np.asarray(self.theta0)))


def general_mixed_odds(odds, mix, pi):
    """Synthetic propensity odds of a general mixed distribution.

    ``pi*/(1-pi*) * (theta1*odds + (1-theta1)*m) / (theta0*odds + (1-theta0)*m)``
    with ``m = pi/(1-pi)``.
    """
    odds = np.asarray(odds, dtype=float)
    m = pi / (1.0 - pi)
    ps = mix.resolved_pi_star(pi)
    t1 = np.asarray(mix.theta1, dtype=float)
    t0 = np.asarray(mix.theta0, dtype=float)
    num = t1 * odds + (1.0 - t1) * m
    den = t0 * odds + (1.0 - t0) * m
    if np.any(den <= 0.0):
        raise DegenerateMixingError("mixed control density vanishes: theta0*odds + (1-theta0)*m <= 0")
    if ps == pi and np.all(t0 == 0.0):
        # den == m and the prefactor is 1/m: skip the round trip so the
        # simple preset matches simple_mixed_odds bit for bit
        out = num
    else:
        out = ps / (1.0 - ps) * num / den
    return float(out) if out.ndim == 0 else out


def identification_weights(odds_star, mix, pi):
    """Weights ``(w0, w1)`` identifying E[Y(0) | Z=1] from the mixed distribution.

    With mixed-sample draws, the counterfactual mean equals
    ``(1-pi)/pi * (E[w0 Z* Y*]/pi* - E[w1 (1-Z*) Y*]/(1-pi*))``; see
    :func:`identified_control_mean`.  Both thetas are read at the same x.
    """
    t1 = np.asarray(mix.theta1, dtype=float)
    t0 = np.asarray(mix.theta0, dtype=float)
    if np.any(t1 == t0):
        raise SingularIdentificationError("theta1 must differ from theta0 for identification")
    os = np.asarray(odds_star, dtype=float)
    ps = mix.resolved_pi_star(pi)
    ms = ps / (1.0 - ps)
    m = pi / (1.0 - pi)
    den = t0 * os - t1 * ms
    if np.any(np.abs(den) < 1e-12):
        raise SingularIdentificationError("identification denominator is (numerically) zero")
    common = m * ((1.0 - t1) * ms - (1.0 - t0) * os) / den / (t0 - t1)
    w0, w1 = t0 * common, t1 * common
    if w0.ndim == 0:
        return float(w0), float(w1)
    return w0, w1


def identified_control_mean(y_star, z_star, w0, w1, pi, pi_star):
    """Sample plug-in of the identification formula for E[Y(0) | Z=1]."""
    y_star = np.asarray(y_star, dtype=float)
    z_star = np.asarray(z_star, dtype=float)
    a = np.mean(w0 * z_star * y_star) / pi_star
    b = np.mean(w1 * (1.0 - z_star) * y_star) / (1.0 - pi_star)
    return (1.0 - pi) / pi * (a - b)
