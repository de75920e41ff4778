"""ATT/ATO point estimators: IPW, MIPW (observed-data M-estimation) and OW."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import equations, kernels
from ._newton import maximize
from .errors import (ConvergenceError, DegenerateWeightsError, ExtremeWeightWarning,
                     MixCausalError, MultipleRootsWarning)
from .propensity import (MAX_COEF_NORM, MAX_ITER, SCORE_TOL, Standardizer, check_delta,
                         fit_logistic, fit_mixed_logistic, simple_mixed_odds)

PROVENANCES = ("model", "mixed-model", "eb", "mixed-eb", "averaged")
EXTREME_ODDS = 1e3


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Control-unit weights on the odds scale, tagged with where they came from."""

    control_weights: np.ndarray
    provenance: str

    def __post_init__(self):
        w = np.array(self.control_weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "control_weights", w)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown weight provenance {self.provenance!r}")
        if self.provenance in ("model", "mixed-model") and np.any(w < 0):
            raise ValueError("model-based weights must be nonnegative")

    @property
    def negative_count(self):
        return int((self.control_weights < 0).sum())

    def diagnostics(self):
        w = self.control_weights
        total = w.sum()
        return {
            "negative_weights": self.negative_count,
            "max_weight": float(np.abs(w).max() / abs(total)) if total else float("inf"),
            "ess": float(total ** 2 / (w ** 2).sum()) if (w ** 2).sum() else 0.0,
        }


@dataclass(frozen=True)
class ThetaHat:
    """Stacked M-estimate ``(beta, pi, mu1, mu0)``; ``beta`` on the covariate scale."""

    beta: np.ndarray
    pi: float
    mu1: float
    mu0: float

    @property
    def att(self):
        return self.mu1 - self.mu0

    def as_vector(self):
        return np.concatenate([self.beta, [self.pi, self.mu1, self.mu0]])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:-3].copy(), float(v[-3]), float(v[-2]), float(v[-1]))


@dataclass
class EstimateReport:
    estimand: str
    estimator: str
    point: float
    delta: float = None
    robust_se: float = None
    boot_se: float = None
    diagnostics: dict = field(default_factory=dict)
    weights: WeightSet = None

    def to_dict(self, seed=None, version=None):
        diag = {k: self.diagnostics.get(k) for k in ("negative_weights", "max_weight", "ess")}
        diag.update({k: v for k, v in self.diagnostics.items() if k not in diag})
        return {
            "estimand": self.estimand,
            "estimator": self.estimator,
            "delta": self.delta,
            "point": self.point,
            "robust_se": self.robust_se,
            "boot_se": self.boot_se,
            "diagnostics": diag,
            "seed": seed,
            "version": version,
        }


def hajek_contrast(sample, weights):
    """Treated mean minus the ``weights``-weighted control mean."""
    w = weights.control_weights if isinstance(weights, WeightSet) else np.asarray(weights, float)
    c = sample.control_index
    if w.shape != c.shape:
        raise ValueError(f"{w.shape[0]} weights for {c.shape[0]} control units")
    total = w.sum()
    if not np.isfinite(total) or abs(total) <= 1e-14 * np.abs(w).sum() or total == 0.0:
        raise DegenerateWeightsError("control weights sum to zero")
    y = sample.outcomes
    return float(y[sample.treated_index].mean() - (w @ y[c]) / total)


def _maybe_warn_extreme(odds):
    top = float(np.max(odds)) if odds.size else 0.0
    if top > EXTREME_ODDS:
        warnings.warn(f"largest control weight (odds {top:.3g}) exceeds {EXTREME_ODDS:g}",
                      ExtremeWeightWarning, stacklevel=3)


def _robust(sample, theta, system, delta=None):
    from .inference import sandwich_se

    return sandwich_se(sample, theta, system, delta=delta).se


def ipw_att(sample, fit=None, robust=True):
    """Hajek IPW estimate of the ATT with control weights ``e/(1-e)``."""
    fit = fit_logistic(sample) if fit is None else fit
    odds = fit.odds[sample.control_index]
    _maybe_warn_extreme(odds)
    ws = WeightSet(odds, "model")
    report = EstimateReport("ATT", "ipw", hajek_contrast(sample, ws),
                            diagnostics=ws.diagnostics(), weights=ws)
    if robust:
        report.robust_se = _robust(sample, _ipw_theta(sample, fit), "ipw")
    return report


def _ipw_theta(sample, fit):
    odds = fit.odds
    ctl = sample.control_index
    y = sample.outcomes
    mu0 = float(odds[ctl] @ y[ctl] / odds[ctl].sum())
    return ThetaHat(fit.beta, sample.pi_hat, float(y[sample.treated_index].mean()), mu0)


def ow_ato(sample, fit=None, robust=True):
    """Overlap-weighted estimate of the ATO: treated weights ``1-e``, controls ``e``."""
    fit = fit_logistic(sample) if fit is None else fit
    e = fit.fitted_probs
    y = sample.outcomes
    t, c = sample.treated_index, sample.control_index
    wt, wc = 1.0 - e[t], e[c]
    if wt.sum() <= 0 or wc.sum() <= 0:
        raise DegenerateWeightsError("overlap weights sum to zero in a treatment group")
    mu1 = float(wt @ y[t] / wt.sum())
    mu0 = float(wc @ y[c] / wc.sum())
    ws = WeightSet(wc, "model")
    report = EstimateReport("ATO", "ow", mu1 - mu0, diagnostics=ws.diagnostics(), weights=ws)
    if robust:
        report.robust_se = _robust(sample, ThetaHat(fit.beta, sample.pi_hat, mu1, mu0), "ow")
    return report


def _solve_mipw_beta(X, z, delta, pi, b0, tol=SCORE_TOL, max_iter=MAX_ITER):
    c = delta * pi / (1.0 - pi)
    return maximize(lambda b: kernels.mipw_objective_terms(X, z, b, delta, c), b0, tol=tol,
                    scale=X.shape[0], max_iter=max_iter, max_norm=MAX_COEF_NORM,
                    what="MIPW block-1 solve")


def mipw_att(sample, delta, robust=True, check_roots=False, fit=None):
    """MIPW estimate of the ATT computed from the observed sample alone.

    Solves the stacked observed-data system block by block: ``pi`` is the
    treated share, the logistic coefficients solve the mixed score equation
    (warm-started at the ordinary MLE), and the two means are closed-form.
    Returns ``(report, theta_hat)``.
    """
    delta = check_delta(delta)
    std = Standardizer.fit(sample.covariates)
    X = std.design(sample.covariates)
    z = np.ascontiguousarray(sample.treatments)
    y = sample.outcomes
    pi = sample.pi_hat
    fit = fit_logistic(sample) if fit is None else fit
    b_start = std.to_standard(fit.beta)
    res = _solve_mipw_beta(X, z, delta, pi, b_start)
    b = res.x

    diagnostics = {"iterations": res.iterations}
    if check_roots:
        diagnostics["multiple_roots_suspected"] = _perturbed_roots_disagree(X, z, delta, pi, b)

    odds = np.exp(np.clip(X @ b, -700.0, 700.0))
    t, ctl = sample.treated_index, sample.control_index
    mu1 = float(y[t].mean())
    mu0 = float(odds[ctl] @ y[ctl] / odds[ctl].sum())
    theta_std = np.concatenate([b, [pi, mu1, mu0]])
    resid = equations.psi_mipw(theta_std, X, z, y, delta).sum(axis=0)
    resid_norm = float(np.linalg.norm(resid))
    diagnostics["residual_norm"] = resid_norm
    if resid_norm > 1e-8 * sample.n:
        raise ConvergenceError(f"MIPW stacked residual {resid_norm:.3g} exceeds 1e-8*N",
                               trace={"residual": resid})

    ws = WeightSet((1.0 - delta) * odds[ctl], "mixed-model")
    diagnostics.update(ws.diagnostics())
    theta = ThetaHat(std.to_original(b), pi, mu1, mu0)
    report = EstimateReport("ATT", "mipw", mu1 - mu0, delta=delta, diagnostics=diagnostics,
                            weights=ws)
    if robust:
        report.robust_se = _robust(sample, theta, "mipw", delta=delta)
    return report, theta


def _perturbed_roots_disagree(X, z, delta, pi, b, n_starts=3, scale=0.5, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n_starts):
        start = b + rng.normal(scale=scale, size=b.shape)
        try:
            other = _solve_mipw_beta(X, z, delta, pi, start).x
        except MixCausalError:
            continue
        if np.max(np.abs(other - b)) > 1e-6:
            warnings.warn("MIPW block-1 equation has distinct roots from perturbed starts",
                          MultipleRootsWarning, stacklevel=3)
            return True
    return False


def psi_star_residual(theta, augmented, delta):
    """Summed estimating function on an augmented sample at ``theta``.

    ``theta`` is a :class:`ThetaHat` with ``beta`` on the covariate scale.
    """
    delta = check_delta(delta)
    orig = augmented.original
    X = np.column_stack([np.ones(orig.n), orig.covariates])
    Xs = np.column_stack([np.ones(orig.n), augmented.mixed_covariates])
    return equations.psi_star(theta.as_vector(), X, orig.treatments, orig.outcomes,
                              Xs, augmented.mixed_treatments, augmented.mixed_outcomes,
                              delta).sum(axis=0)


def solve_psi_star(augmented, delta):
    """Root of the augmented-sample system; the MIPW estimate from mixed draws.

    The coefficient block is the synthetic-propensity likelihood on the mixed
    rows; the control mean is weighted by the adjusted mixed odds.
    """
    delta = check_delta(delta)
    orig = augmented.original
    std = Standardizer.fit(orig.covariates)
    Xs = std.design(augmented.mixed_covariates)
    zs = augmented.mixed_treatments
    pi = orig.pi_hat
    res = fit_mixed_logistic(Xs, zs, delta, pi)
    b = res.x
    v = (1.0 - delta) * np.exp(np.clip(Xs @ b, -700.0, 700.0))
    ctl = zs == 0.0
    ys = augmented.mixed_outcomes
    mu1 = float(orig.outcomes[orig.treated_index].mean())
    mu0 = float(v[ctl] @ ys[ctl] / v[ctl].sum())
    return ThetaHat(std.to_original(b), pi, mu1, mu0)


def mipw_weights_fixed(sample, fit, delta):
    """Adjusted mixed weights at the original controls with ``beta`` held at ``fit``.

    Equals ``(1-delta)`` times the IPW weights, so the Hajek contrast with
    these weights reproduces IPW exactly.
    """
    odds = fit.odds[sample.control_index]
    pi = sample.pi_hat
    w = simple_mixed_odds(odds, delta, pi) - delta * pi / (1.0 - pi)
    return WeightSet(w, "mixed-model")


__all__ = [
    "WeightSet", "ThetaHat", "EstimateReport", "hajek_contrast", "ipw_att", "mipw_att",
    "ow_ato", "psi_star_residual", "solve_psi_star", "mipw_weights_fixed",
]
