"""Entropy balancing for the ATT and its mixed-replicate extension (MEB)."""

from dataclasses import dataclass
from functools import partial

import numpy as np

from . import kernels
from ._parallel import parallel_map
from .errors import BalanceInfeasibleError, MixCausalError
from .estimators import EstimateReport, WeightSet, hajek_contrast
from .propensity import Standardizer, adjust_mixed_weights, check_delta
from .resample import average_replicate_weights, replicate_rows

BALANCE_TOL = 1e-10
MAX_ITER = 200
MAX_DUAL_NORM = 1e6


@dataclass(frozen=True, eq=False)
class BalanceSolution:
    """Solved entropy-balancing problem.

    ``lam`` is the dual vector for the standardized balance functions and
    ``max_imbalance`` the largest standardized gap between weighted control
    and target means.  Weights sum to the treated count (odds scale).
    """

    lam: np.ndarray
    control_weights_odds_scale: np.ndarray
    max_imbalance: float
    converged: bool
    iterations: int
    dual_history: tuple = ()


def balance_features(covariates, std, moments=1):
    """Standardized balance functions: first moments, optionally squares too."""
    Z = (np.asarray(covariates, dtype=float) - std.center) / std.scale
    if moments >= 2:
        Z = np.column_stack([Z, Z * Z])
    return Z


def solve_entropy_dual(controls, target, tol=BALANCE_TOL, names=None, lam0=None):
    """Minimize ``log sum_i exp(lam' (f_i - target))`` over controls.

    Returns ``(lam, q, iterations, dual_history)`` with ``q`` summing to one.
    """
    D = np.ascontiguousarray(controls - target)
    lam0 = np.zeros(D.shape[1]) if lam0 is None else np.ascontiguousarray(lam0, dtype=float)
    lam, q, iters, status, values = kernels.eb_dual_solve(D, lam0, tol, MAX_ITER, MAX_DUAL_NORM)
    if status != 0:
        grad = D.T @ q
        worst = int(np.argmax(np.abs(grad)))
        label = names[worst] if names is not None and worst < len(names) else f"column {worst}"
        reason = "dual diverged" if status == 2 else f"no convergence in {iters} iterations"
        raise BalanceInfeasibleError(
            f"entropy balancing infeasible ({reason}): target mean outside the control hull? "
            f"worst covariate {label!r} (imbalance {grad[worst]:.3g})",
            trace={"x": lam, "iterations": iters, "worst": label, "values": values})
    return lam, q, iters, tuple(values)


def eb_weights(sample, moments=1, tol=BALANCE_TOL):
    """Entropy-balancing control weights matching the treated covariate means."""
    std = Standardizer.fit(sample.covariates)
    F = balance_features(sample.covariates, std, moments)
    names = list(sample.column_names)
    if moments >= 2:
        names += [f"{n}^2" for n in sample.column_names]
    target = F[sample.treated_index].mean(axis=0)
    lam, q, iters, hist = solve_entropy_dual(F[sample.control_index], target, tol, names)
    imbalance = float(np.max(np.abs(q @ F[sample.control_index] - target)))
    return BalanceSolution(lam, sample.n_treated * q, imbalance, True, iters, hist)


def eb_att(sample, moments=1):
    sol = eb_weights(sample, moments)
    ws = WeightSet(sol.control_weights_odds_scale, "eb")
    diagnostics = ws.diagnostics()
    diagnostics["max_imbalance"] = sol.max_imbalance
    return EstimateReport("ATT", "eb", hajek_contrast(sample, ws), diagnostics=diagnostics,
                          weights=ws)


def _meb_replicate(m, sample, F, delta, seed, moments):
    rows = replicate_rows(sample, delta, seed, m)
    t, c = sample.treated_index, sample.control_index
    target = F[rows[t]].mean(axis=0)
    try:
        _, q, _, _ = solve_entropy_dual(F[c], target)
    except MixCausalError:
        return None
    return sample.n_treated * q


def mixed_eb_weights(sample, delta, M, seed, moments=1, n_jobs=None):
    """Average over replicates of the raw mixed-sample EB weights (odds scale).

    Returns ``(W_star, failed)``; apply :func:`adjust_mixed_weights` to get
    weights that balance the original sample.
    """
    delta = check_delta(delta)
    if M < 1:
        raise ValueError("M must be at least 1")
    std = Standardizer.fit(sample.covariates)
    F = balance_features(sample.covariates, std, moments)
    fn = partial(_meb_replicate, sample=sample, F=F, delta=delta, seed=seed, moments=moments)
    return average_replicate_weights(parallel_map(fn, range(M), n_jobs), "mixed EB")


def mixed_eb(sample, delta, M, seed, moments=1, n_jobs=None, rescale=True):
    """Mixed entropy balancing (MEB) estimate of the ATT.

    Each replicate balances the original controls against its mixed treated
    group; the averaged weights are mapped back with
    ``(w* - delta pi/(1-pi)) / (1-delta)``.  Negative adjusted weights are
    kept and counted.  ``rescale=False`` skips the ``1/(1-delta)`` factor,
    which the Hajek normalization makes irrelevant to the point estimate.
    """
    delta = check_delta(delta)
    W_star, failed = mixed_eb_weights(sample, delta, M, seed, moments, n_jobs)
    pi = sample.pi_hat
    if rescale:
        W = adjust_mixed_weights(W_star, delta, pi)
    else:
        W = W_star - delta * pi / (1.0 - pi)
    ws = WeightSet(W, "mixed-eb")
    diagnostics = ws.diagnostics()
    diagnostics.update(M=M, failed_replicates=failed)
    return EstimateReport("ATT", "meb", hajek_contrast(sample, ws), delta=delta,
                          diagnostics=diagnostics, weights=ws)
