"""The mixing algorithm and the bagged MIPW.M estimator.

One replicate keeps every control row, and replaces each treated row, with
probability ``delta`` and independently across units, by a control row drawn
with replacement.  About ``(1 - delta) * N_t`` treated rows survive, so the
mixed treated group follows ``(1 - delta) h1 + delta h0``.

Each treated slot draws its uniform flag and its candidate control from the
replicate's stream whatever ``delta`` is.  Replicates at different ``delta``
but the same ``(seed, m)`` are therefore nested: raising ``delta`` only adds
replacements.
"""

import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._parallel import parallel_map
from .dataset import AugmentedSample
from .errors import MixCausalError, ReplicateFailureError
from .estimators import EstimateReport, WeightSet, hajek_contrast
from .propensity import Standardizer, check_delta, fit_logistic, fit_mixed_logistic
from .rng import stream

MAX_FAIL_FRAC = 0.1


@dataclass(frozen=True, eq=False)
class MixedReplicate:
    dataset: AugmentedSample
    kept_treated_ids: np.ndarray
    injected_control_draws: np.ndarray
    rows: np.ndarray


def mix_rows(treated, controls, n, delta, rng):
    """Row map of one replicate: ``rows[i]`` is the original row now at position i."""
    u = rng.random(treated.size)
    cand = rng.integers(0, controls.size, size=treated.size)
    flagged = u < delta
    rows = np.arange(n)
    rows[treated[flagged]] = controls[cand[flagged]]
    return rows, flagged


def mix_once(sample, delta, rng):
    """Draw one mixed replicate of ``sample``."""
    delta = check_delta(delta)
    t, c = sample.treated_index, sample.control_index
    rows, flagged = mix_rows(t, c, sample.n, delta, rng)
    dataset = AugmentedSample(
        original=sample,
        mixed_outcomes=sample.outcomes[rows],
        mixed_treatments=sample.treatments,
        mixed_covariates=sample.covariates[rows],
    )
    return MixedReplicate(dataset, t[~flagged], rows[t[flagged]], rows)


def replicate_rows(sample, delta, seed, m):
    """Row map of replicate ``m`` under master ``seed``."""
    return mix_rows(sample.treated_index, sample.control_index, sample.n, delta,
                    stream(seed, m))[0]


def average_replicate_weights(per_replicate, what):
    """Mean of the successful replicate weight vectors (``None`` marks a failure)."""
    good = [w for w in per_replicate if w is not None]
    failed = len(per_replicate) - len(good)
    if failed > MAX_FAIL_FRAC * len(per_replicate):
        raise ReplicateFailureError(f"{what}: {failed} of {len(per_replicate)} replicates failed")
    if failed:
        warnings.warn(f"{what}: dropped {failed} failed replicates", RuntimeWarning, stacklevel=3)
    return np.mean(good, axis=0), failed


def _mipw_m_replicate(m, sample, X, b0, delta, seed):
    rows = replicate_rows(sample, delta, seed, m)
    pi = sample.pi_hat
    try:
        res = fit_mixed_logistic(X[rows], sample.treatments, delta, pi, b0=b0)
    except MixCausalError:
        return None
    eta = np.clip(X[sample.control_index] @ res.x, -700.0, 700.0)
    # adjusted weight = synthetic odds at the control's own covariates minus delta*pi/(1-pi)
    return (1.0 - delta) * np.exp(eta)


def mipw_m(sample, delta, M, seed, n_jobs=None):
    """MIPW.M: bagged adjusted weights from ``M`` mixed replicates.

    Each replicate fits the synthetic-propensity likelihood on its mixed rows;
    the adjusted weights at the original controls are averaged over
    replicates and plugged into the Hajek contrast.
    """
    delta = check_delta(delta)
    if M < 1:
        raise ValueError("M must be at least 1")
    std = Standardizer.fit(sample.covariates)
    X = std.design(sample.covariates)
    b0 = std.to_standard(fit_logistic(sample).beta)
    fn = partial(_mipw_m_replicate, sample=sample, X=X, b0=b0, delta=delta, seed=seed)
    W, failed = average_replicate_weights(parallel_map(fn, range(M), n_jobs), "MIPW.M")
    ws = WeightSet(W, "averaged")
    diagnostics = ws.diagnostics()
    diagnostics.update(M=M, failed_replicates=failed)
    return EstimateReport("ATT", "mipw_m", hajek_contrast(sample, ws), delta=delta,
                          diagnostics=diagnostics, weights=ws)
