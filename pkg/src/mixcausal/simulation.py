"""Simulation designs, the Monte Carlo runner and the conditional-variance diagnostic.

Two designs are provided.  The linear design draws five standard normal
covariates, assigns treatment from a logistic propensity whose coefficients
set the overlap level, and generates ``Y = gamma_0 + X gamma + tau Z + N(0,1)``.
The misspecified design keeps that data-generating process but only reveals
Kang-Schafer transformed covariates to the analyst.
"""

import csv
import io
import warnings
from dataclasses import dataclass, field, fields, replace
from functools import partial

import numpy as np

from . import __version__
from ._parallel import parallel_map
from .balancing import eb_att, mixed_eb
from .dataset import AugmentedSample, ObservedSample
from .errors import DataError, ExtremeWeightWarning, MixCausalError
from .estimators import ipw_att, mipw_att, ow_ato
from .propensity import expit, fit_logistic
from .resample import mipw_m
from .rng import stream

OVERLAP_BETAS = {
    "strong": (-0.5, 0.5, -0.5, 0.5, 0.5, 0.5),
    "moderate": (-1.0, 1.0, -1.0, 0.5, -0.5, 0.5),
    "weak": (-2.0, 2.0, -2.0, 1.0, 0.0, 0.0),
}
LINEAR_GAMMA = (2.0, 2.0, 2.0, 0.0, 1.0, -1.0)
LINEAR_TAU = 1.0
KS_GAMMA = (-13.7, 27.4, 13.7, 13.7, 13.7, 13.7)
KS_TAU = 210.0
DEFAULT_DELTA_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))

DELTA_FREE = ("ipw", "ow", "eb", "oracle_att", "oracle_ato")
DELTA_DEPENDENT = ("mipw", "meb", "mipw_m")
ESTIMATORS = DELTA_FREE + DELTA_DEPENDENT
FAIL_FLAG_FRAC = 0.05


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation cell family.

    ``gamma`` and ``tau`` default to the linear design, or to the
    Kang-Schafer outcome model when ``misspecified`` is set.  The first
    ``gamma`` entry is an intercept.  ``M`` is the number of mixing
    replicates used by MEB and MIPW.M.
    """

    name: str = "scenario"
    n: int = 1000
    overlap: str = "strong"
    misspecified: bool = False
    gamma: tuple = None
    tau: float = None
    delta_grid: tuple = DEFAULT_DELTA_GRID
    replications: int = 500
    seed: int = 20240101
    M: int = 200

    def __post_init__(self):
        if self.overlap not in OVERLAP_BETAS:
            raise ValueError(f"overlap must be one of {sorted(OVERLAP_BETAS)}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", KS_GAMMA if self.misspecified else LINEAR_GAMMA)
        if self.tau is None:
            object.__setattr__(self, "tau", KS_TAU if self.misspecified else LINEAR_TAU)
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        if len(self.gamma) != 6:
            raise ValueError("gamma needs 6 entries (intercept + 5 slopes)")
        for d in self.delta_grid:
            if not 0.0 < d < 1.0:
                raise ValueError(f"delta grid value {d} is not strictly inside (0,1)")

    @property
    def beta(self):
        return np.array(OVERLAP_BETAS[self.overlap])


def kang_schafer(X):
    """Kang-Schafer style covariate transform of a 5-column matrix."""
    X = np.asarray(X, dtype=float)
    x1, x2, x3, x4, x5 = X.T
    return np.column_stack([
        np.exp(x1 / 2.0),
        x2 / (1.0 + np.exp(x1)) + 10.0,
        (x1 * x3 / 25.0 + 0.6) ** 3,
        (x1 + x5 + 20.0) ** 2,
        np.sqrt(np.abs(x3 - x5 + 1.0)),
    ])


@dataclass(frozen=True, eq=False)
class Truth:
    """Latent quantities of a simulated replicate (never seen by estimators)."""

    propensity: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    latent_covariates: np.ndarray


def _draw_units(spec, rng, n):
    X = rng.standard_normal((n, 5))
    b = spec.beta
    e = expit(b[0] + X @ b[1:])
    z = (rng.random(n) < e).astype(float)
    g = np.asarray(spec.gamma)
    y0 = g[0] + X @ g[1:] + rng.standard_normal(n)
    return X, e, z, y0


def generate_with_truth(spec, rep_index):
    rng = stream(spec.seed, rep_index)
    X, e, z, y0 = _draw_units(spec, rng, spec.n)
    y1 = y0 + spec.tau
    y = np.where(z == 1.0, y1, y0)
    observed = kang_schafer(X) if spec.misspecified else X
    names = tuple(f"x{j + 1}" for j in range(5))
    return ObservedSample(y, z, observed, names), Truth(e, y1, y0, X)


def generate(spec, rep_index):
    """Replicate ``rep_index`` of the scenario; fully determined by ``(seed, rep_index)``."""
    return generate_with_truth(spec, rep_index)[0]


def generate_augmented(spec, rep_index, delta):
    """Observed replicate paired with an exact draw from its simple mixed distribution.

    Treated rows are independently swapped, with probability ``delta``, for
    fresh control-population units drawn from the same process; control rows
    are kept.
    """
    sample = generate(spec, rep_index)
    rng = stream(spec.seed, rep_index, 1)
    flagged = sample.treated_index[rng.random(sample.n_treated) < delta]
    need = flagged.size
    pool_X, pool_y = [], []
    while sum(len(p) for p in pool_y) < need:
        X, _, z, y0 = _draw_units(spec, rng, max(2 * need, 64))
        ctl = z == 0.0
        pool_X.append(X[ctl])
        pool_y.append(y0[ctl])
    Xc = np.concatenate(pool_X)[:need] if need else np.empty((0, 5))
    yc = np.concatenate(pool_y)[:need] if need else np.empty(0)
    Xm = np.array(sample.covariates)
    ym = np.array(sample.outcomes)
    Xm[flagged] = kang_schafer(Xc) if spec.misspecified else Xc
    ym[flagged] = yc
    return AugmentedSample(sample, ym, sample.treatments, Xm)


def eq4_variance(sample, true_propensities, v1=1.0, v0=1.0):
    """Conditional variance of the IPW contrast given (X, Z) with known outcome variances."""
    z = sample.treatments
    e = np.asarray(true_propensities, dtype=float)
    with np.errstate(divide="ignore"):
        odds = e / (1.0 - e)
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), z.shape)
    v0 = np.broadcast_to(np.asarray(v0, dtype=float), z.shape)
    treated = (z * v1).sum() / z.sum() ** 2
    wc = odds * (1.0 - z)
    return float(treated + (wc ** 2 * v0).sum() / wc.sum() ** 2)


def _replicate_seed(spec, rep_index):
    return int(np.random.SeedSequence(spec.seed, spawn_key=(rep_index, 2)).generate_state(1)[0])


def _run_replicate(rep_index, spec, estimators):
    """Estimates for one replicate: ``{(estimator, delta): (point, robust_se)}``.

    Failed estimators map to ``None``; ``delta`` is ``None`` for estimators
    that do not mix.
    """
    out = {}
    try:
        sample, truth = generate_with_truth(spec, rep_index)
    except DataError:
        for est in estimators:
            for d in (spec.delta_grid if est in DELTA_DEPENDENT else (None,)):
                out[(est, d)] = None
        return out
    mix_seed = _replicate_seed(spec, rep_index)

    def attempt(key, fn):
        try:
            r = fn()
            out[key] = (r.point, r.robust_se)
        except (MixCausalError, ZeroDivisionError, np.linalg.LinAlgError):
            out[key] = None

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtremeWeightWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = None
        if any(e in estimators for e in ("ipw", "ow", "mipw", "mipw_m")):
            try:
                fit = fit_logistic(sample)
            except MixCausalError:
                fit = None
        for est in estimators:
            if est == "oracle_att":
                t = sample.treated_index
                out[(est, None)] = (float(np.mean(truth.y1[t] - truth.y0[t])), None)
            elif est == "oracle_ato":
                w = truth.propensity * (1.0 - truth.propensity)
                out[(est, None)] = (float(w @ (truth.y1 - truth.y0) / w.sum()), None)
            elif est in ("ipw", "ow") and fit is None:
                out[(est, None)] = None
            elif est == "ipw":
                attempt((est, None), lambda: ipw_att(sample, fit))
            elif est == "ow":
                attempt((est, None), lambda: ow_ato(sample, fit))
            elif est == "eb":
                attempt((est, None), lambda: eb_att(sample))
            elif est == "mipw":
                for d in spec.delta_grid:
                    if fit is None:
                        out[(est, d)] = None
                    else:
                        attempt((est, d), lambda d=d: mipw_att(sample, d, fit=fit)[0])
            elif est == "meb":
                for d in spec.delta_grid:
                    attempt((est, d), lambda d=d: mixed_eb(sample, d, spec.M, mix_seed, n_jobs=1))
            elif est == "mipw_m":
                for d in spec.delta_grid:
                    attempt((est, d), lambda d=d: mipw_m(sample, d, spec.M, mix_seed, n_jobs=1))
            else:
                raise ValueError(f"unknown estimator {est!r}; choose from {ESTIMATORS}")
    return out


@dataclass
class MonteCarloTable:
    """Per-(overlap, delta, estimator) summaries plus the raw replicate estimates."""

    spec: ScenarioSpec
    rows: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    robust_ses: dict = field(default_factory=dict)

    COLUMNS = ("scenario", "overlap", "delta", "estimator", "mean_est", "sd_est",
               "mean_robust_se", "n_fail", "n_rep", "flagged")

    def cell(self, estimator, delta=None):
        for row in self.rows:
            if row["estimator"] == estimator and (delta is None or row["delta"] is None
                                                  or abs(row["delta"] - delta) < 1e-9):
                return row
        raise KeyError((estimator, delta))

    def values(self, estimator, delta=None):
        key = (estimator, None if estimator in DELTA_FREE else round(float(delta), 10))
        return self.estimates[key]

    def to_csv_text(self):
        buf = io.StringIO()
        s = self.spec
        buf.write(f"# mixcausal {__version__} seed={s.seed} replications={s.replications} "
                  f"n={s.n} M={s.M} misspecified={str(s.misspecified).lower()}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.COLUMNS])
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_monte_carlo(spec, estimators, n_jobs=None):
    """Run ``spec.replications`` replicates and summarize each estimator cell.

    Estimators that do not depend on ``delta`` are computed once per
    replicate and repeated on every grid row.  Cells with more than 5%
    failed replicates are flagged.
    """
    estimators = tuple(estimators)
    if not estimators:
        raise ValueError("select at least one estimator")
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValueError(f"unknown estimator {est!r}; choose from {ESTIMATORS}")
    fn = partial(_run_replicate, spec=spec, estimators=estimators)
    results = parallel_map(fn, range(spec.replications), n_jobs)

    table = MonteCarloTable(spec)
    for est in estimators:
        deltas = spec.delta_grid if est in DELTA_DEPENDENT else (None,)
        for d in deltas:
            key = (est, None if d is None else round(d, 10))
            vals = [r.get((est, d)) for r in results]
            ok = [v for v in vals if v is not None]
            table.estimates[key] = np.array([v[0] for v in ok])
            table.robust_ses[key] = np.array([v[1] for v in ok if v[1] is not None])
    for d in spec.delta_grid:
        for est in estimators:
            key = (est, None if est in DELTA_FREE else round(d, 10))
            pts = table.estimates[key]
            ses = table.robust_ses[key]
            n_fail = spec.replications - pts.size
            table.rows.append({
                "scenario": spec.name,
                "overlap": spec.overlap,
                "delta": d,
                "estimator": est,
                "mean_est": float(pts.mean()) if pts.size else float("nan"),
                "sd_est": float(pts.std(ddof=1)) if pts.size > 1 else float("nan"),
                "mean_robust_se": float(ses.mean()) if ses.size else None,
                "n_fail": n_fail,
                "n_rep": int(pts.size),
                "flagged": n_fail > FAIL_FLAG_FRAC * spec.replications,
            })
    return table


def parse_delta_grid(text):
    """Parse ``start:stop:step`` (inclusive stop) or a comma list into a delta tuple."""
    text = str(text).strip()
    if ":" in text:
        start, stop, step = (float(p) for p in text.split(":"))
        if step <= 0:
            raise ValueError("delta grid step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        grid = tuple(round(start + k * step, 10) for k in range(count))
    else:
        grid = tuple(float(p) for p in text.split(",") if p.strip())
    if not grid:
        raise ValueError("empty delta grid")
    for d in grid:
        if not 0.0 < d < 1.0:
            raise ValueError(f"delta must lie strictly inside (0,1); grid touches {d}")
    return grid


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def load_scenario(path):
    """Read a ``key = value`` scenario file into a :class:`ScenarioSpec`.

    Keys mirror the dataclass fields; ``#`` starts a comment, lists are
    comma separated and ``delta_grid`` also accepts ``start:stop:step``.
    """
    known = {f.name for f in fields(ScenarioSpec)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown scenario key {key!r}")
            values[key] = value
    kwargs = {}
    for key, value in values.items():
        if key in ("n", "replications", "seed", "M"):
            kwargs[key] = int(value)
        elif key == "tau":
            kwargs[key] = float(value)
        elif key == "misspecified":
            kwargs[key] = _BOOL[value.lower()]
        elif key == "gamma":
            kwargs[key] = tuple(float(v) for v in value.split(","))
        elif key == "delta_grid":
            kwargs[key] = parse_delta_grid(value)
        else:
            kwargs[key] = value
    return ScenarioSpec(**kwargs)


def with_overrides(spec, **changes):
    return replace(spec, **{k: v for k, v in changes.items() if v is not None})
