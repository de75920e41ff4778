"""Observed samples (Y, Z, X): construction, validation and CSV round-trips."""

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Outcomes, binary treatments and an ``N x d`` covariate matrix.

    Arrays are copied and made read-only on construction, so a sample can be
    shared between threads or processes without defensive copies.
    """

    outcomes: np.ndarray
    treatments: np.ndarray
    covariates: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        y = _frozen(self.outcomes).reshape(-1)
        z_raw = np.asarray(self.treatments)
        X = _frozen(self.covariates)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        n = y.shape[0]
        if z_raw.dtype == bool:
            raise DataError("non-binary treatment: boolean coding is not accepted, use 0/1")
        if z_raw.shape != (n,) or X.shape[0] != n:
            raise DataError(
                f"length mismatch: outcomes {n}, treatments {z_raw.shape}, covariates {X.shape}")
        if n < 2:
            raise DataError("need at least two units")
        z_float = z_raw.astype(float)
        for name, arr in (("outcome", y), ("treatment", z_float), ("covariate", X)):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise DataError(f"missing or non-finite {name} value at index {tuple(bad)}")
        if not np.all((z_float == 0.0) | (z_float == 1.0)):
            bad = np.flatnonzero((z_float != 0.0) & (z_float != 1.0))[0]
            raise DataError(f"non-binary treatment value {z_float[bad]!r} at row {bad}")
        n_t = int(z_float.sum())
        if n_t == 0:
            raise DataError("no treated units")
        if n_t == n:
            raise DataError("no control units")
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} column names for {X.shape[1]} covariates")
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "treatments", _frozen(z_float))
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self):
        return self.outcomes.shape[0]

    @property
    def d(self):
        return self.covariates.shape[1]

    @cached_property
    def n_treated(self):
        return int(self.treatments.sum())

    @property
    def n_control(self):
        return self.n - self.n_treated

    @cached_property
    def treated_index(self):
        return np.flatnonzero(self.treatments == 1.0)

    @cached_property
    def control_index(self):
        return np.flatnonzero(self.treatments == 0.0)

    @property
    def pi_hat(self):
        return self.n_treated / self.n

    def check_rank(self):
        """Warn when the intercept-augmented design is rank deficient."""
        design = np.column_stack([np.ones(self.n), self.covariates])
        rank = np.linalg.matrix_rank(design)
        if rank < design.shape[1]:
            warnings.warn(f"covariate matrix is rank deficient (rank {rank} of {design.shape[1]})",
                          stacklevel=2)
            return False
        return True

    def take(self, index):
        """Sample made of the rows in ``index`` (repeats allowed)."""
        index = np.asarray(index)
        return ObservedSample(self.outcomes[index], self.treatments[index],
                              self.covariates[index], self.column_names)


@dataclass(frozen=True, eq=False)
class AugmentedSample:
    """An observed sample paired row-by-row with a draw from its mixed distribution.

    Control rows of the mixed part coincide with the original control rows.
    """

    original: ObservedSample
    mixed_outcomes: np.ndarray
    mixed_treatments: np.ndarray
    mixed_covariates: np.ndarray

    def __post_init__(self):
        n = self.original.n
        y = _frozen(self.mixed_outcomes).reshape(-1)
        z = _frozen(self.mixed_treatments).reshape(-1)
        X = _frozen(self.mixed_covariates).reshape(n, -1)
        if y.shape != (n,) or z.shape != (n,):
            raise DataError("augmented sample must have the same N as the original")
        object.__setattr__(self, "mixed_outcomes", y)
        object.__setattr__(self, "mixed_treatments", z)
        object.__setattr__(self, "mixed_covariates", X)

    def controls_untouched(self):
        ctl = self.original.treatments == 0.0
        return bool(
            np.array_equal(self.mixed_treatments, self.original.treatments)
            and np.array_equal(self.mixed_outcomes[ctl], self.original.outcomes[ctl])
            and np.array_equal(self.mixed_covariates[ctl], self.original.covariates[ctl])
        )


def load_csv(path, outcome_col, treatment_col, delimiter=","):
    """Read a header-first CSV into an :class:`ObservedSample`.

    Every column other than the outcome and treatment is a numeric covariate.
    Empty cells and non-numeric entries are rejected with their row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for col in (outcome_col, treatment_col):
            if col not in header:
                raise DataError(f"{path}: column {col!r} not found in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            values = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell == "" or cell.upper() in ("NA", "NAN"):
                    raise DataError(f"{path}: missing value at row {lineno}, column {col!r}")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {col!r}") from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array(rows)
    iy, iz = header.index(outcome_col), header.index(treatment_col)
    cov_cols = [j for j in range(len(header)) if j not in (iy, iz)]
    return ObservedSample(
        outcomes=data[:, iy],
        treatments=data[:, iz],
        covariates=data[:, cov_cols].reshape(len(rows), len(cov_cols)),
        column_names=tuple(header[j] for j in cov_cols),
    )


def write_csv(sample, path, outcome_col="y", treatment_col="z", delimiter=","):
    # repr() gives the shortest string that parses back to the same double
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow([outcome_col, treatment_col, *sample.column_names])
        for y, z, x in zip(sample.outcomes, sample.treatments, sample.covariates):
            writer.writerow([repr(float(y)), str(int(z)), *(repr(float(v)) for v in x)])


@dataclass
class OverlapSummary:
    n: int
    n_treated: int
    pi_hat: float
    treated_means: dict
    control_means: dict
    propensity_range: dict = field(default_factory=dict)


def summarize(sample, fit=None):
    """Counts, group means per covariate and (given a fit) propensity ranges."""
    t, c = sample.treated_index, sample.control_index
    names = sample.column_names
    tm = sample.covariates[t].mean(axis=0)
    cm = sample.covariates[c].mean(axis=0)
    ranges = {}
    if fit is not None:
        p = np.asarray(fit.fitted_probs)
        ranges = {
            "treated": (float(p[t].min()), float(p[t].max())),
            "control": (float(p[c].min()), float(p[c].max())),
        }
    return OverlapSummary(
        n=sample.n,
        n_treated=sample.n_treated,
        pi_hat=sample.pi_hat,
        treated_means=dict(zip(names, map(float, tm))),
        control_means=dict(zip(names, map(float, cm))),
        propensity_range=ranges,
    )
