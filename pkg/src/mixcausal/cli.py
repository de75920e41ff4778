"""Command-line front end: ``estimate``, ``sweep`` and ``simulate``."""

import argparse
import csv
import io
import json
import sys
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .balancing import eb_att, mixed_eb
from .dataset import load_csv
from .errors import MixCausalError
from .estimators import ipw_att, mipw_att, ow_ato
from .inference import bootstrap_se
from .resample import mipw_m
from .simulation import (DELTA_DEPENDENT, ESTIMATORS, ScenarioSpec, load_scenario,
                         parse_delta_grid, run_monte_carlo, with_overrides)

SAMPLE_ESTIMATORS = ("ipw", "mipw", "ow", "eb", "meb", "mipw_m")
STOCHASTIC = ("meb", "mipw_m")
NUDGE = 0.001


@dataclass(frozen=True)
class RunPlan:
    command: str
    estimators: tuple
    deltas: tuple = ()
    input: str = None
    outcome_col: str = "y"
    treatment_col: str = "z"
    scenario: ScenarioSpec = None
    M: int = 100
    B: int = 0
    boot_M: int = 50
    seed: int = None
    output: str = None
    svg: str = None
    delta_nudge: bool = False
    jobs: int = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "UsageError", "message": message}) + "\n")
        raise SystemExit(2)


def _delta(text):
    try:
        d = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid delta {text!r}") from None
    if not 0.0 < d < 1.0:
        raise argparse.ArgumentTypeError("delta must lie strictly inside (0,1)")
    return d


def _grid(text):
    try:
        return parse_delta_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _estimators(allowed):
    def parse(text):
        names = tuple(s.strip() for s in text.split(",") if s.strip())
        bad = [n for n in names if n not in allowed]
        if bad or not names:
            raise argparse.ArgumentTypeError(
                f"unknown estimator(s) {bad}; choose from {', '.join(allowed)}")
        return names
    return parse


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    parser = _Parser(prog="mixcausal", description="Mixing-based weighting estimators of the ATT.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, allowed, default, m_default="100"):
        p.add_argument("--estimator", type=_estimators(allowed), default=default,
                       help=f"comma-separated list from: {', '.join(allowed)}")
        p.add_argument("--seed", type=int, help="master seed (required when anything is random)")
        p.add_argument("--M", type=_positive_int,
                       help=f"mixing replicates for meb/mipw_m (default {m_default})")
        p.add_argument("--output", help="output path (default: stdout)")
        p.add_argument("--jobs", type=_positive_int, help="worker processes")

    def data(p):
        p.add_argument("--input", required=True, help="CSV with outcome, treatment and covariates")
        p.add_argument("--outcome", default="y", help="outcome column (default y)")
        p.add_argument("--treatment", default="z", help="treatment column (default z)")
        p.add_argument("--boot", type=int, default=0, metavar="B", help="bootstrap replicates")
        p.add_argument("--boot-M", type=_positive_int, default=50,
                       help="mixing replicates inside each bootstrap replicate (default 50)")

    est = sub.add_parser("estimate", help="point estimates and SEs on a CSV")
    data(est)
    common(est, SAMPLE_ESTIMATORS, ("mipw",))
    est.add_argument("--delta", type=_delta)
    est.add_argument("--delta-grid", type=_grid)

    sweep = sub.add_parser("sweep", help="estimates across a delta grid on a CSV")
    data(sweep)
    common(sweep, SAMPLE_ESTIMATORS, ("mipw",))
    sweep.add_argument("--delta", type=_delta)
    sweep.add_argument("--delta-grid", type=_grid)
    sweep.add_argument("--delta-nudge", action="store_true",
                       help=f"retry a failed grid point at delta -/+ {NUDGE} and mark the row")
    sweep.add_argument("--svg", help="also draw SE-versus-delta curves to this SVG")

    sim = sub.add_parser("simulate", help="Monte Carlo campaign")
    common(sim, ESTIMATORS, ("ipw", "mipw", "ow"), m_default="from scenario, 200")
    sim.add_argument("--scenario", help="key = value scenario file")
    sim.add_argument("--overlap", choices=("strong", "moderate", "weak"))
    sim.add_argument("--misspecified", action="store_true")
    sim.add_argument("--n", type=_positive_int)
    sim.add_argument("--replications", type=_positive_int)
    sim.add_argument("--full", action="store_true", help="3000 replications")
    sim.add_argument("--delta", type=_delta)
    sim.add_argument("--delta-grid", type=_grid)
    sim.add_argument("--svg", help="also draw SD-versus-delta curves to this SVG")
    return parser


def parse_args(argv):
    """Validate ``argv`` into a :class:`RunPlan`; usage errors exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[ns.command]
    if ns.delta is not None and ns.delta_grid is not None:
        sub.error("--delta conflicts with --delta-grid; give one of them")
    deltas = (ns.delta,) if ns.delta is not None else (ns.delta_grid or ())

    if ns.command == "simulate":
        spec = load_scenario(ns.scenario) if ns.scenario else ScenarioSpec()
        reps = 3000 if ns.full else ns.replications
        spec = with_overrides(spec, overlap=ns.overlap, n=ns.n, replications=reps,
                              seed=ns.seed, M=ns.M, delta_grid=deltas or None)
        if ns.misspecified and not spec.misspecified:
            spec = replace(spec, misspecified=True, gamma=None, tau=None)
        if ns.seed is None and not ns.scenario:
            sub.error("--seed is required for simulate")
        return RunPlan("simulate", ns.estimator, spec.delta_grid, scenario=spec, M=spec.M,
                       seed=spec.seed, output=ns.output, svg=ns.svg, jobs=ns.jobs)

    if any(e in DELTA_DEPENDENT for e in ns.estimator) and not deltas:
        sub.error("mixing estimators need --delta or --delta-grid")
    if ns.command == "estimate" and len(deltas) > 1:
        sub.error("estimate takes a single --delta; use sweep for grids")
    if ns.boot < 0 or ns.boot == 1:
        sub.error("--boot must be 0 or at least 2")
    random = ns.boot > 0 or any(e in STOCHASTIC for e in ns.estimator)
    if random and ns.seed is None:
        sub.error("--seed is required when bootstrapping or using meb/mipw_m")
    return RunPlan(ns.command, ns.estimator, tuple(deltas), input=ns.input,
                   outcome_col=ns.outcome, treatment_col=ns.treatment, M=ns.M or 100, B=ns.boot,
                   boot_M=ns.boot_M, seed=ns.seed, output=ns.output, svg=getattr(ns, "svg", None),
                   delta_nudge=getattr(ns, "delta_nudge", False), jobs=ns.jobs)


def _point(name, sample, delta, M, seed, n_jobs=1, fit=None):
    if name == "ipw":
        return ipw_att(sample, fit, robust=False).point
    if name == "ow":
        return ow_ato(sample, fit, robust=False).point
    if name == "eb":
        return eb_att(sample).point
    if name == "mipw":
        return mipw_att(sample, delta, robust=False, fit=fit)[0].point
    if name == "meb":
        return mixed_eb(sample, delta, M, seed, n_jobs=n_jobs).point
    return mipw_m(sample, delta, M, seed, n_jobs=n_jobs).point


class _BootPoint:
    """Picklable bootstrap statistic; mixing estimators draw their seed from the replicate stream."""

    def __init__(self, name, delta, M):
        self.name, self.delta, self.M = name, delta, M

    def __call__(self, sample, rng):
        seed = int(rng.integers(2 ** 63 - 1))
        return _point(self.name, sample, self.delta, self.M, seed)


def _estimate_one(plan, sample, name, delta):
    if name == "ipw":
        report = ipw_att(sample)
    elif name == "ow":
        report = ow_ato(sample)
    elif name == "eb":
        report = eb_att(sample)
    elif name == "mipw":
        report = mipw_att(sample, delta)[0]
    elif name == "meb":
        report = mixed_eb(sample, delta, plan.M, plan.seed, n_jobs=plan.jobs)
    else:
        report = mipw_m(sample, delta, plan.M, plan.seed, n_jobs=plan.jobs)
    if plan.B:
        boot = bootstrap_se(sample, _BootPoint(name, delta, plan.boot_M), plan.B, plan.seed,
                            n_jobs=plan.jobs)
        report.boot_se = boot.se
        report.diagnostics["boot_failed"] = boot.failed_count
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_estimate(plan):
    sample = load_csv(plan.input, plan.outcome_col, plan.treatment_col)
    delta = plan.deltas[0] if plan.deltas else None
    reports = []
    for name in plan.estimators:
        d = delta if name in DELTA_DEPENDENT else None
        reports.append(_estimate_one(plan, sample, name, d).to_dict(plan.seed, __version__))
    payload = reports[0] if len(reports) == 1 else reports
    _emit(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n", plan.output)


SWEEP_COLUMNS = ("estimator", "delta", "delta_used", "nudged", "point", "robust_se", "boot_se",
                 "negative_weights", "max_weight", "ess", "error")


def _run_sweep(plan):
    sample = load_csv(plan.input, plan.outcome_col, plan.treatment_col)
    rows = []
    grid = plan.deltas or (None,)
    for name in plan.estimators:
        for d in (grid if name in DELTA_DEPENDENT else (None,)):
            tries = [d]
            if plan.delta_nudge and d is not None:
                tries += [round(d - NUDGE, 10), round(d + NUDGE, 10)]
            row = {"estimator": name, "delta": d}
            for used in tries:
                if used is not None and not 0.0 < used < 1.0:
                    continue
                try:
                    rep = _estimate_one(plan, sample, name, used)
                except MixCausalError as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                    continue
                row.update(delta_used=used, nudged=used != d, point=rep.point,
                           robust_se=rep.robust_se, boot_se=rep.boot_se, error=None,
                           **{k: rep.diagnostics.get(k) for k in
                              ("negative_weights", "max_weight", "ess")})
                break
            rows.append(row)
    buf = io.StringIO()
    buf.write(f"# mixcausal {__version__} seed={plan.seed} M={plan.M} B={plan.B}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in SWEEP_COLUMNS])
    _emit(buf.getvalue(), plan.output)
    if plan.svg:
        series = {}
        for row in rows:
            if row.get("delta") is not None and row.get("robust_se") is not None:
                series.setdefault(row["estimator"], []).append((row["delta"], row["robust_se"]))
        _svg(series, "robust SE", plan.svg)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_simulate(plan):
    table = run_monte_carlo(plan.scenario, plan.estimators, n_jobs=plan.jobs)
    _emit(table.to_csv_text(), plan.output)
    if plan.svg:
        series = {}
        for row in table.rows:
            series.setdefault(row["estimator"], []).append((row["delta"], row["sd_est"]))
        _svg(series, "Monte Carlo SD", plan.svg)


def _svg(series, ylabel, path):
    """Static line chart, one curve per estimator, deterministic bytes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "mixcausal", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, pts in series.items():
            xs, ys = zip(*sorted(pts))
            ax.plot(xs, ys, marker="o", markersize=3, label=name)
        ax.set_xlabel("delta")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def execute(plan):
    """Run ``plan``; returns the exit status.  Failures print an error JSON to stderr."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            {"estimate": _run_estimate, "sweep": _run_sweep, "simulate": _run_simulate}[
                plan.command](plan)
    except (MixCausalError, ValueError, ZeroDivisionError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "command": plan.command}) + "\n")
        return 1
    return 0


def main(argv=None):
    plan = parse_args(sys.argv[1:] if argv is None else argv)
    return execute(plan)


if __name__ == "__main__":
    raise SystemExit(main())
