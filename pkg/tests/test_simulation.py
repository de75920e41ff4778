import numpy as np
import pytest
from scipy import stats

from mixcausal.dataset import ObservedSample
from mixcausal.propensity import fit_logistic
from mixcausal.simulation import (DEFAULT_DELTA_GRID, ScenarioSpec, eq4_variance, generate,
                                  generate_augmented, generate_with_truth, kang_schafer,
                                  load_scenario, parse_delta_grid, run_monte_carlo)


def test_kang_schafer_at_origin():
    np.testing.assert_allclose(kang_schafer(np.zeros((1, 5)))[0], [1, 10, 0.216, 400, 1],
                               rtol=1e-12)


def test_defaults():
    spec = ScenarioSpec()
    assert spec.n == 1000 and spec.tau == 1.0 and spec.gamma == (2, 2, 2, 0, 1, -1)
    assert spec.delta_grid == DEFAULT_DELTA_GRID and len(DEFAULT_DELTA_GRID) == 19
    ks = ScenarioSpec(misspecified=True, overlap="weak")
    assert ks.tau == 210.0 and ks.gamma[0] == -13.7


def test_generate_is_reproducible():
    spec = ScenarioSpec(seed=5)
    a, b = generate(spec, 3), generate(spec, 3)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    assert not np.array_equal(a.outcomes, generate(spec, 4).outcomes)


def test_treated_share_with_zero_slopes():
    # beta = (b0, 0, ..., 0): treated fraction is expit(b0)
    from mixcausal import simulation

    spec = ScenarioSpec(overlap="strong", seed=1, n=2000)
    b0 = -0.5
    saved = simulation.OVERLAP_BETAS["strong"]
    simulation.OVERLAP_BETAS["strong"] = (b0, 0, 0, 0, 0, 0)
    try:
        share = np.mean([generate(spec, r).pi_hat for r in range(50)])
    finally:
        simulation.OVERLAP_BETAS["strong"] = saved
    assert share == pytest.approx(1 / (1 + np.exp(-b0)), abs=4 * np.sqrt(0.23 / 100_000))


def test_weak_overlap_heavier_tails():
    distances = []
    for r in range(100):
        ps = fit_logistic(generate(ScenarioSpec(overlap="strong", seed=2), r)).fitted_probs
        pw = fit_logistic(generate(ScenarioSpec(overlap="weak", seed=2), r)).fitted_probs
        extreme_s = np.mean((ps < 0.05) | (ps > 0.95))
        extreme_w = np.mean((pw < 0.05) | (pw > 0.95))
        assert extreme_w > extreme_s
        distances.append(stats.ks_2samp(ps, pw).statistic)
    assert np.median(distances) > 0.1


def test_misspecified_observes_transformed_covariates():
    spec = ScenarioSpec(overlap="weak", misspecified=True, seed=3)
    s, truth = generate_with_truth(spec, 0)
    np.testing.assert_allclose(s.covariates, kang_schafer(truth.latent_covariates))
    # treatment follows the latent propensity, not the transformed covariates
    b = spec.beta
    np.testing.assert_allclose(truth.propensity,
                               1 / (1 + np.exp(-(b[0] + truth.latent_covariates @ b[1:]))))


def test_design_identity_att_equals_ato():
    spec = ScenarioSpec(overlap="moderate", replications=40, seed=4, delta_grid=(0.5,))
    tab = run_monte_carlo(spec, ["oracle_att", "oracle_ato"])
    for est in ("oracle_att", "oracle_ato"):
        assert tab.cell(est)["mean_est"] == pytest.approx(1.0, abs=1e-12)


def test_augmented_sample_mixes_treated_only():
    spec = ScenarioSpec(overlap="strong", n=2000, seed=5)
    aug = generate_augmented(spec, 0, 0.4)
    assert aug.controls_untouched()
    s = aug.original
    changed = np.any(aug.mixed_covariates != s.covariates, axis=1)
    assert not changed[s.control_index].any()
    assert changed[s.treated_index].mean() == pytest.approx(0.4, abs=0.06)


def test_eq4_equal_weights():
    n = 25
    s = ObservedSample(np.zeros(2 * n), np.r_[np.ones(n), np.zeros(n)], np.zeros((2 * n, 1)))
    assert eq4_variance(s, np.full(2 * n, 0.5)) == pytest.approx(2 / n)


def test_eq4_blows_up():
    n = 10
    s = ObservedSample(np.zeros(2 * n), np.r_[np.ones(n), np.zeros(n)], np.zeros((2 * n, 1)))
    values = []
    for top in (0.9, 0.99, 0.999, 0.9999):
        e = np.full(2 * n, 0.3)
        e[-1] = top
        values.append(eq4_variance(s, e))
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[-1] > 0.9 + 1 / n


def test_eq4_weak_exceeds_strong():
    vals = {}
    for ov in ("strong", "weak"):
        spec = ScenarioSpec(overlap=ov, seed=6)
        vals[ov] = [eq4_variance(*_with_truth(spec, r)) for r in range(60)]
    assert np.median(vals["weak"]) > np.median(vals["strong"])


def _with_truth(spec, r):
    s, t = generate_with_truth(spec, r)
    return s, t.propensity


def test_table_invariants_and_parallel_equality():
    spec = ScenarioSpec(overlap="strong", replications=12, seed=7, delta_grid=(0.3, 0.6), M=5)
    ests = ["ipw", "mipw", "ow", "eb", "meb", "mipw_m", "oracle_att"]
    seq = run_monte_carlo(spec, ests, n_jobs=1)
    par = run_monte_carlo(spec, ests, n_jobs=2)
    assert seq.to_csv_text() == par.to_csv_text()
    for row in seq.rows:
        assert row["n_rep"] == spec.replications - row["n_fail"]
    assert seq.to_csv_text().startswith("# mixcausal")
    header = seq.to_csv_text().splitlines()[1].split(",")
    assert header[:8] == ["scenario", "overlap", "delta", "estimator", "mean_est", "sd_est",
                          "mean_robust_se", "n_fail"]


def test_failures_flagged():
    spec = ScenarioSpec(overlap="weak", replications=20, seed=8, delta_grid=(0.95,), n=150)
    tab = run_monte_carlo(spec, ["mipw"])
    row = tab.cell("mipw", 0.95)
    assert row["flagged"] == (row["n_fail"] > 1)


def test_requires_estimator():
    with pytest.raises(ValueError):
        run_monte_carlo(ScenarioSpec(replications=2), [])
    with pytest.raises(ValueError):
        run_monte_carlo(ScenarioSpec(replications=2), ["nope"])


def test_grid_parsing():
    assert parse_delta_grid("0.1:0.9:0.1") == (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    assert parse_delta_grid("0.25,0.5") == (0.25, 0.5)
    with pytest.raises(ValueError, match="strictly inside"):
        parse_delta_grid("0:0.5:0.1")
    with pytest.raises(ValueError, match="strictly inside"):
        parse_delta_grid("0.5:1.0:0.25")


def test_scenario_file(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("# weak overlap, misspecified\nname = ks\noverlap = weak\nmisspecified = true\n"
                    "replications = 10\ndelta_grid = 0.5:0.7:0.1\nseed = 3\nM = 20\n")
    spec = load_scenario(path)
    assert spec.name == "ks" and spec.misspecified and spec.tau == 210.0
    assert spec.delta_grid == (0.5, 0.6, 0.7) and spec.M == 20
    path.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="unknown scenario key"):
        load_scenario(path)
