import numpy as np
import pytest

from mixcausal import kernels
from mixcausal.balancing import (eb_att, eb_weights, mixed_eb, mixed_eb_weights,
                                 solve_entropy_dual)
from mixcausal.dataset import ObservedSample
from mixcausal.errors import BalanceInfeasibleError
from mixcausal.propensity import adjust_mixed_weights, simple_mixed_odds
from mixcausal.simulation import ScenarioSpec, generate


def test_equal_means_give_uniform_weights():
    x = np.array([[0.0], [1.0], [2.0], [0.0], [1.0], [2.0]])
    s = ObservedSample(np.zeros(6), [1, 1, 1, 0, 0, 0], x)
    sol = eb_weights(s)
    np.testing.assert_allclose(sol.lam, 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.control_weights_odds_scale, np.ones(3), rtol=1e-12)


def test_binary_covariate_closed_form():
    # treated mean 0.5 against controls {0, 0, 1}: the "1" control carries half the mass
    x = np.array([[1.0], [0.0], [0.0], [0.0], [1.0]])
    s = ObservedSample(np.zeros(5), [1, 1, 0, 0, 0], x)
    w = eb_weights(s).control_weights_odds_scale
    assert w[2] == pytest.approx(w[0] + w[1], abs=1e-10)
    np.testing.assert_allclose(w, [0.5, 0.5, 1.0], atol=1e-10)


def test_balance_on_simulated_data():
    s = generate(ScenarioSpec(overlap="weak", seed=5), 0)
    sol = eb_weights(s)
    assert sol.max_imbalance <= 1e-8
    w = sol.control_weights_odds_scale
    raw_gap = w @ s.covariates[s.control_index] / w.sum() - s.covariates[s.treated_index].mean(0)
    assert np.abs(raw_gap / s.covariates.std(axis=0)).max() <= 1e-8
    assert w.sum() == pytest.approx(s.n_treated)


def test_dual_decreases_monotonically():
    s = generate(ScenarioSpec(overlap="weak", seed=5), 1)
    hist = eb_weights(s).dual_history
    assert len(hist) > 2
    assert all(b <= a + 1e-13 * max(1.0, abs(a)) for a, b in zip(hist, hist[1:]))


def test_infeasible_names_covariate():
    x = np.array([[5.0, 0.0], [6.0, 1.0], [0.0, 0.0], [1.0, 1.0], [2.0, 0.5]])
    s = ObservedSample(np.zeros(5), [1, 1, 0, 0, 0], x, ("age", "bmi"))
    with pytest.raises(BalanceInfeasibleError, match="'age'"):
        eb_weights(s)


def test_backends_agree():
    rng = np.random.default_rng(0)
    D = np.ascontiguousarray(rng.normal(size=(300, 4)) - 0.2)
    outs = [kernels.get_backend(b).eb_dual_solve(D, np.zeros(4), 1e-10, 200, 1e6)
            for b in ("python", "cython")]
    np.testing.assert_allclose(outs[0][0], outs[1][0], atol=1e-12)
    assert outs[0][2] == outs[1][2] and outs[0][3] == outs[1][3] == 0


def test_adjust_round_trip_on_known_odds():
    rng = np.random.default_rng(1)
    odds = rng.lognormal(size=50)
    for delta, pi in ((0.3, 0.2), (0.7, 0.6)):
        back = adjust_mixed_weights(simple_mixed_odds(odds, delta, pi), delta, pi)
        np.testing.assert_allclose(back, odds, rtol=1e-12)


def test_adjusted_weights_balance_original_sample():
    rng = np.random.default_rng(2)
    x = rng.normal(size=20)
    z = np.r_[np.ones(8), np.zeros(12)]
    x[:8] += 0.5
    s = ObservedSample(rng.normal(size=20), z, x[:, None])
    # with 8 treated rows an occasional replicate lands outside the control hull
    with pytest.warns(RuntimeWarning, match="dropped"):
        W_star, failed = mixed_eb_weights(s, 0.5, 500, seed=4)
    W = adjust_mixed_weights(W_star, 0.5, s.pi_hat)
    gap = W @ x[8:] / W.sum() - x[:8].mean()
    assert failed <= 50
    assert abs(gap) < 0.05


def test_rescale_does_not_change_point():
    s = generate(ScenarioSpec(overlap="weak", seed=5), 2)
    a = mixed_eb(s, 0.6, 20, seed=1)
    b = mixed_eb(s, 0.6, 20, seed=1, rescale=False)
    assert a.point == pytest.approx(b.point, abs=1e-12)


def test_meb_parallel_equal_and_reports_negatives():
    s = generate(ScenarioSpec(overlap="weak", seed=5), 3)
    a = mixed_eb(s, 0.6, 12, seed=2, n_jobs=1)
    b = mixed_eb(s, 0.6, 12, seed=2, n_jobs=2)
    np.testing.assert_array_equal(a.weights.control_weights, b.weights.control_weights)
    assert a.diagnostics["negative_weights"] == a.weights.negative_count
    assert a.weights.provenance == "mixed-eb"


def test_eb_att_reports_balance():
    s = generate(ScenarioSpec(overlap="strong", seed=5), 0)
    r = eb_att(s)
    assert r.diagnostics["max_imbalance"] <= 1e-8
    assert abs(r.point - 1.0) < 0.5


def test_second_moments_balance():
    s = generate(ScenarioSpec(overlap="strong", seed=5), 0)
    assert eb_weights(s, moments=2).max_imbalance <= 1e-8


def test_solver_warm_start():
    rng = np.random.default_rng(3)
    C = rng.normal(size=(200, 3))
    target = np.array([0.2, -0.1, 0.3])
    lam, q, iters, _ = solve_entropy_dual(C, target)
    lam2, q2, iters2, _ = solve_entropy_dual(C, target, lam0=lam)
    assert iters2 == 0
    np.testing.assert_array_equal(q, q2)
