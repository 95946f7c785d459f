import numpy as np
import pytest

from seirident.mc import (AreTable, EstimateCloud, FitOptions, classify_mc,
                          compute_are, estimate_pair_slopes, normalized_fval,
                          run_mc)
from seirident.observe import DataType, Frequency, build_case


def make_table(case, sigmas, values):
    return AreTable(case=case, sigmas=np.asarray(sigmas, float),
                    values=np.asarray(values, float))


def make_cloud(case, estimates, sigma=0.3):
    estimates = np.asarray(estimates, float)
    m = estimates.shape[0]
    return EstimateCloud(case=case, sigma=sigma, seed=0, estimates=estimates,
                         fval_est=np.zeros(m), fval_true=np.zeros(m),
                         excluded=np.zeros(m, dtype=bool))


def test_compute_are_exact_values(s1_prevalence_daily):
    truth = np.array([1e-4, 0.2, 0.03])
    assert np.all(compute_are(np.tile(truth, (5, 1)), truth) == 0.0)
    scaled = np.vstack([0.9 * truth, 1.1 * truth])
    np.testing.assert_allclose(compute_are(scaled, truth), [10.0, 10.0, 10.0], rtol=1e-12)
    np.testing.assert_allclose(compute_are((2.0 * truth)[None, :], truth),
                               [100.0, 100.0, 100.0], rtol=1e-12)


def test_compute_are_matches_naive_loop(rng, s1_prevalence_daily):
    truth = np.array([1e-4, 0.2, 0.03])
    estimates = truth * (1.0 + 0.25 * rng.standard_normal((40, 3)))
    fast = compute_are(estimates, truth)
    naive = np.zeros(3)
    for k in range(3):
        acc = 0.0
        for j in range(estimates.shape[0]):
            acc += abs(truth[k] - estimates[j, k]) / abs(truth[k])
        naive[k] = 100.0 * acc / estimates.shape[0]
    np.testing.assert_allclose(fast, naive, rtol=1e-12)


def test_compute_are_rejects_zero_truth():
    with pytest.raises(ValueError):
        compute_are(np.ones((2, 3)), np.array([0.0, 0.2, 0.03]))


def test_classify_mc_patterns(s1_prevalence_daily):
    case = s1_prevalence_daily
    sigmas = [0.0, 0.01, 0.05, 0.10, 0.20, 0.30]
    # every parameter below every threshold
    good = [[0, 0, 0], [0.1, 0.4, 0.05], [0.5, 2.2, 0.3],
            [1.0, 4.5, 0.8], [2.7, 10.0, 2.9], [5.8, 17.2, 6.2]]
    verdict = classify_mc(make_table(case, sigmas, good))
    assert verdict.per_param == {"beta": True, "gamma": True, "alpha": True}
    assert verdict.model

    # only alpha stays below the line
    mixed = [[0, 0, 0], [1.1, 1.3, 0.2], [5.4, 7.0, 1.3],
             [11.7, 21.4, 2.8], [24.4, 74.1, 7.3], [32.7, 117.4, 14.5]]
    verdict = classify_mc(make_table(case, sigmas, mixed))
    assert verdict.per_param == {"beta": False, "gamma": False, "alpha": True}
    assert not verdict.model

    # equality counts as identifiable, and the sigma=0 row is ignored
    edge = [[0, 0, 0], [1.0, 1.0001, 0.5], [5.0, 5.0, 2.0],
            [10.0, 10.0, 5.0], [20.0, 20.0, 10.0], [30.0, 30.0, 15.0]]
    verdict = classify_mc(make_table(case, sigmas, edge))
    assert verdict.per_param == {"beta": True, "gamma": False, "alpha": True}


def test_run_mc_sigma_zero_recovers_truth_exactly(s2_incidence_daily):
    case = s2_incidence_daily
    result = run_mc(case, sigmas=(0.0,), m=10, seed=1)
    cloud = result.clouds[0.0]
    truth = case.scenario.params.as_array()
    assert np.all(cloud.estimates == truth)
    assert np.all(result.are_table.values[0] == 0.0)
    assert np.all(cloud.fval_est == 0.0) and np.all(cloud.fval_true == 0.0)
    assert cloud.n_excluded == 0


def test_run_mc_deterministic_and_jobs_invariant(s2_incidence_daily):
    case = s2_incidence_daily
    a = run_mc(case, sigmas=(0.0, 0.1), m=30, seed=6, jobs=1)
    b = run_mc(case, sigmas=(0.0, 0.1), m=30, seed=6, jobs=2)
    for sigma in (0.0, 0.1):
        np.testing.assert_array_equal(a.clouds[sigma].estimates, b.clouds[sigma].estimates)
        np.testing.assert_array_equal(a.clouds[sigma].fval_est, b.clouds[sigma].fval_est)
    c = run_mc(case, sigmas=(0.0, 0.1), m=30, seed=7)
    assert not np.array_equal(a.clouds[0.1].estimates, c.clouds[0.1].estimates)


def test_run_mc_spot_check_against_reference(s1_prevalence_daily):
    # golden comparison run: daily prevalence, widest scenario, 30% noise
    result = run_mc(s1_prevalence_daily, sigmas=(0.0, 0.3), m=60, seed=2024)
    are = result.are_table.values[1]
    reference = np.array([5.77, 17.15, 6.19])
    assert np.all(np.abs(are - reference) / reference < 0.35)


def test_run_mc_fval_true_matches_objective(s2_incidence_daily):
    from seirident.noise import NoiseSpec, generate_replicates
    from seirident.optimize import Objective
    case = s2_incidence_daily
    result = run_mc(case, sigmas=(0.0, 0.2), m=5, seed=9)
    cloud = result.clouds[0.2]
    reps = generate_replicates(case, NoiseSpec(0.2), 5, seed=9)
    truth = case.scenario.params.as_array()
    for j in range(5):
        assert cloud.fval_true[j] == Objective(case, reps.replicate(j))(truth)
        # the fitted value can only improve on the start at truth
        assert cloud.fval_est[j] <= cloud.fval_true[j]


def test_normalized_fval():
    assert normalized_fval(2.0, 2.0) == 0.0
    assert normalized_fval(2.0, 0.0) == 1.0
    assert normalized_fval(0.0, 1.0) is None
    assert normalized_fval(4.0, 6.0) == pytest.approx(-0.5)


def test_estimates_fit_noise_better_than_truth(s1_prevalence_daily):
    result = run_mc(s1_prevalence_daily, sigmas=(0.0, 0.3), m=40, seed=77)
    cloud = result.clouds[0.3]
    normalized = [normalized_fval(t, e) for t, e in zip(cloud.fval_true, cloud.fval_est)]
    assert np.median(normalized) > 0.0


def test_pair_slopes_exact_line(s1_prevalence_daily):
    truth = np.array([1e-4, 0.2, 0.03])
    t = np.linspace(-0.2, 0.2, 9)
    estimates = np.column_stack([truth[0] * (1 + t), truth[1] * (1 - t),
                                 truth[2] * np.ones_like(t)])
    slopes = estimate_pair_slopes(make_cloud(s1_prevalence_daily, estimates), truth)
    assert slopes.slopes["beta:gamma"] == pytest.approx(-1.0)
    assert slopes.correlated["beta:gamma"]
    # alpha errors have zero variance: the alpha:gamma abscissa is degenerate
    assert slopes.slopes["alpha:gamma"] is None
    assert not slopes.correlated["alpha:gamma"]


def test_pair_slopes_shuffle_decorrelates(rng, s1_prevalence_daily):
    # permutation oracle: breaking the pairing kills the slope
    truth = np.array([1e-4, 0.2, 0.03])
    t = 0.2 * rng.standard_normal(400)
    estimates = np.column_stack([truth[0] * (1 + t), truth[1] * (1 - 0.8 * t),
                                 truth[2] * (1 + 0.1 * rng.standard_normal(400))])
    slopes = estimate_pair_slopes(make_cloud(s1_prevalence_daily, estimates), truth)
    assert slopes.correlated["beta:gamma"]
    shuffled = estimates.copy()
    shuffled[:, 1] = truth[1] * (1 - 0.8 * rng.permutation(t))
    slopes2 = estimate_pair_slopes(make_cloud(s1_prevalence_daily, shuffled), truth)
    assert abs(slopes2.slopes["beta:gamma"]) < 0.25
    assert not slopes2.correlated["beta:gamma"]


def test_pair_slopes_need_two_estimates(s1_prevalence_daily):
    truth = np.array([1e-4, 0.2, 0.03])
    with pytest.raises(ValueError):
        estimate_pair_slopes(make_cloud(s1_prevalence_daily, truth[None, :]), truth)


def test_excluded_replicates_reported(s2_incidence_daily, monkeypatch):
    # force every fit to report a penalty-level optimum: all replicates excluded
    import seirident.mc as mc_mod

    def failing_chunk(grid, data_rows, code, y0, start, lo, hi, opts):
        m = data_rows.shape[0]
        return np.tile(start, (m, 1)), np.full(m, mc_mod.PENALTY_VALUE)

    monkeypatch.setattr(mc_mod, "_fit_chunk", failing_chunk)
    result = mc_mod.run_mc(s2_incidence_daily, sigmas=(0.0, 0.1), m=4, seed=1)
    cloud = result.clouds[0.1]
    assert cloud.n_excluded == 4
    assert np.all(np.isnan(result.are_table.values[1]))
