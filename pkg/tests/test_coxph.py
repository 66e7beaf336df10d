"""Cox proportional hazards: likelihood values, Newton fits, tests, AIC."""

import math

import numpy as np
import pytest

from oracles import (
    efron_log_likelihood,
    fd_gradient,
    grid_maximizer,
    normal_sf_oracle,
)
from tdasurv import errors
from tdasurv.coxph import (
    SurvivalRecord,
    aic,
    block_chisq_test,
    fit_cox,
    fit_report,
    fit_with_scores,
    log_partial_likelihood,
    predict_risk,
    read_survival_csv,
    select_fpcs_aic,
    wald_tests,
)
from tdasurv.coxph import _design, _efron


def records_from(times, events, X, pid_prefix="p"):
    X = np.asarray(X, dtype=float).reshape(len(times), -1)
    return [
        SurvivalRecord(f"{pid_prefix}{i}", float(times[i]), bool(events[i]), X[i])
        for i in range(len(times))
    ]


def random_dataset(rng, n_max=30, p_max=4, tie_prob=0.6):
    n = int(rng.integers(4, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    if rng.random() < tie_prob:
        times = rng.integers(1, max(3, n // 2), size=n).astype(float)
    else:
        times = rng.uniform(0.5, 10, size=n)
    events = rng.random(n) < 0.75
    if not events.any():
        events[0] = True
    X = rng.normal(size=(n, p))
    return times, events, X


class TestLogPartialLikelihood:
    def test_null_three_distinct_events(self):
        recs = records_from([1, 2, 3], [1, 1, 1], [[0.3], [-0.1], [0.9]])
        assert log_partial_likelihood(recs, np.zeros(1)) == pytest.approx(
            -math.log(6), abs=1e-12
        )

    def test_null_two_tied_deaths(self):
        # Efron at beta 0: tie of 2 in a risk set of 3 gives denominators
        # 3 and 3 - (1/2)*2 = 2
        recs = records_from([1, 1, 2], [1, 1, 0], [[0.0], [1.0], [2.0]])
        assert log_partial_likelihood(recs, np.zeros(1)) == pytest.approx(
            -(math.log(3) + math.log(2)), abs=1e-12
        )

    def test_null_four_events_with_tie(self):
        # Efron denominators 4, 3, 2, 1 -> -log 24 (Breslow would give -log 32)
        recs = records_from([1, 1, 2, 3], [1, 1, 1, 1], [[0.0]] * 4)
        assert log_partial_likelihood(recs, np.zeros(1)) == pytest.approx(
            -math.log(24), abs=1e-12
        )

    def test_all_censored(self):
        recs = records_from([1, 2], [0, 0], [[0.1], [0.2]])
        with pytest.raises(errors.NoEvents):
            log_partial_likelihood(recs, np.zeros(1))

    def test_dimension_mismatch(self):
        recs = records_from([1, 2], [1, 1], [[0.1], [0.2]])
        with pytest.raises(errors.DimensionMismatch):
            log_partial_likelihood(recs, np.zeros(2))

    def test_matches_oracle_at_random_betas(self):
        rng = np.random.default_rng(81)
        for _ in range(30):
            times, events, X = random_dataset(rng)
            beta = rng.normal(scale=0.5, size=X.shape[1])
            recs = records_from(times, events, X)
            got = log_partial_likelihood(recs, beta)
            want = efron_log_likelihood(times, events, X, beta)
            assert got == pytest.approx(want, rel=1e-10, abs=1e-10)

    def test_no_ties_equals_textbook_formula(self):
        rng = np.random.default_rng(82)
        for _ in range(20):
            n = int(rng.integers(4, 15))
            times = rng.permutation(np.arange(1.0, n + 1.0))
            events = rng.random(n) < 0.7
            if not events.any():
                events[0] = True
            X = rng.normal(size=(n, 2))
            beta = rng.normal(scale=0.4, size=2)
            eta = X @ beta
            want = sum(
                eta[i] - math.log(np.exp(eta[times >= times[i]]).sum())
                for i in range(n)
                if events[i]
            )
            got = log_partial_likelihood(records_from(times, events, X), beta)
            assert got == pytest.approx(want, rel=1e-12)


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(83)
        checked = 0
        while checked < 50:
            times, events, X = random_dataset(rng)
            beta = rng.normal(scale=0.5, size=X.shape[1])
            t, e, Xd = _design(records_from(times, events, X))
            _, grad, _ = _efron(t, e, Xd, beta, want_derivs=True)
            fd = fd_gradient(times, events, X, beta)
            denom = max(1.0, np.abs(fd).max())
            assert np.abs(grad - fd).max() / denom < 1e-6
            checked += 1


class TestFitCox:
    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(84)
        checked = 0
        while checked < 20:
            times, events, X = random_dataset(rng, n_max=20, p_max=1)
            recs = records_from(times, events, X)
            try:
                fit = fit_cox(recs)
            except (errors.NonIdentifiable, errors.MaxIterations):
                continue
            want = grid_maximizer(times, events, X[:, 0])
            assert abs(fit.coefficients[0] - want) < 1e-4
            checked += 1

    def test_alternating_binary_covariate(self):
        recs = records_from([1, 2, 3, 4], [1, 1, 1, 1], [[1.0], [0.0], [1.0], [0.0]])
        fit = fit_cox(recs)
        want = grid_maximizer([1, 2, 3, 4], [True] * 4, [1.0, 0.0, 1.0, 0.0])
        assert abs(fit.coefficients[0] - want) < 1e-4
        assert fit.converged

    def test_constant_covariate_rejected(self):
        recs = records_from([1, 2, 3], [1, 1, 1], [[0.0], [0.0], [0.0]])
        with pytest.raises(errors.NonIdentifiable):
            fit_cox(recs)

    def test_constant_among_events_rejected(self):
        # covariate varies overall but is constant on the event subjects
        recs = records_from([1, 2, 3, 4], [1, 1, 0, 0], [[1.0], [1.0], [0.0], [2.0]])
        with pytest.raises(errors.NonIdentifiable):
            fit_cox(recs)

    def test_perfect_separation_diverges(self):
        times = [1.0, 2.0, 3.0, 4.0]
        events = [1, 1, 1, 1]
        z = [[1.0], [1.0], [0.0], [0.0]]  # all z=1 die first
        with pytest.raises(errors.NonIdentifiable):
            fit_cox(records_from(times, events, z))

    def test_time_shift_invariance(self):
        rng = np.random.default_rng(85)
        for _ in range(10):
            times, events, X = random_dataset(rng, n_max=15, p_max=2)
            recs = records_from(times, events, X)
            shifted = records_from(times + 7.5, events, X)
            try:
                a = fit_cox(recs)
            except (errors.NonIdentifiable, errors.MaxIterations):
                continue
            b = fit_cox(shifted)
            assert np.array_equal(a.coefficients, b.coefficients)
            assert a.log_likelihood == b.log_likelihood

    def test_covariance_positive_definite(self):
        rng = np.random.default_rng(86)
        done = 0
        while done < 10:
            times, events, X = random_dataset(rng, n_max=25, p_max=3)
            try:
                fit = fit_cox(records_from(times, events, X))
            except (errors.NonIdentifiable, errors.MaxIterations):
                continue
            eig = np.linalg.eigvalsh(fit.covariance)
            assert (eig > 0).all()
            assert np.abs(fit.covariance - fit.covariance.T).max() < 1e-8
            done += 1

    def test_converged_gradient_small(self):
        recs = records_from([1, 2, 3, 4, 5], [1, 1, 0, 1, 1], [[0.2], [1.1], [-0.3], [0.8], [-1.2]])
        fit = fit_cox(recs)
        t, e, X = _design(recs)
        _, grad, _ = _efron(t, e, X, fit.coefficients, want_derivs=True)
        assert np.abs(grad).max() < 1e-6


class TestWald:
    def fit_one(self):
        rng = np.random.default_rng(87)
        times, events, X = random_dataset(rng, n_max=25, p_max=1, tie_prob=0.0)
        return fit_cox(records_from(times, events, X))

    def test_reference_z_value(self):
        from tdasurv.special import normal_sf

        assert 2 * normal_sf(1.959964) == pytest.approx(0.05, abs=1e-6)
        assert 2 * normal_sf(1.959964) == pytest.approx(
            2 * normal_sf_oracle(1.959964), abs=1e-14
        )

    def test_overall_equals_z_squared_for_one_coefficient(self):
        fit = self.fit_one()
        w = wald_tests(fit)
        assert w.overall_statistic == pytest.approx(w.z[0] ** 2, rel=1e-10)
        assert w.overall_df == 1

    def test_zero_coefficient_p_one(self):
        # symmetric two-group data: coefficient lands at exactly 0
        recs = records_from([1, 1, 2, 2], [1, 1, 1, 1], [[1.0], [0.0], [0.0], [1.0]])
        fit = fit_cox(recs)
        assert abs(fit.coefficients[0]) < 1e-12
        w = wald_tests(fit)
        assert w.p[0] == pytest.approx(1.0, abs=1e-10)


class TestBlockTest:
    def test_threshold_value(self):
        from tdasurv.special import chi2_sf

        assert chi2_sf(9.4877, 4) == pytest.approx(0.05, abs=1e-4)

    def test_empty_block(self):
        recs = records_from([1, 2, 3], [1, 1, 0], [[0.5], [0.1], [0.9]])
        fit = fit_cox(recs)  # blocks default to all-clinical
        stat, df, p = block_chisq_test(fit)
        assert (stat, df, p) == (0.0, 0, 1.0)

    def test_single_element_block_equals_squared_z(self):
        rng = np.random.default_rng(84)
        times, events, X = random_dataset(rng, n_max=20, p_max=2, tie_prob=0.0)
        recs = records_from(times, events, X[:, :1])
        fit = fit_with_scores(recs, X[:, 1:2], np.zeros((len(times), 0)), 1, 0)
        stat, df, p = block_chisq_test(fit)
        w = wald_tests(fit)
        assert df == 1
        assert stat == pytest.approx(w.z[1] ** 2, rel=1e-10)

    def test_df_is_q_plus_r(self):
        rng = np.random.default_rng(89)
        times, events, X = random_dataset(rng, n_max=25, p_max=1, tie_prob=0.0)
        recs = records_from(times, events, X)
        s0 = rng.normal(size=(len(times), 2))
        s1 = rng.normal(size=(len(times), 1))
        fit = fit_with_scores(recs, s0, s1, 2, 1)
        _, df, _ = block_chisq_test(fit)
        assert df == 3


class TestAic:
    def test_arithmetic(self):
        rng = np.random.default_rng(90)
        times, events, X = random_dataset(rng, n_max=15, p_max=1, tie_prob=0.0)
        recs = records_from(times, events, X)
        s0 = rng.normal(size=(len(times), 1))
        s1 = rng.normal(size=(len(times), 2))
        fit = fit_with_scores(recs, s0, s1, 1, 2)
        assert aic(fit) == pytest.approx(6 - 2 * fit.log_likelihood, rel=1e-12)

    def test_printed_formula_example(self):
        # logL = -10, q = 1, r = 2 -> 2*3 + 20 = 26
        assert 2 * (1 + 2) - 2 * (-10) == 26

    def test_clinical_only_is_minus_two_loglik(self):
        recs = records_from([1, 2, 3, 4], [1, 0, 1, 1], [[0.3], [0.8], [-0.2], [0.5]])
        fit = fit_cox(recs)
        assert aic(fit, 0, 0) == pytest.approx(-2 * fit.log_likelihood)

    def test_mismatched_counts_rejected(self):
        recs = records_from([1, 2, 3, 4], [1, 0, 1, 1], [[0.3], [0.8], [-0.2], [0.5]])
        fit = fit_cox(recs)
        with pytest.raises(errors.DimensionMismatch):
            aic(fit, 1, 0)


class TestSelectFpcsAic:
    def test_single_candidate(self):
        recs = records_from([1, 2, 3, 4], [1, 1, 0, 1], [[0.4], [0.1], [0.7], [-0.2]])
        z = np.zeros((4, 0))
        assert select_fpcs_aic(recs, z, z, 0, 0) == (0, 0)

    def test_noise_component_not_selected(self):
        # strong signal in score column 0, pure noise in column 1: the AIC
        # grid must prefer q = 1 over q = 2
        rng = np.random.default_rng(91)
        n = 60
        signal = rng.normal(size=n)
        times = np.exp(-1.2 * signal) * rng.exponential(1.0, size=n) + 0.01
        events = np.ones(n, dtype=bool)
        recs = records_from(times, events, np.zeros((n, 0)))
        s0 = np.c_[signal, rng.normal(size=n)]
        q, r = select_fpcs_aic(recs, s0, np.zeros((n, 0)), 2, 0)
        assert (q, r) == (1, 0)
        fit1 = fit_with_scores(recs, s0, np.zeros((n, 0)), 1, 0)
        fit2 = fit_with_scores(recs, s0, np.zeros((n, 0)), 2, 0)
        assert aic(fit1) < aic(fit2)

    def test_all_fits_failed(self):
        recs = records_from([1, 2, 3], [1, 1, 1], [[1.0], [1.0], [1.0]])
        z = np.zeros((3, 0))
        with pytest.raises(errors.AllFitsFailed):
            select_fpcs_aic(recs, z, z, 0, 0)


class TestPredictRisk:
    def test_dot_product(self):
        recs = records_from([1, 2, 3, 4], [1, 1, 0, 1], [[0.4, 1.0], [0.1, 0.0], [0.7, 1.0], [-0.2, 0.0]])
        fit = fit_cox(recs)
        got = predict_risk(fit, np.array([2.0, 3.0]))
        want = 2.0 * fit.coefficients[0] + 3.0 * fit.coefficients[1]
        assert got == pytest.approx(want, rel=1e-12)

    def test_zero_covariates(self):
        recs = records_from([1, 2, 3], [1, 1, 0], [[0.5], [0.1], [0.9]])
        fit = fit_cox(recs)
        assert predict_risk(fit, np.zeros(1)) == 0.0

    def test_length_check(self):
        recs = records_from([1, 2, 3], [1, 1, 0], [[0.5], [0.1], [0.9]])
        fit = fit_cox(recs)
        with pytest.raises(errors.DimensionMismatch):
            predict_risk(fit, np.zeros(2))


class TestCsvAndReport:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "surv.csv"
        p.write_text(
            "patient_id,time,event,age,size\n"
            "a,1.5,1,62.0,10.0\n"
            "b,2.0,0,71.5,3.25\n"
        )
        recs, names = read_survival_csv(p)
        assert names == ["age", "size"]
        assert recs[0].patient_id == "a" and recs[0].time == 1.5 and recs[0].event
        assert not recs[1].event
        assert recs[1].covariates.tolist() == [71.5, 3.25]

    def test_bad_event_flag(self, tmp_path):
        p = tmp_path / "surv.csv"
        p.write_text("patient_id,time,event\na,1.0,2\n")
        with pytest.raises(errors.ConfigError):
            read_survival_csv(p)

    def test_fit_report_fields(self):
        rng = np.random.default_rng(92)
        times, events, X = random_dataset(rng, n_max=20, p_max=2, tie_prob=0.0)
        recs = records_from(times, events, X)
        fit = fit_cox(recs)
        rep = fit_report(fit, ["age", "size"])
        assert set(rep["coefficients"]) == {"age", "size"}
        row = rep["coefficients"]["age"]
        assert {"coef", "exp_coef", "se", "z", "p"} <= set(row)
        assert row["exp_coef"] == pytest.approx(math.exp(row["coef"]))
        assert rep["overall_wald"]["df"] == 2
        assert rep["aic"] == pytest.approx(-2 * fit.log_likelihood)
