import numpy as np
import pytest

from prml.comparators import fit_glmm_gaussian, fit_lmm_gaussian, glmm_gaussian_loglik, lmm_gaussian_loglik
from prml.simulate import gen_glmm, gen_lmm
from prml.study import StudySpec, aggregate, run_study
from scipy import stats


def test_spec_validation():
    with pytest.raises(ValueError):
        StudySpec("nope")
    with pytest.raises(ValueError):
        StudySpec("lmm", reps=0)
    with pytest.raises(ValueError):
        StudySpec("lmm", methods=("bayes",))


def test_single_replication_aggregates_equal_row():
    rep = run_study(StudySpec("density", n=40, reps=1, seed=3, J=101))
    row = rep.rows[0]
    assert rep.aggregates["marginal.mean_sigma"] == row["est_sigma"]
    assert rep.aggregates["marginal.rmse_sigma"] == pytest.approx(abs(row["est_sigma"] - 0.1), abs=1e-15)
    assert rep.aggregates["marginal.coverage_sigma"] in (0.0, 100.0)


def test_rmse_recomputable_from_rows():
    spec = StudySpec("lmm", n=30, reps=3, seed=5, J=61, methods=("marginal", "gaussian"))
    rep = run_study(spec)
    again = aggregate(spec, rep.rows)
    assert again == rep.aggregates
    rows = [r for r in rep.rows if r["method"] == "marginal"]
    err = np.array([r["est_beta1"] - r["true_beta1"] for r in rows])
    assert rep.aggregates["marginal.rmse_beta1"] == pytest.approx(np.sqrt(np.mean(err**2)), abs=1e-12)


def test_results_independent_of_worker_count(tmp_path):
    spec = StudySpec("density", n=30, reps=3, seed=9, J=61, methods=("marginal", "profile"))
    one = run_study(spec, workers=1)
    two = run_study(spec, workers=2)
    assert one.rows == two.rows
    one.write(tmp_path / "a")
    two.write(tmp_path / "b")
    assert (tmp_path / "a" / "rows.csv").read_bytes() == (tmp_path / "b" / "rows.csv").read_bytes()
    assert (tmp_path / "a" / "summary.txt").read_bytes() == (tmp_path / "b" / "summary.txt").read_bytes()


def test_failures_are_recorded_not_fatal(monkeypatch):
    import prml.study as study

    real = study.run_replication

    def flaky(spec, rep):
        if rep == 1:
            raise FloatingPointError("boom")
        return real(spec, rep)

    monkeypatch.setattr(study, "run_replication", flaky)
    rep = study.run_study(StudySpec("density", n=20, reps=3, J=41))
    assert rep.failures == [(1, "FloatingPointError: boom")]
    assert len(rep.rows) == 2
    assert "failures = 1" in rep.summary()


def test_lmm_gaussian_loglik_matches_dense_normal():
    data, _ = gen_lmm(5, 4, "gaussian", seed=1)
    params = np.array([1.9, 5.2, 1.8, 0.3, 2.1])
    total = 0.0
    for i in range(5):
        cov = params[2] ** 2 * np.eye(4) + params[4] ** 2 * np.ones((4, 4))
        mean = data.x[i] @ params[:2] + params[3]
        total += stats.multivariate_normal(mean, cov).logpdf(data.y[i])
    assert lmm_gaussian_loglik(params, data) == pytest.approx(total, rel=1e-12)


def test_glmm_gauss_hermite_matches_adaptive_quadrature():
    from scipy import integrate
    from scipy.special import expit

    data, _ = gen_glmm(3, 4, "gaussian", seed=2)
    beta, mu, tau = np.array([1.0, 2.0]), 0.2, 1.5
    total = 0.0
    for i in range(3):
        eta = data.x[i] @ beta

        def lik(u):
            p = expit(eta + u)
            return np.prod(np.where(data.y[i] == 1, p, 1 - p)) * stats.norm.pdf(u, mu, tau)

        total += np.log(integrate.quad(lik, -20, 20, epsabs=1e-14)[0])
    assert glmm_gaussian_loglik(np.array([*beta, mu, tau]), data) == pytest.approx(total, rel=1e-5)  # 20-node rule


def test_comparator_fits_return_structural_parameters():
    data, _ = gen_lmm(100, 4, "gaussian", seed=3)
    res = fit_lmm_gaussian(data)
    assert res.names() == ("beta1", "beta2", "sigma")
    assert abs(res.theta_hat[0] - 2) < 0.5 and abs(res.theta_hat[2] - 2) < 0.5
    gdata, _ = gen_glmm(200, 4, "gaussian", seed=3)
    gres = fit_glmm_gaussian(gdata)
    assert gres.names() == ("beta1", "beta2") and gres.cov.shape == (2, 2)
