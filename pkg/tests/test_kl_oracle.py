import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from prml.grid import GridDensity, make_legendre_grid
from prml.kernels import GaussianLocationKernel
from prml.kl_oracle import YQuadrature, kl_quadrature, kstar_curve, minimize_kl, read_kstar_csv, write_kstar_csv
from prml.simulate import studentt_pdf

KERNEL = GaussianLocationKernel()
GRID = make_legendre_grid(0, 1, 101)


def _normal_truth(tau):
    return lambda y: stats.norm.pdf(y, 0.5, tau)


def test_coverage_check():
    assert YQuadrature.legendre(studentt_pdf).coverage() >= 0.99
    with pytest.raises(ValueError):
        YQuadrature.legendre(lambda y: stats.norm.pdf(y, 5.0, 0.1))


def test_kstar_matches_gaussian_closed_form():
    """Truth N(0.5, tau^2) and kernel sd sigma > tau: a point mass at 0.5 is optimal."""
    tau, sigma = 0.1, 0.11
    yq = YQuadrature.legendre(_normal_truth(tau))
    exact = np.log(sigma / tau) + tau**2 / (2 * sigma**2) - 0.5
    res = minimize_kl(None, KERNEL, [sigma], GRID, yq)
    assert res.kstar == pytest.approx(exact, abs=2e-4)
    assert res.kstar >= exact - 1e-6


def test_kstar_zero_when_truth_in_model():
    yq = YQuadrature.legendre(_normal_truth(0.1))
    res = minimize_kl(None, KERNEL, [0.05], GRID, yq)
    assert 0 <= res.kstar < 1e-4


def test_em_monotone_and_nonnegative():
    yq = YQuadrature.legendre(studentt_pdf)
    res = minimize_kl(None, KERNEL, [0.12], GRID, yq, max_iter=500)
    assert np.all(np.diff(res.history) <= 1e-12)
    assert res.history[-1] >= 0
    assert res.f.integral() == pytest.approx(1.0, abs=1e-12)


def test_kl_quadrature_of_uniform():
    yq = YQuadrature.legendre(studentt_pdf)
    f = GridDensity.uniform(GRID)
    k = kl_quadrature(None, f, KERNEL, [0.1], yq)
    assert k == pytest.approx(kl_quadrature(studentt_pdf, f, KERNEL, [0.1], yq), rel=1e-14)
    assert k >= minimize_kl(None, KERNEL, [0.1], GRID, yq, max_iter=200).kstar


def test_kstar_curve_shape_and_csv_round_trip(tmp_path):
    yq = YQuadrature.legendre(studentt_pdf)
    curve = kstar_curve(None, KERNEL, [0.06, 0.10, 0.14], GRID, yq, max_iter=2000)
    assert curve.shape == (3, 2)
    assert np.argmin(curve[:, 1]) == 1
    path = tmp_path / "k.csv"
    write_kstar_csv(path, curve, 101, 101, 1e-9, "t5")
    meta, back = read_kstar_csv(path)
    assert meta["J"] == "101" and meta["generator"] == "t5"
    np.testing.assert_array_equal(back, curve)


def test_bad_tolerance():
    with pytest.raises(ValueError):
        minimize_kl(None, KERNEL, [0.1], GRID, YQuadrature.legendre(studentt_pdf), tol=0)


@settings(max_examples=20, deadline=None)
@given(sigma=st.floats(0.03, 0.5), seed=st.integers(0, 10_000))
def test_kl_nonnegative_for_any_mixing_density(sigma, seed):
    yq = YQuadrature.legendre(studentt_pdf)
    vals = np.random.default_rng(seed).gamma(0.5, size=len(GRID)) + 1e-12
    f = GridDensity(GRID, vals).renormalize()
    # quadrature KL of normalised densities; small negative values would be y-range truncation only
    assert kl_quadrature(None, f, KERNEL, [sigma], yq) >= -1e-3
