import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prml.fdr import TestDecision as Decision
from prml.fdr import classify, local_fdr, metrics, oracle_grid, oracle_lfdr, write_decisions_csv
from prml.grid import GridDensity
from prml.kernels import AR1MixKernel
from prml.simulate import ar_mixing_pdf, gen_armix
from prml.study import armix_grid, fit_armix

DATA, TRUTH = gen_armix(60, 20, 0.7, seed=11)
KERNEL = AR1MixKernel(20)


def test_lfdr_matches_direct_bayes_rule():
    grid = armix_grid(7)
    f = GridDensity.from_function(grid, ar_mixing_pdf)
    lfdr = local_fdr(DATA, 0.7, f, KERNEL)
    log_n0, log_n1 = KERNEL.component_logs(grid.nodes, DATA)
    af = grid.weights * f.values
    null = 0.7 * np.exp(log_n0) @ af
    alt = 0.3 * np.exp(log_n1) @ af
    np.testing.assert_allclose(lfdr, null / (null + alt), rtol=1e-10)


def test_lfdr_endpoints():
    f = GridDensity.uniform(armix_grid(5))
    np.testing.assert_allclose(local_fdr(DATA, 1.0, f, KERNEL), 1.0)
    np.testing.assert_allclose(local_fdr(DATA, 0.0, f, KERNEL), 0.0)
    with pytest.raises(ValueError):
        local_fdr(DATA, 1.5, f, KERNEL)


@settings(max_examples=25, deadline=None)
@given(t1=st.floats(0.01, 0.99), t2=st.floats(0.01, 0.99))
def test_lfdr_monotone_in_null_proportion(t1, t2):
    lo, hi = sorted((t1, t2))
    f = GridDensity.uniform(armix_grid(5))
    assert np.all(local_fdr(DATA, lo, f, KERNEL) <= local_fdr(DATA, hi, f, KERNEL) + 1e-15)


def test_oracle_uses_40_point_product_rule():
    g = oracle_grid()
    assert len(g) == 1600
    f = GridDensity(g, ar_mixing_pdf(g.nodes))
    assert f.integral() == pytest.approx(1.0, abs=1e-10)
    orc = oracle_lfdr(DATA, 0.7, ar_mixing_pdf, KERNEL)
    assert np.all((orc >= 0) & (orc <= 1))
    # the oracle should separate the classes better than chance on this sample
    assert orc[TRUTH["nonnull"]].mean() < orc[~TRUTH["nonnull"]].mean()


def test_classify_and_metrics():
    lfdr = [0.1, 0.6, 0.5, 0.9, 0.2]
    truth = [True, True, False, False, False]
    dec = classify(lfdr, 0.5, truth)
    assert [d.flagged for d in dec] == [True, False, True, False, True]
    m = metrics(dec)
    assert m.discoveries == 3
    assert m.fdr == pytest.approx(2 / 3)
    assert m.mp == pytest.approx(3 / 5)
    with pytest.raises(ValueError):
        classify(lfdr, 1.0)
    with pytest.raises(ValueError):
        metrics(classify(lfdr))


def test_no_discoveries_gives_zero_fdr():
    m = metrics([Decision(0, 0.9, False, True), Decision(1, 0.8, False, False)])
    assert m.fdr == 0.0 and m.mp == 0.5


def test_decisions_csv(tmp_path):
    path = tmp_path / "d.csv"
    write_decisions_csv(path, classify([0.2, 0.7], truths=[True, False]))
    lines = path.read_text().splitlines()
    assert lines[0] == "index,lfdr,flagged,truth"
    assert lines[1] == "0,0.2,1,1"


def test_all_null_data_rarely_flags_anything():
    zero = 0
    for seed in range(20):
        data, truth = gen_armix(150, 50, 1.0, seed=seed)
        assert not truth["nonnull"].any()
        _, lfdr, _ = fit_armix(data, n_starts=1, order=9, M=2, seed=seed)
        zero += int(not any(d.flagged for d in classify(lfdr, 0.5)))
    assert zero >= 19
