import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import least_squares

from pullfactor import (
    LorentzianParams,
    MeasurementSeries,
    fit_lorentzian,
    fit_polynomial5,
    local_pf,
    predict,
    sweep,
)
from pullfactor.dispersion import SQRT3
from pullfactor.errors import (
    ConditioningError,
    ConvergenceError,
    FlatDataError,
    InvalidArgumentError,
    UndefinedDerivativeError,
)
from pullfactor.fitting import fit_report_from_params, initial_guess, pf_curve

from pullfactor import CavityGeometry

from conftest import EPS_TH, F_M, GAMMA, equation, oracle_G

# fits need the optical frequency; it is carried by the cavity here
CAVITY = CavityGeometry.from_total(0.80, 0.022, f_0=F_M)

TRUE = LorentzianParams(0.5 * EPS_TH, GAMMA)
U = np.linspace(-10 * GAMMA, 10 * GAMMA, 200)


def synthetic(params=TRUE, sigma=0.0, seed=0, u=U, direction="up"):
    y = predict(params, CAVITY, u, direction)
    if sigma:
        y = y + np.random.default_rng(seed).normal(0.0, sigma, size=len(u))
    return MeasurementSeries(u, y)


def rss_of(params, data):
    r = data.delta_f_d - predict(params, CAVITY, data.delta_f_e)
    return float(np.sum(data.weight * r * r))


# --- predict -------------------------------------------------------------------

def test_predict_null_model_is_shifted_diagonal():
    p = LorentzianParams(0.0, GAMMA, 1e6, 2.5e5)
    np.testing.assert_allclose(predict(p, CAVITY, U), U + 2.5e5, rtol=0, atol=1e-6)


def test_predict_reproduces_forward_curve():
    c = sweep(equation(0.5), -10 * GAMMA, 10 * GAMMA, 301)
    np.testing.assert_allclose(predict(TRUE, CAVITY, c.delta_f_e), c.delta_f_d, atol=1e-6 * GAMMA)


def test_predict_follows_sweep_branch_above_threshold():
    p = LorentzianParams(2 * EPS_TH, GAMMA)
    for d in ("up", "down"):
        c = sweep(equation(2.0), -12 * GAMMA, 12 * GAMMA, 601, direction=d)
        np.testing.assert_allclose(predict(p, CAVITY, c.delta_f_e, d), c.delta_f_d, atol=1e-6 * GAMMA)


def test_predict_slope_two_at_sqrt3_gamma():
    u0 = oracle_G(SQRT3 * GAMMA, 0.5)
    h = 1e-4 * GAMMA
    slope = (predict(TRUE, CAVITY, u0 + h) - predict(TRUE, CAVITY, u0 - h)) / (2 * h)
    assert slope == pytest.approx(2.0, rel=1e-4)


def test_predict_offsets():
    p = LorentzianParams(TRUE.epsilon, GAMMA, 3e6, -1e5)
    np.testing.assert_allclose(predict(p, CAVITY, U + 3e6), predict(TRUE, CAVITY, U) + 3e6 - 1e5, atol=1e-3)


# --- line fit ------------------------------------------------------------------

def test_noiseless_recovery():
    rep = fit_lorentzian(synthetic(), CAVITY)
    assert rep.converged
    assert rep.params.epsilon == pytest.approx(TRUE.epsilon, rel=1e-6)
    assert rep.params.gamma == pytest.approx(GAMMA, rel=1e-6)
    assert rep.derived["pf_max"] == pytest.approx(2.0, rel=1e-6)
    assert rep.derived["epsilon_ratio"] == pytest.approx(0.5, rel=1e-6)
    assert len(rep.residuals) == 200 and rep.rss >= 0


def test_noiseless_recovery_with_offsets():
    truth = LorentzianParams(0.3 * EPS_TH, 4e6, 7e6, -2e6)
    rep = fit_lorentzian(synthetic(truth), CAVITY)
    np.testing.assert_allclose(rep.params.as_array(), truth.as_array(), rtol=1e-6, atol=1e-2)


def test_noiseless_recovery_above_threshold_down_sweep():
    truth = LorentzianParams(1.8 * EPS_TH, GAMMA)
    u = np.linspace(-14 * GAMMA, 14 * GAMMA, 300)
    data = synthetic(truth, u=u, direction="down")
    rep = fit_lorentzian(data, CAVITY, direction="down")
    assert rep.params.epsilon == pytest.approx(truth.epsilon, rel=1e-6)
    assert rep.derived["bifurcating"] and rep.derived["pf_max"] is None


def test_noisy_recovery_small_batch():
    good = 0
    for seed in range(10):
        rep = fit_lorentzian(synthetic(sigma=0.2e6, seed=seed), CAVITY)
        good += abs(rep.params.gamma / GAMMA - 1) < 0.05
    assert good >= 9


def test_null_model():
    data = synthetic(LorentzianParams(0.0, GAMMA))
    rep = fit_lorentzian(data, CAVITY)
    assert rep.derived["epsilon_ratio"] < 1e-3
    assert 0.99 <= rep.derived["pf_max"] <= 1.01


def test_fit_optimality_probe():
    data = synthetic(sigma=0.2e6, seed=11)
    rep = fit_lorentzian(data, CAVITY)
    base = rss_of(rep.params, data)
    theta = rep.params.as_array()
    for j in range(4):
        if theta[j] == 0:
            continue
        for s in (0.99, 1.01):
            t = theta.copy()
            t[j] *= s
            assert rss_of(LorentzianParams.from_array(t), data) >= base


def test_duplicate_equals_double_weight():
    data = synthetic(sigma=0.2e6, seed=5)
    k = 57
    dup = MeasurementSeries(
        np.append(data.delta_f_e, data.delta_f_e[k]), np.append(data.delta_f_d, data.delta_f_d[k])
    )
    w = np.ones(len(data))
    w[k] = 2.0
    heavy = MeasurementSeries(data.delta_f_e, data.delta_f_d, weight=w)
    a = fit_lorentzian(dup, CAVITY).params.as_array()
    b = fit_lorentzian(heavy, CAVITY).params.as_array()
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_shift_equivariance():
    data = synthetic(sigma=0.2e6, seed=8)
    shift = 5.3e6
    moved = MeasurementSeries(data.delta_f_e + shift, data.delta_f_d + shift)
    a = fit_lorentzian(data, CAVITY)
    b = fit_lorentzian(moved, CAVITY)
    assert b.params.center_offset - a.params.center_offset == pytest.approx(shift, rel=1e-8)
    assert b.params.epsilon == pytest.approx(a.params.epsilon, rel=1e-8)
    assert b.params.gamma == pytest.approx(a.params.gamma, rel=1e-8)
    assert b.rss == pytest.approx(a.rss, rel=1e-8)


def test_agrees_with_reference_least_squares():
    data = synthetic(sigma=0.2e6, seed=21)
    rep = fit_lorentzian(data, CAVITY)
    p0 = initial_guess(data, CAVITY).as_array()
    scale = np.array([EPS_TH / GAMMA * p0[1], p0[1], p0[1], p0[1]])

    def resid(t):
        return data.delta_f_d - predict(LorentzianParams.from_array(t * scale), CAVITY, data.delta_f_e)

    ref = least_squares(resid, p0 / scale, method="lm", xtol=1e-14, ftol=1e-14)
    np.testing.assert_allclose(rep.params.as_array()[:2], (ref.x * scale)[:2], rtol=1e-5)
    assert rep.rss == pytest.approx(float(ref.fun @ ref.fun), rel=1e-8)


def test_convergence_error_carries_report():
    data = synthetic(sigma=0.2e6, seed=1)
    with pytest.raises(ConvergenceError) as info:
        fit_lorentzian(data, CAVITY, max_iter=1)
    rep = info.value.report
    assert not rep.converged and rep.warnings


def test_flat_data_rejected():
    with pytest.raises(FlatDataError):
        fit_lorentzian(MeasurementSeries(U, np.zeros_like(U)), CAVITY)


def test_too_few_points():
    with pytest.raises(InvalidArgumentError):
        fit_lorentzian(synthetic(u=U[:7]), CAVITY)
    with pytest.raises(InvalidArgumentError):
        fit_polynomial5(synthetic(u=U[:6]))


def test_series_sorted_and_validated():
    s = MeasurementSeries([3.0, 1.0, 2.0], [30.0, 10.0, 20.0], extra={"tag": ["c", "a", "b"]})
    assert list(s.delta_f_e) == [1.0, 2.0, 3.0]
    assert list(s.delta_f_d) == [10.0, 20.0, 30.0]
    assert s.extra["tag"] == ["a", "b", "c"]
    with pytest.raises(InvalidArgumentError):
        MeasurementSeries([1.0, np.nan], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        MeasurementSeries([1.0, 2.0], [1.0, 2.0], weight=[1.0, -1.0])
    with pytest.raises(InvalidArgumentError):
        MeasurementSeries([1.0, 2.0], [1.0])


def test_local_pf_lorentzian_centre():
    rep = fit_report_from_params(TRUE, CAVITY, synthetic())
    assert local_pf(rep, 0.0) == pytest.approx(0.2, rel=1e-4)
    u0 = oracle_G(SQRT3 * GAMMA, 0.5)
    assert local_pf(rep, u0) == pytest.approx(2.0, rel=1e-4)


def test_local_pf_at_fold_is_undefined():
    p = LorentzianParams(2 * EPS_TH, GAMMA)
    rep = fit_report_from_params(p, CAVITY, synthetic(p))
    # an up-sweep leaves the central branch at the inner fold, where
    # v = (x/gamma)**2 solves v**2 + (2 - a) v + 1 + a = 0 with a = 8 eps/eps_th
    a = 16.0
    x_fold = np.sqrt(((a - 2) - np.sqrt(a * (a - 8))) / 2) * GAMMA
    with pytest.raises(UndefinedDerivativeError):
        local_pf(rep, oracle_G(x_fold, 2.0))


# --- quintic -------------------------------------------------------------------

def u_shape(sigma=0.0, seed=0):
    # flat-bottomed U: slope 4 k (u/L)**3 stays below 0.13 for |u| < 4 gamma
    L, k = 10 * GAMMA, 0.5
    y = k * L * (U / L) ** 4 + 3e6
    if sigma:
        y = y + np.random.default_rng(seed).normal(0.0, sigma, U.size)
    return MeasurementSeries(U, y)


def test_poly_diagonal_has_unit_pf():
    rep = fit_polynomial5(MeasurementSeries(U, U.copy()))
    np.testing.assert_allclose(pf_curve(rep, U[::10]), 1.0, atol=1e-10)


def test_poly_cubic_is_nested():
    y = 2e6 + 0.3 * U + 4e-9 * U**2 - 1e-16 * U**3
    rep = fit_polynomial5(MeasurementSeries(U, y))
    c = np.abs(rep.parameters["coefficients_scaled"])
    assert c[4] < 1e-8 * c.max() and c[5] < 1e-8 * c.max()


def test_poly_exact_quintic_seven_points():
    u = np.array([-9.0, -6.5, -2.0, 0.5, 3.0, 7.0, 9.5]) * GAMMA
    t = u / (10 * GAMMA)
    y = 1e6 * (1 + 2 * t - t**2 + 0.5 * t**3 + 3 * t**4 - 2 * t**5)
    rep = fit_polynomial5(MeasurementSeries(u, y))
    assert rep.rss < 1e-16 * float(np.sum(y**2))


def test_poly_raw_coefficients_match_scaled():
    data = u_shape(sigma=0.2e6, seed=4)
    rep = fit_polynomial5(data)
    raw = np.polynomial.Polynomial(rep.parameters["coefficients_raw_hz"])
    np.testing.assert_allclose(raw(U), rep.polynomial(U), rtol=1e-9, atol=1e-3)


def test_poly_u_shape_crosses_zero():
    rep = fit_polynomial5(u_shape(sigma=0.2e6, seed=2))
    pf = pf_curve(rep, U)
    assert pf.min() < 0 < pf.max()
    flat = np.abs(U) <= 4 * GAMMA
    assert np.max(np.abs(pf[flat])) < 0.2
    zeros = rep.derived["pf_zero_crossings_hz"]
    assert any(abs(z) < 4 * GAMMA for z in zeros)


def test_poly_pf_zero_at_bottom():
    rep = fit_polynomial5(u_shape(sigma=0.2e6, seed=2))
    bottom = min(rep.derived["pf_zero_crossings_hz"], key=lambda z: rep.polynomial(z))
    assert abs(local_pf(rep, bottom)) < 1e-12


def test_poly_duplicate_abscissae_ill_conditioned():
    u = np.repeat([-1e7, 0.0, 1e7], 3)
    with pytest.raises(ConditioningError):
        fit_polynomial5(MeasurementSeries(u, u + np.arange(9.0)))


def test_poly_flat_data_rejected():
    with pytest.raises(FlatDataError):
        fit_polynomial5(MeasurementSeries(U, np.full_like(U, 5.0)))


# --- properties ---------------------------------------------------------------

@pytest.mark.invariant
@settings(max_examples=20, deadline=None)
@given(shift=st.floats(min_value=-50e6, max_value=50e6), seed=st.integers(0, 2**32 - 1))
def test_shift_equivariance_property(shift, seed):
    data = synthetic(sigma=0.2e6, seed=seed)
    moved = MeasurementSeries(data.delta_f_e + shift, data.delta_f_d + shift)
    a = fit_lorentzian(data, CAVITY)
    b = fit_lorentzian(moved, CAVITY)
    assert b.params.center_offset - a.params.center_offset == pytest.approx(shift, rel=1e-8, abs=1e-8 * GAMMA)
    assert b.params.epsilon == pytest.approx(a.params.epsilon, rel=1e-8)
    assert b.params.gamma == pytest.approx(a.params.gamma, rel=1e-8)
    assert b.rss == pytest.approx(a.rss, rel=1e-8)


@pytest.mark.invariant
@settings(max_examples=20, deadline=None)
@given(k=st.integers(0, 199), seed=st.integers(0, 2**32 - 1))
def test_duplicate_weight_property(k, seed):
    data = synthetic(sigma=0.2e6, seed=seed)
    dup = MeasurementSeries(
        np.append(data.delta_f_e, data.delta_f_e[k]), np.append(data.delta_f_d, data.delta_f_d[k])
    )
    w = np.ones(len(data))
    w[k] = 2.0
    heavy = MeasurementSeries(data.delta_f_e, data.delta_f_d, weight=w)
    a = fit_lorentzian(dup, CAVITY).params.as_array()
    b = fit_lorentzian(heavy, CAVITY).params.as_array()
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10 * GAMMA)


@pytest.mark.invariant
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_optimality_property(seed):
    data = synthetic(sigma=0.2e6, seed=seed)
    rep = fit_lorentzian(data, CAVITY)
    base = rss_of(rep.params, data)
    theta = rep.params.as_array()
    for j in range(4):
        for s in (0.99, 1.01):
            t = theta.copy()
            t[j] *= s
            assert rss_of(LorentzianParams.from_array(t), data) >= base
