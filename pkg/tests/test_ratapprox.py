import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import AAA

from fraclap.ratapprox import (
    AAAConvergenceError,
    BarycentricForm,
    PoleStructureError,
    RationalModel,
    aaa_fit,
    aaa_sequence,
    evaluate_rational,
    fit_rational,
    fit_rational_order,
    sample_grid,
    spectrum_interval,
    sup_error,
    to_partial_fractions,
)


def test_single_point_interval_interpolates_exactly():
    form = aaa_fit(0.5, (1.0, 1.0), tol=1e-8)
    assert form.order == 1
    assert form(np.array([1.0]))[0] == 1.0


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_interpolates_at_support_points(s):
    form = aaa_fit(s, (1.0, 1e4), tol=1e-10)
    z = form.support_points
    np.testing.assert_allclose(form(z), z**-s, rtol=1e-12)


def test_half_power_converges_within_sixteen():
    model = fit_rational(0.5, (1.0, 1e4), tol=1e-8)
    assert model.n_active <= 16
    assert model.sup_error <= 1e-8


def test_agrees_with_scipy_aaa_oracle():
    x = sample_grid((1.0, 1e4), 2000)
    ref = AAA(x, x**-0.5, rtol=1e-11)
    model = fit_rational(0.5, (1.0, 1e4), tol=1e-10)
    xs = np.geomspace(1.0, 1e4, 777)
    np.testing.assert_allclose(evaluate_rational(model, xs), np.real(ref(xs)), atol=1e-8)


def test_fit_raises_when_order_cap_is_too_small():
    with pytest.raises(AAAConvergenceError) as exc:
        aaa_fit(0.5, (1.0, 1e4), tol=1e-14, max_order=3)
    assert exc.value.order <= 4


@pytest.mark.parametrize("s", [0.0, 1.5, -0.1])
def test_rejects_bad_exponent(s):
    with pytest.raises(ValueError):
        aaa_fit(s, (1.0, 10.0), 1e-8)


def test_plain_resolvent_converts_to_itself():
    # r(x) = 1/(x+1) interpolated at x = 1, 2
    form = BarycentricForm(np.array([1.0, 2.0]), np.array([0.5, 1 / 3]), np.array([-2.0, 3.0]))
    model = to_partial_fractions(form, pad=False)
    np.testing.assert_allclose(model.poles, [1.0], rtol=1e-13)
    np.testing.assert_allclose(model.residues, [1.0], rtol=1e-13)
    assert model.c_inf == 0.0


def test_constant_has_no_active_terms():
    form = BarycentricForm(np.array([1.0, 2.0, 5.0]), np.ones(3), np.array([1.0, -3.0, 1.0]))
    model = to_partial_fractions(form)
    assert model.n_active == 0
    assert model.c_inf == pytest.approx(1.0, abs=1e-14)


def test_round_trip_matches_barycentric_form():
    form = aaa_fit(0.5, (8.0, 6400.0), tol=1e-10)
    model = to_partial_fractions(form)
    x = sample_grid((8.0, 6400.0), 1000)
    assert np.max(np.abs(evaluate_rational(model, x) - form(x))) <= 1e-10


def test_evaluate_small_models():
    one_over_x = RationalModel(poles=np.array([0.0]), residues=np.array([1.0]))
    assert evaluate_rational(one_over_x, 2.0) == 0.5
    m = RationalModel(poles=np.array([1.0, 3.0]), residues=np.array([2.0, 4.0]), c_inf=5.0)
    assert evaluate_rational(m, 1.0) == 7.0


def test_fitted_model_near_target_value():
    model = fit_rational(0.5, (1.0, 100.0), tol=1e-9)
    assert abs(evaluate_rational(model, 4.0) - 0.5) <= model.sup_error


def test_sup_error_two_samples_uses_endpoints():
    model = fit_rational_order(0.5, (1.0, 100.0), 2)
    ends = np.array([1.0, 100.0])
    expected = np.max(np.abs(ends**-0.5 - evaluate_rational(model, ends)))
    assert sup_error(model, n_samples=2) == expected


def test_error_decreases_with_order():
    errs = [sup_error(to_partial_fractions(f, s=0.5, interval=(1.0, 1e4)))
            for f in aaa_sequence(0.5, (1.0, 1e4), 12)[1:]]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    slope, _ = np.polyfit(np.arange(len(errs)), np.log(errs), 1)
    assert slope < 0


def test_padding_to_power_of_two():
    model = fit_rational_order(0.5, (1.0, 1e3), 3)
    assert model.order == 4 and model.n_r == 2
    assert model.n_active == 3
    assert not model.active[-1] and model.residues[-1] == 0.0
    c_t = model.c_tilde
    assert c_t.size == 8 and c_t[4] == model.c_inf and np.all(c_t[5:] == 0)


def test_model_validation():
    with pytest.raises(ValueError):
        RationalModel(poles=np.array([2.0, 1.0]), residues=np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        RationalModel(poles=np.array([-1.0]), residues=np.array([1.0]))
    with pytest.raises(ValueError):
        RationalModel(poles=np.array([1.0]), residues=np.array([-1.0]))


def test_negative_residue_structure_rejected():
    x = np.linspace(0.5, 10.0, 200)
    ref = AAA(x, 1 / (x + 1) - 0.5 / (x + 2), rtol=1e-13)
    form = BarycentricForm(np.real(ref.support_points), np.real(ref.support_values), np.real(ref.weights))
    with pytest.raises(PoleStructureError):
        to_partial_fractions(form)


def test_json_round_trip():
    model = fit_rational(0.5, (8.0, 6400.0), tol=1e-8)
    doc = json.loads(json.dumps(model.to_dict()))
    assert set(doc) >= {"s", "interval", "poles", "residues", "c_inf", "sup_error", "n_r"}
    back = RationalModel.from_dict(doc)
    np.testing.assert_array_equal(back.poles, model.poles)
    np.testing.assert_array_equal(back.residues, model.residues)
    assert back.c_inf == model.c_inf


def test_spectrum_interval_values():
    lo, hi = spectrum_interval(2, 0.1)
    assert lo == 16 and hi == pytest.approx(800.0, rel=1e-14)


@settings(max_examples=15, deadline=None)
@given(s=st.floats(0.1, 0.9), hi=st.floats(10.0, 1e4))
def test_fits_keep_stieltjes_structure(s, hi):
    model = fit_rational(s, (1.0, hi), tol=1e-7)
    on = model.active
    assert np.all(model.poles >= 0) and np.all(model.residues[on] > 0) and model.c_inf >= 0
    assert np.all(np.diff(model.poles) >= 0)
    assert model.sup_error <= 1e-7
