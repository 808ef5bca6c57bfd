import numpy as np
import pytest

from conftest import build
from oracles import stratified_estimators
from reltransport import ModelSpec
from reltransport.errors import BoundaryError, DatasetError, ModelDocumentError, RatioEvaluationError, SingularDesignError
from reltransport.glm import FittedModel
from reltransport.nuisance import (
    RatioModel,
    export_model,
    fit_g,
    fit_h,
    fit_iterated,
    fit_m,
    fit_ratio,
    import_external_model,
)

LOGIT_X = ModelSpec("bernoulli", "logit", ("x",))
LOG_X = ModelSpec("bernoulli", "log", ("x",))
OLS_X = ModelSpec("gaussian", "identity", ("x",))
GRID = {"x": np.array([0.0, 1.0])}


def ratio_data():
    return build([
        (1, 1, 0, None, 10, 0.2), (1, 0, 0, None, 10, 0.1),
        (1, 1, 1, None, 10, 0.6), (1, 0, 1, None, 20, 0.3),
        (0, 0, 0, None, 4, 0.25), (0, 0, 1, None, 4, 0.5),
    ])


def test_arm_specific_ratio_matches_stratum_ratio():
    r = fit_ratio(ratio_data(), LOGIT_X).evaluate(GRID)
    oracle = stratified_estimators(ratio_data())["parts"]["ratio"]
    assert float(oracle[(0.0,)]) == 2.0
    np.testing.assert_allclose(r, [2.0, 2.0], atol=1e-8)


def test_equal_arms_give_unit_ratio():
    ds = build([(1, 1, 0, None, 10, 0.3), (1, 0, 0, None, 10, 0.3),
                (1, 1, 1, None, 5, 0.4), (1, 0, 1, None, 5, 0.4), (0, 0, 0, None, 3, 1 / 3)])
    np.testing.assert_allclose(fit_ratio(ds, LOGIT_X).evaluate(GRID), [1.0, 1.0], atol=1e-12)


def test_interaction_and_arm_specific_agree_on_saturated_design():
    ds = ratio_data()
    arm = fit_ratio(ds, LOGIT_X, "arm_specific").evaluate(GRID)
    inter = fit_ratio(ds, LOG_X, "log_link_interaction").evaluate(GRID)
    np.testing.assert_allclose(inter, arm, atol=1e-8)
    m1, m0 = fit_ratio(ds, LOG_X, "log_link_interaction").arm_means(GRID)
    np.testing.assert_allclose(m1, [0.2, 0.6], atol=1e-8)
    np.testing.assert_allclose(m0, [0.1, 0.3], atol=1e-8)


def test_interaction_needs_log_link():
    with pytest.raises(Exception, match="log link"):
        fit_ratio(ratio_data(), LOGIT_X, "log_link_interaction")


def test_empty_arm():
    ds = build([(1, 1, 0, None, 5, 0.4), (0, 0, 0, None, 5, 0.4)])
    with pytest.raises(DatasetError, match="control trial arm"):
        fit_ratio(ds, LOGIT_X)


def test_ratio_floor_is_an_error():
    control = FittedModel(OLS_X, [0.5, -0.5])  # zero control mean at x=1
    treated = FittedModel(OLS_X, [0.5, 0.0])
    ratio = RatioModel("arm_specific", (treated, control))
    with pytest.raises(RatioEvaluationError, match="x=") as info:
        ratio.evaluate(GRID)
    assert info.value.x == {"x": 1.0}


def test_ratio_is_positive():
    ds = ratio_data()
    assert np.all(fit_ratio(ds, LOGIT_X).evaluate({"x": np.linspace(-2, 3, 11)}) > 0)


def test_g_intercept_only_half():
    ds = build([(1, 1, 0, None, 2, 0.5), (1, 0, 0, None, 2, 0.5), (0, 0, 0, None, 4, 0.5)])
    g = fit_g(ds, ModelSpec("bernoulli", "logit"))
    np.testing.assert_allclose(g.predict(GRID, 2), [0.5, 0.5], atol=1e-12)


def test_g_saturated_stratum_means():
    g = fit_g(ratio_data(), LOGIT_X)
    np.testing.assert_allclose(g.predict(GRID), [0.25, 0.5], atol=1e-8)


def test_g_duplicated_covariate_is_singular():
    ds = build([(1, 1, (0, 0), None, 2, 0.5), (1, 0, (0, 0), None, 2, 0.5),
                (0, 0, (0, 0), None, 4, 0.5), (0, 0, (1, 1), None, 4, 0.25)], x_names=("x", "x_copy"))
    with pytest.raises(SingularDesignError):
        fit_g(ds, ModelSpec("bernoulli", "logit", ("x", "x_copy")))


def test_h_degenerate_controls():
    ds = build([(1, 1, 0, None, 2, 0.5), (1, 0, 0, None, 2, 0.5), (0, 0, 0, None, 4, 1.0)])
    with pytest.raises(BoundaryError):
        fit_h(ds, ModelSpec("bernoulli", "logit"))


def test_h_uses_controls_only():
    ds = build([
        (1, 1, 0, None, 4, 0.5), (1, 0, 0, None, 4, 0.5),
        (0, 0, 0, None, 10, 0.2), (0, 1, 0, None, 5, 0.8),
        (0, 0, 1, None, 5, 0.4), (0, 1, 1, None, 5, 1.0),
    ])
    np.testing.assert_allclose(fit_h(ds, LOGIT_X).predict(GRID), [0.2, 0.4], atol=1e-8)


def test_h_equals_g_when_no_target_treatment():
    ds = ratio_data()
    assert np.array_equal(fit_h(ds, LOGIT_X).coefficients, fit_g(ds, LOGIT_X).coefficients)


def xw_data():
    """Target controls with (x, w) stratum means 0.1, 0.2, 0.3, 0.4 plus treated rows."""
    return build([
        (1, 1, 0, None, 10, 0.2), (1, 0, 0, None, 10, 0.1),
        (1, 1, 1, None, 10, 0.3), (1, 0, 1, None, 10, 0.2),
        (0, 0, 0, 0, 10, 0.1), (0, 0, 0, 1, 10, 0.2), (0, 0, 1, 0, 10, 0.3), (0, 0, 1, 1, 10, 0.4),
        (0, 1, 0, 0, 5, 0.4), (0, 1, 0, 1, 15, 0.6), (0, 1, 1, 1, 10, 0.5),
    ], w_names=("w",))


XW = ModelSpec("bernoulli", "logit", ("x", "w", "x:w"))


def test_m_saturated_stratum_means():
    m = fit_m(xw_data(), XW)
    cols = {"x": np.array([0.0, 0.0, 1.0, 1.0]), "w": np.array([0.0, 1.0, 0.0, 1.0])}
    np.testing.assert_allclose(m.predict(cols), [0.1, 0.2, 0.3, 0.4], atol=1e-8)


def test_m_without_w_equals_h():
    ds = ratio_data()
    assert np.array_equal(fit_m(ds, LOGIT_X).coefficients, fit_h(ds, LOGIT_X).coefficients)


def test_m_constant_w_is_singular():
    ds = build([(1, 1, 0, None, 4, 0.5), (1, 0, 0, None, 4, 0.5),
                (0, 0, 0, 1, 4, 0.5), (0, 0, 1, 1, 4, 0.25)], w_names=("w",))
    with pytest.raises(SingularDesignError):
        fit_m(ds, ModelSpec("bernoulli", "logit", ("x", "w")))


def test_iterated_matches_empirical_iterated_mean():
    ds = xw_data()
    b = fit_iterated(ds, fit_m(ds, XW), OLS_X)
    # target rows at x=0: w=0 in 15, w=1 in 25; x=1: w=0 in 10, w=1 in 20
    expected = [(15 * 0.1 + 25 * 0.2) / 40, (10 * 0.3 + 20 * 0.4) / 30]
    oracle = stratified_estimators(ds)["parts"]["b"]
    np.testing.assert_allclose([float(oracle[(0.0,)]), float(oracle[(1.0,)])], expected, rtol=1e-15)
    np.testing.assert_allclose(b.predict(GRID), expected, atol=1e-10)


def test_iterated_residuals_sum_to_zero():
    ds = xw_data()
    m = fit_m(ds, XW)
    b = fit_iterated(ds, m, OLS_X)
    cols = ds.columns(ds.target)
    assert abs(np.sum(m.predict(cols) - b.predict(cols))) <= 1e-8


def test_iterated_short_circuits_without_w():
    ds = ratio_data()
    h = fit_h(ds, LOGIT_X)
    m = fit_m(ds, LOGIT_X)
    b = fit_iterated(ds, m, OLS_X)
    assert b is m
    assert np.array_equal(b.predict(GRID), h.predict(GRID))


def test_iterated_rejects_w_terms():
    ds = xw_data()
    with pytest.raises(Exception, match="X only"):
        fit_iterated(ds, fit_m(ds, XW), ModelSpec("gaussian", "identity", ("x", "w")))


def test_external_logit_intercept():
    model = import_external_model('{"family": "bernoulli", "link": "logit", "coefficients": [["intercept", 0]]}')
    assert model.external
    np.testing.assert_array_equal(model.predict({"x": np.array([0.0, 5.0])}, 2), [0.5, 0.5])


def test_external_unknown_link():
    with pytest.raises(ModelDocumentError):
        import_external_model('{"family": "bernoulli", "link": "cloglog", "coefficients": [["intercept", 0]]}')


def test_export_import_round_trip():
    g = fit_g(ratio_data(), LOGIT_X)
    back = import_external_model(export_model(g))
    x = {"x": np.array([0.0, 1.0, 0.5, -3.0])}
    assert np.array_equal(back.predict(x), g.predict(x))
