import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from reltransport.errors import BoundaryError, GLMError, ModelDocumentError, SingularDesignError
from reltransport.glm import (
    FittedModel,
    ModelSpec,
    design_matrix,
    fit_glm,
    fit_rows,
    log_likelihood,
    model_from_document,
    predict_mean,
    score,
)


def intercept_only(family, link, y):
    return fit_glm(ModelSpec(family, link), np.empty((len(y), 0)), y)


def test_gaussian_intercept_is_sample_mean():
    assert intercept_only("gaussian", "identity", [1, 2, 3]).coefficients[0] == pytest.approx(2.0, abs=1e-12)


def test_logit_intercept_balanced():
    assert intercept_only("bernoulli", "logit", [0, 1, 0, 1]).coefficients[0] == pytest.approx(0.0, abs=1e-12)


def test_poisson_log_binary_covariate():
    # saturated MLE: group means 2 (x=0) and 6 (x=1), so (log 2, log 6 - log 2)
    x = np.array([0, 0, 0, 1, 1, 1], dtype=float)
    y = np.array([1, 2, 3, 5, 6, 7], dtype=float)
    fit = fit_glm(ModelSpec("poisson", "log", ("x",)), x[:, None], y)
    assert fit.converged
    np.testing.assert_allclose(fit.coefficients, [math.log(2), math.log(3)], atol=1e-10)


def test_fit_rows_interface_with_weights():
    rows = [((0.0,), 1.0, 1.0), ((0.0,), 3.0, 1.0), ((1.0,), 6.0, 2.0)]
    fit = fit_rows(ModelSpec("poisson", "log", ("x",)), rows)
    np.testing.assert_allclose(fit.coefficients, [math.log(2), math.log(3)], atol=1e-10)


@pytest.mark.parametrize("coef, x, link, expected", [
    ([math.log(2), math.log(3)], [1.0], "log", 6.0),
    ([0.0], [], "logit", 0.5),
    ([2.0], [], "identity", 2.0),
])
def test_predict_mean(coef, x, link, expected):
    family = {"log": "poisson", "logit": "bernoulli", "identity": "gaussian"}[link]
    names = ("x",) if x else ()
    model = FittedModel(ModelSpec(family, link, names), coef)
    assert predict_mean(model, x) == pytest.approx(expected, rel=1e-14)


def test_predict_mean_dimension_mismatch():
    model = FittedModel(ModelSpec("poisson", "log", ("x",)), [0.0, 0.0])
    with pytest.raises(GLMError, match="expected 1"):
        predict_mean(model, [1.0, 2.0])


@pytest.mark.parametrize("family, link", [("bernoulli", "identity"), ("poisson", "logit"), ("gaussian", "logit")])
def test_disallowed_pairs(family, link):
    with pytest.raises(GLMError):
        ModelSpec(family, link)


def test_rank_deficiency_is_an_error():
    x = np.array([[0, 0], [1, 1], [0, 0], [1, 1]], dtype=float)
    with pytest.raises(SingularDesignError):
        fit_glm(ModelSpec("gaussian", "identity", ("x1", "x2")), x, [1, 2, 3, 4])


def test_degenerate_logit_is_boundary_error():
    with pytest.raises(BoundaryError, match="degenerate"):
        intercept_only("bernoulli", "logit", [1, 1, 1, 1])


def test_log_binomial_boundary_is_reported():
    x = np.array([0] * 10 + [1] * 10, dtype=float)
    y = np.array([1] * 2 + [0] * 8 + [1] * 10, dtype=float)
    with pytest.raises(BoundaryError) as info:
        fit_glm(ModelSpec("bernoulli", "log", ("x",)), x[:, None], y)
    assert info.value.coefficients is not None


def test_log_binomial_recovers_risk_ratio():
    x = np.array([0] * 10 + [1] * 10, dtype=float)
    y = np.array([1] * 2 + [0] * 8 + [1] * 6 + [0] * 4, dtype=float)
    fit = fit_glm(ModelSpec("bernoulli", "log", ("x",)), x[:, None], y)
    np.testing.assert_allclose(np.exp(fit.coefficients), [0.2, 3.0], rtol=1e-9)


def stratum_oracle(keys, y):
    out = {}
    for k in set(keys):
        vals = [yi for ki, yi in zip(keys, y) if ki == k]
        out[k] = sum(vals) / len(vals)
    return out


@pytest.mark.parametrize("family, link", [
    ("gaussian", "identity"), ("bernoulli", "logit"), ("bernoulli", "log"), ("poisson", "log"), ("poisson", "identity"),
])
def test_saturated_fits_reproduce_stratum_means(family, link):
    rng = np.random.default_rng(11)
    x1 = rng.integers(0, 2, 400).astype(float)
    x2 = rng.integers(0, 2, 400).astype(float)
    base = 0.2 + 0.15 * x1 + 0.1 * x2 + 0.1 * x1 * x2
    if family == "bernoulli":
        y = (rng.random(400) < base).astype(float)
    elif family == "poisson":
        y = rng.poisson(10 * base).astype(float)
    else:
        y = base + rng.normal(size=400)
    fit = fit_glm(ModelSpec(family, link, ("x1", "x2", "x1:x2")), np.column_stack([x1, x2, x1 * x2]), y)
    fitted = fit.predict({"x1": x1, "x2": x2})
    oracle = stratum_oracle(list(zip(x1, x2)), y)
    np.testing.assert_allclose(fitted, [oracle[k] for k in zip(x1, x2)], atol=1e-8)


def random_problem(seed, family, link):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(20, 60)), int(rng.integers(1, 4))
    X = rng.normal(size=(n, p))
    beta = rng.normal(scale=0.4, size=p + 1)
    eta = beta[0] + X @ beta[1:]
    if family == "gaussian":
        y = eta + rng.normal(size=n)
    elif family == "bernoulli":
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
    else:
        y = rng.poisson(np.exp(eta)).astype(float)
    w = rng.uniform(0.5, 2.0, size=n)
    return X, y, w


def finite_difference_gradient(family, link, X1, y, w, beta, h=1e-6):
    spec_inv = {"identity": lambda e: e, "log": np.exp, "logit": lambda e: 1 / (1 + np.exp(-e))}[link]
    grad = np.zeros_like(beta)
    for j in range(beta.size):
        up, dn = beta.copy(), beta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (log_likelihood(family, y, spec_inv(X1 @ up), w)
                   - log_likelihood(family, y, spec_inv(X1 @ dn), w)) / (2 * h)
    return grad


CANONICAL = [("gaussian", "identity"), ("bernoulli", "logit"), ("poisson", "log")]


@given(st.integers(0, 10_000), st.sampled_from(CANONICAL))
@settings(max_examples=40, deadline=None)
def test_score_zero_and_finite_differences(seed, pair):
    family, link = pair
    X, y, w = random_problem(seed, family, link)
    spec = ModelSpec(family, link, tuple(f"x{j}" for j in range(X.shape[1])))
    try:
        fit = fit_glm(spec, X, y, w)
    except BoundaryError:
        assume(False)
    X1 = np.column_stack([np.ones(len(y)), X])
    assert np.max(np.abs(score(family, link, X1, y, fit.coefficients, w))) <= 10 * spec.tol
    fd = finite_difference_gradient(family, link, X1, y, w, fit.coefficients.copy())
    assert np.max(np.abs(fd)) <= 1e-5
    # canonical-link residual identity
    resid = np.sum(w * (y - fit.predict({n: X[:, j] for j, n in enumerate(spec.covariate_names)})))
    assert abs(resid) <= 1e-8


def test_converged_flag_is_truthful():
    X, y, w = random_problem(3, "poisson", "log")
    fit = fit_glm(ModelSpec("poisson", "log", tuple(f"x{j}" for j in range(X.shape[1]))), X, y, w)
    assert fit.converged and fit.max_change <= fit.spec.tol
    assert fit.n_obs == len(y)


def test_design_matrix_products():
    cols = {"a": np.array([1.0, 2.0]), "b": np.array([3.0, 4.0])}
    np.testing.assert_array_equal(design_matrix(cols, ("a", "a:b")), [[1, 1, 3], [1, 2, 8]])


def test_document_round_trip_is_bit_exact():
    X, y, w = random_problem(5, "bernoulli", "logit")
    names = tuple(f"x{j}" for j in range(X.shape[1]))
    fit = fit_glm(ModelSpec("bernoulli", "logit", names), X, y, w)
    back = model_from_document(fit.dumps())
    cols = {n: X[:, j] for j, n in enumerate(names)}
    assert np.array_equal(back.predict(cols), fit.predict(cols))
    assert back.external and back.n_obs is None


@pytest.mark.parametrize("doc, match", [
    ('{"family": "bernoulli", "link": "probit", "coefficients": [["intercept", 0]]}', "unknown link"),
    ('{"family": "bernoulli", "link": "logit"}', "missing field"),
    ("{not json", "malformed"),
    ('{"family": "bernoulli", "link": "logit", "coefficients": [["", 0]]}', "nonempty"),
])
def test_bad_documents(doc, match):
    with pytest.raises(ModelDocumentError, match=match):
        model_from_document(doc)
