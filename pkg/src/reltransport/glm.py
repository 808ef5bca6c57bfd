"""Generalized linear models fit by iteratively reweighted least squares.

Supported (family, link) pairs::

    gaussian  identity, log
    bernoulli logit, log          (log = relative risk regression)
    poisson   log, identity

A covariate name may be a product term written ``"x1:x2"``; its column is the
elementwise product of the named columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit, gammaln, logit, xlogy

from .errors import BoundaryError, ConvergenceError, GLMError, ModelDocumentError, SingularDesignError

FAMILIES = ("gaussian", "bernoulli", "poisson")
LINKS = ("identity", "logit", "log")
INTERCEPT = "intercept"
MAX_HALVINGS = 20
# fitted means this close to the edge of the range count as boundary solutions
_EDGE = 1e-10


@dataclass(frozen=True)
class ModelSpec:
    family: str
    link: str
    covariate_names: tuple = ()
    include_intercept: bool = True
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if self.family not in FAMILIES:
            raise GLMError(f"unknown family {self.family!r}")
        if self.link not in LINKS:
            raise GLMError(f"unknown link {self.link!r}")
        if self.family == "bernoulli" and self.link == "identity":
            raise GLMError("bernoulli family with identity link is not supported")
        if self.link == "logit" and self.family != "bernoulli":
            raise GLMError("logit link requires the bernoulli family")
        if len(set(self.covariate_names)) != len(self.covariate_names):
            raise GLMError(f"covariate names must be distinct: {self.covariate_names}")
        if INTERCEPT in self.covariate_names:
            raise GLMError(f"{INTERCEPT!r} is reserved for the intercept term")
        if self.max_iter < 1 or not self.tol > 0:
            raise GLMError("max_iter must be positive and tol > 0")

    @property
    def term_names(self):
        return ((INTERCEPT,) if self.include_intercept else ()) + self.covariate_names

    def with_covariates(self, names) -> "ModelSpec":
        return ModelSpec(self.family, self.link, tuple(names), self.include_intercept, self.max_iter, self.tol)


def canonical_link(family):
    return {"gaussian": "identity", "bernoulli": "logit", "poisson": "log"}[family]


def term_column(columns: Mapping, term: str) -> np.ndarray:
    out = None
    for factor in term.split(":"):
        try:
            col = np.asarray(columns[factor], dtype=float)
        except KeyError:
            raise GLMError(f"covariate {factor!r} not available") from None
        out = col if out is None else out * col
    return out


def design_matrix(columns: Mapping, covariate_names, include_intercept=True, n=None) -> np.ndarray:
    """Stack term columns (plus a leading column of ones) into an ``(n, k)`` matrix."""
    cols = [term_column(columns, t) for t in covariate_names]
    if n is None:
        if cols:
            n = cols[0].shape[0]
        else:
            n = len(next(iter(columns.values()))) if columns else 0
    if include_intercept:
        cols.insert(0, np.ones(n))
    if not cols:
        return np.empty((n, 0))
    return np.column_stack(cols)


# --- link and family primitives -------------------------------------------

def _inverse_link(link, eta):
    if link == "identity":
        return eta
    if link == "log":
        return np.exp(np.minimum(eta, 700.0))
    return expit(eta)


def _link(link, mu):
    if link == "identity":
        return mu
    if link == "log":
        return np.log(mu)
    return logit(mu)


def _dmu_deta(link, mu):
    if link == "identity":
        return np.ones_like(mu)
    if link == "log":
        return mu
    return mu * (1.0 - mu)


def _variance(family, mu):
    if family == "gaussian":
        return np.ones_like(mu)
    if family == "poisson":
        return mu
    return mu * (1.0 - mu)


def _valid_mean(family, mu):
    if not np.all(np.isfinite(mu)):
        return False
    if family == "bernoulli":
        return bool(np.all((mu > 0) & (mu < 1)))
    if family == "poisson":
        return bool(np.all(mu > 0))
    return True


def log_likelihood(family, y, mu, weights=None):
    """Weighted log-likelihood up to terms that do not depend on the mean."""
    w = np.ones_like(y) if weights is None else weights
    if family == "gaussian":
        return float(-0.5 * np.sum(w * (y - mu) ** 2))
    if family == "bernoulli":
        return float(np.sum(w * (xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu))))
    return float(np.sum(w * (xlogy(y, mu) - mu - gammaln(y + 1.0))))


def score(family, link, X, y, beta, weights=None):
    """Gradient of :func:`log_likelihood` with respect to the coefficients."""
    w = np.ones_like(y) if weights is None else weights
    mu = _inverse_link(link, X @ beta)
    return X.T @ (w * (y - mu) * _dmu_deta(link, mu) / _variance(family, mu))


# --- fitted model -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: ModelSpec
    coefficients: np.ndarray
    converged: bool = True
    iterations: int = 0
    n_obs: int | None = None
    external: bool = False
    max_change: float = field(default=0.0, repr=False)

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        if coef.shape != (len(self.spec.term_names),):
            raise GLMError(
                f"expected {len(self.spec.term_names)} coefficients for terms "
                f"{self.spec.term_names}, got {coef.shape}"
            )

    @property
    def family(self):
        return self.spec.family

    @property
    def link(self):
        return self.spec.link

    @property
    def named_coefficients(self) -> dict:
        return dict(zip(self.spec.term_names, self.coefficients.tolist()))

    def linear_predictor(self, columns: Mapping, n=None) -> np.ndarray:
        X = design_matrix(columns, self.spec.covariate_names, self.spec.include_intercept, n)
        return X @ self.coefficients

    def predict(self, columns: Mapping, n=None) -> np.ndarray:
        """Fitted means at the rows described by ``columns`` (name -> array)."""
        return _inverse_link(self.spec.link, self.linear_predictor(columns, n))

    def to_document(self) -> dict:
        return {
            "family": self.spec.family,
            "link": self.spec.link,
            "coefficients": [[name, value] for name, value in self.named_coefficients.items()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_document(), indent=2)


def predict_mean(model: FittedModel, covariates) -> float:
    """Inverse-link of the linear predictor at one covariate vector.

    ``covariates`` lists the value of each term in ``model.spec.covariate_names``
    (intercept excluded), in order.
    """
    x = np.asarray(covariates, dtype=float).ravel()
    k = len(model.spec.covariate_names)
    if x.shape != (k,):
        raise GLMError(f"expected {k} covariate values, got {x.shape[0]}")
    row = np.concatenate([[1.0], x]) if model.spec.include_intercept else x
    value = float(_inverse_link(model.spec.link, np.array([row @ model.coefficients]))[0])
    if not np.isfinite(value):
        raise GLMError("prediction is not finite")
    return value


def model_from_document(doc) -> FittedModel:
    """Rebuild a :class:`FittedModel` from :meth:`FittedModel.to_document` output."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ModelDocumentError(f"malformed model document: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ModelDocumentError("model document must be an object")
    try:
        family, link, pairs = doc["family"], doc["link"], doc["coefficients"]
    except KeyError as exc:
        raise ModelDocumentError(f"model document is missing field {exc}") from None
    if link not in LINKS:
        raise ModelDocumentError(f"unknown link {link!r}")
    if family not in FAMILIES:
        raise ModelDocumentError(f"unknown family {family!r}")
    try:
        names = [str(p[0]) for p in pairs]
        values = [float(p[1]) for p in pairs]
    except (TypeError, ValueError, IndexError):
        raise ModelDocumentError("coefficients must be a list of [name, value] pairs") from None
    if not names or any(not n for n in names):
        raise ModelDocumentError("coefficient names must be nonempty")
    intercept = INTERCEPT in names
    if intercept and names[0] != INTERCEPT:
        raise ModelDocumentError("the intercept must be listed first")
    try:
        spec = ModelSpec(family, link, tuple(names[1:] if intercept else names), intercept)
    except GLMError as exc:
        raise ModelDocumentError(str(exc)) from None
    return FittedModel(spec, np.array(values), converged=True, iterations=0, n_obs=None, external=True)


# --- fitting ----------------------------------------------------------------

def _start(spec, X, y, w):
    """Intercept at link(weighted mean of y) with zero slopes."""
    ybar = float(np.sum(w * y) / np.sum(w))
    beta = np.zeros(X.shape[1])
    if spec.include_intercept:
        beta[0] = float(_link(spec.link, np.array([ybar]))[0])
    elif spec.link == "log" and spec.family == "bernoulli":
        # no intercept: least-squares fit of a constant log-mean
        beta = np.linalg.lstsq(X, np.full(X.shape[0], np.log(ybar)), rcond=None)[0]
    return beta


def _weighted_lstsq(spec, X, y, w):
    """Weighted least squares, centred when there is an intercept.

    Centring makes a constant response reproduce its mean exactly.
    """
    sw = np.sqrt(w)
    if not spec.include_intercept:
        return np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
    total = np.sum(w)
    ybar = np.sum(w * y) / total
    xbar = (w @ X[:, 1:]) / total
    slopes = np.linalg.lstsq((X[:, 1:] - xbar) * sw[:, None], (y - ybar) * sw, rcond=None)[0]
    return np.concatenate([[ybar - xbar @ slopes], slopes])


def _degenerate_check(spec, y, w):
    pos = w > 0
    yp = y[pos]
    if spec.family == "bernoulli" and (np.all(yp == 0) or np.all(yp == 1)):
        raise BoundaryError(
            f"degenerate bernoulli outcome (all y = {int(yp[0])}): the fitted mean sits on the boundary"
        )
    if spec.family == "poisson" and np.all(yp == 0):
        raise BoundaryError("degenerate poisson outcome (all y = 0): the fitted mean sits on the boundary")
    if spec.link == "log" and spec.family == "gaussian" and np.sum(w * y) <= 0:
        raise BoundaryError("log link needs a positive mean outcome")


def fit_glm(spec: ModelSpec, X, y, weights=None) -> FittedModel:
    """Maximum-likelihood fit of ``spec`` to the design ``X`` by IRLS.

    ``X`` holds the term columns only; the intercept column is added here when
    ``spec.include_intercept`` is set. Each Newton/Fisher step is halved up to
    20 times while the log-likelihood decreases or a mean leaves the family's
    valid range.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    X = np.asarray(X, dtype=float).reshape(n, len(spec.covariate_names))
    if spec.include_intercept:
        X = np.column_stack([np.ones(n), X])
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GLMError("weights must be finite, nonnegative and one per row")
    pos = w > 0
    if not pos.any():
        raise GLMError("no rows with positive weight")
    if X.shape[1] == 0:
        raise GLMError("model has no terms")
    if not np.all(np.isfinite(X[pos])) or not np.all(np.isfinite(y[pos])):
        raise GLMError("design and response must be finite")
    if spec.family == "bernoulli" and np.any((y[pos] != 0) & (y[pos] != 1)):
        raise GLMError("bernoulli responses must be 0 or 1")
    if spec.family == "poisson" and np.any(y[pos] < 0):
        raise GLMError("poisson responses must be nonnegative")
    if np.linalg.matrix_rank(X[pos]) < X.shape[1]:
        raise SingularDesignError(
            f"design matrix is rank deficient for terms {spec.term_names} "
            f"({int(pos.sum())} rows with positive weight)"
        )
    _degenerate_check(spec, y, w)

    if spec.family == "gaussian" and spec.link == "identity":
        return FittedModel(spec, _weighted_lstsq(spec, X, y, w), True, 1, int(pos.sum()))

    beta = _start(spec, X, y, w)
    mu = _inverse_link(spec.link, X @ beta)
    if not _valid_mean(spec.family, mu):
        raise BoundaryError("starting values give fitted means outside the valid range", beta, 0)
    ll = log_likelihood(spec.family, y, mu, w)

    change = np.inf
    for it in range(1, spec.max_iter + 1):
        eta = X @ beta
        d = _dmu_deta(spec.link, mu)
        var = _variance(spec.family, mu)
        wz = w * d * d / var
        z = eta + (y - mu) / d
        sw = np.sqrt(wz)
        proposal = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)[0]
        step = proposal - beta
        full_change = float(np.max(np.abs(step)))

        for halvings in range(MAX_HALVINGS + 1):
            cand = beta + step
            mu_c = _inverse_link(spec.link, X @ cand)
            if _valid_mean(spec.family, mu_c):
                ll_c = log_likelihood(spec.family, y, mu_c, w)
                # relative slack absorbs rounding noise near the optimum
                if ll_c >= ll - 1e-12 * (1.0 + abs(ll)):
                    break
            step = step / 2.0
        else:
            raise BoundaryError(
                f"step-halving exhausted after {MAX_HALVINGS} halvings at iteration {it}; "
                "fitted means could not be kept inside the valid range"
                + ("; consider ratio_method='arm_specific'" if spec.link == "log" and spec.family == "bernoulli" else ""),
                beta, it,
            )

        change = float(np.max(np.abs(step)))
        beta, mu, ll = cand, mu_c, ll_c
        if full_change <= spec.tol:
            return FittedModel(spec, beta, True, it, int(pos.sum()), max_change=change)
        if halvings and change <= spec.tol:
            # halving shrank the step to nothing while the full step stays large:
            # the maximizer lies on the edge of the parameter space
            raise BoundaryError(
                f"IRLS stalled against the range boundary at iteration {it}"
                + ("; consider ratio_method='arm_specific'" if spec.link == "log" and spec.family == "bernoulli" else ""),
                beta, it,
            )

    on_edge = spec.family in ("bernoulli", "poisson") and (
        np.any(mu[pos] < _EDGE) or (spec.family == "bernoulli" and np.any(mu[pos] > 1 - _EDGE))
    )
    cls = BoundaryError if on_edge else ConvergenceError
    raise cls(
        f"IRLS did not converge in {spec.max_iter} iterations (last coefficient change {change:.3g})",
        beta, spec.max_iter,
    )


def fit_rows(spec: ModelSpec, rows) -> FittedModel:
    """Fit from an iterable of ``(covariate_vector, response, weight)`` triples."""
    rows = list(rows)
    if not rows:
        raise GLMError("no rows to fit")
    X = np.array([np.asarray(r[0], dtype=float).ravel() for r in rows]).reshape(len(rows), -1)
    y = np.array([r[1] for r in rows], dtype=float)
    w = np.array([r[2] for r in rows], dtype=float)
    return fit_glm(spec, X, y, w)


def fit_columns(spec: ModelSpec, columns: Mapping, y, weights=None) -> FittedModel:
    """Fit with term columns pulled by name from ``columns``."""
    X = design_matrix(columns, spec.covariate_names, include_intercept=False, n=len(y))
    return fit_glm(spec, X, y, weights)
