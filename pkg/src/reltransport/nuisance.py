"""Conditional-expectation models consumed by the plug-in estimators.

================  =======================================  ==================
name              estimates                                fitted on
================  =======================================  ==================
ratio  r(X)       E[Y|X,S=1,A=1] / E[Y|X,S=1,A=0]          trial rows
g      g(X)       E[Y|X,S=0]                               all target rows
h      h(X)       E[Y|X,S=0,A=0]                           target controls
m      m(X,W)     E[Y|X,W,S=0,A=0]                         target controls
b      b(X)       E[ m(X,W) | X, S=0 ]                     all target rows
================  =======================================  ==================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .datamodel import AnalysisDataset
from .errors import DatasetError, GLMError, RatioEvaluationError
from .glm import FittedModel, ModelSpec, fit_columns, model_from_document

RATIO_METHODS = ("arm_specific", "log_link_interaction")
DEFAULT_FLOOR = 1e-12
TREATMENT_TERM = "_A"


@dataclass(frozen=True)
class RatioModel:
    """Estimated conditional relative effect ``r(x)`` from the trial.

    For ``arm_specific`` the components are the treated-arm and control-arm
    outcome models (in that order). For ``log_link_interaction`` there is a
    single log-link model on ``(1, X, A, A*X)``.
    """

    method: str
    components: tuple
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.method not in RATIO_METHODS:
            raise ValueError(f"ratio method must be one of {RATIO_METHODS}")
        expected = 2 if self.method == "arm_specific" else 1
        if len(self.components) != expected:
            raise ValueError(f"{self.method} needs {expected} component model(s)")

    @property
    def external(self):
        return any(c.external for c in self.components)

    def arm_means(self, columns: Mapping, n=None):
        """Predicted trial means ``(E[Y|X,S=1,A=1], E[Y|X,S=1,A=0])`` at the given rows."""
        if self.method == "arm_specific":
            treated, control = self.components
            return treated.predict(columns, n), control.predict(columns, n)
        model = self.components[0]
        n = _nrows(columns, n)
        cols = dict(columns)
        cols[TREATMENT_TERM] = np.ones(n)
        mu1 = model.predict(cols, n)
        cols[TREATMENT_TERM] = np.zeros(n)
        mu0 = model.predict(cols, n)
        return mu1, mu0

    def evaluate(self, columns: Mapping, n=None) -> np.ndarray:
        """``r(x)`` at every row; raises if a control-arm mean drops below ``floor``."""
        n = _nrows(columns, n)
        mu1, mu0 = self.arm_means(columns, n)
        low = np.flatnonzero(~(mu0 >= self.floor))
        if low.size:
            i = int(low[0])
            x = {k: float(np.asarray(v)[i]) for k, v in columns.items()}
            raise RatioEvaluationError(
                f"control-arm mean {mu0[i]:.3g} is below the floor {self.floor:g} at x={x}", x
            )
        if self.method == "log_link_interaction":
            # exp of the A and A:X block; equal to mu1/mu0 up to rounding
            model = self.components[0]
            coef = model.named_coefficients
            eta = np.full(n, coef[TREATMENT_TERM])
            for term, value in coef.items():
                if term.startswith(TREATMENT_TERM + ":"):
                    eta = eta + value * _term(columns, term[len(TREATMENT_TERM) + 1:])
            return np.exp(eta)
        return mu1 / mu0


@dataclass(frozen=True)
class ConstantRatio:
    """A fixed relative effect ``r(x) = value``, for sensitivity checks and tests."""

    value: float
    external: bool = False

    def evaluate(self, columns: Mapping, n=None) -> np.ndarray:
        return np.full(_nrows(columns, n), float(self.value))


@dataclass(frozen=True)
class NuisanceSet:
    ratio: object
    g: FittedModel | None = None
    h: FittedModel | None = None
    m: FittedModel | None = None
    b: FittedModel | None = None

    @property
    def external(self):
        models = [self.ratio, self.g, self.h, self.m, self.b]
        return any(getattr(mod, "external", False) for mod in models if mod is not None)

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"nuisance set is missing {', '.join(missing)}")


def _nrows(columns, n):
    if n is not None:
        return n
    for v in columns.values():
        return len(v)
    raise ValueError("cannot infer the number of rows from empty covariate columns")


def _term(columns, term):
    out = 1.0
    for factor in term.split(":"):
        out = out * np.asarray(columns[factor], dtype=float)
    return out


def _fit_subset(ds, spec, mask, what):
    if not mask.any():
        raise DatasetError(f"no rows available to fit {what}")
    return fit_columns(spec, ds.columns(mask), ds.y[mask])


def fit_ratio(ds: AnalysisDataset, spec: ModelSpec, method="arm_specific", floor=DEFAULT_FLOOR) -> RatioModel:
    """Fit the trial outcome model(s) behind ``r(x)``.

    ``arm_specific`` fits ``spec`` separately in each trial arm. For
    ``log_link_interaction`` the spec must use a log link; the design is
    extended with a treatment indicator and its products with every term.
    """
    for arm in (0, 1):
        if not np.any(ds.trial & (ds.a == arm)):
            raise DatasetError(f"no trial rows with a={arm}: the {'treated' if arm else 'control'} trial arm is empty")
    if method == "arm_specific":
        treated = _fit_subset(ds, spec, ds.trial & (ds.a == 1), "the treated trial arm")
        control = _fit_subset(ds, spec, ds.trial & (ds.a == 0), "the control trial arm")
        return RatioModel(method, (treated, control), floor)
    if method != "log_link_interaction":
        raise ValueError(f"ratio method must be one of {RATIO_METHODS}")
    if spec.link != "log":
        raise GLMError("log_link_interaction requires a log link")
    terms = spec.covariate_names
    full = spec.with_covariates(terms + (TREATMENT_TERM,) + tuple(f"{TREATMENT_TERM}:{t}" for t in terms))
    mask = ds.trial
    cols = ds.columns(mask)
    if TREATMENT_TERM in cols:
        raise DatasetError(f"covariate name {TREATMENT_TERM!r} is reserved")
    cols[TREATMENT_TERM] = ds.a[mask].astype(float)
    return RatioModel(method, (fit_columns(full, cols, ds.y[mask]),), floor)


def fit_g(ds: AnalysisDataset, spec: ModelSpec) -> FittedModel:
    """Outcome model on X over every target row, treated or not."""
    return _fit_subset(ds, spec, ds.target, "g (target rows)")


def fit_h(ds: AnalysisDataset, spec: ModelSpec) -> FittedModel:
    """Outcome model on X over untreated target rows."""
    return _fit_subset(ds, spec, ds.target & (ds.a == 0), "h (untreated target rows)")


def fit_m(ds: AnalysisDataset, spec_with_w: ModelSpec) -> FittedModel:
    """Outcome model on (X, W) over untreated target rows."""
    return _fit_subset(ds, spec_with_w, ds.target & (ds.a == 0), "m (untreated target rows)")


def fit_iterated(ds: AnalysisDataset, m: FittedModel, step3_spec: ModelSpec) -> FittedModel:
    """Regress ``m(X, W)`` predictions for all target rows on X by least squares.

    Without W covariates the regression is pointless and ``m`` is returned as is.
    Only the covariate terms of ``step3_spec`` are used; the fit is always
    gaussian/identity.
    """
    if not ds.w_names:
        return m
    for term in step3_spec.covariate_names:
        if any(f in ds.w_names for f in term.split(":")):
            raise GLMError(f"step-3 model must use X only, got W term {term!r}")
    ols = ModelSpec("gaussian", "identity", step3_spec.covariate_names, step3_spec.include_intercept,
                    step3_spec.max_iter, step3_spec.tol)
    mask = ds.target
    cols = ds.columns(mask)
    pseudo = m.predict(cols, int(mask.sum()))
    return fit_columns(ols, cols, pseudo)


def import_external_model(doc) -> FittedModel:
    """Load a model document (JSON text or parsed dict) as an external, fixed model."""
    return model_from_document(doc)


def export_model(model: FittedModel) -> str:
    return model.dumps()
