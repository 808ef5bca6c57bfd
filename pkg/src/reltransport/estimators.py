"""Plug-in estimators of the target-population mean ratio and average treatment effect.

Every estimator averages over target rows only. With ``r`` the trial ratio
model and ``n0`` the target sample size:

=========  ===========================  ===========================
estimator  numerator (per target row)   denominator (per target row)
=========  ===========================  ===========================
phi        mean of r(X) g(X)            mean of Y
chi        mean of r(X) h(X)            mean of h(X)
psi        mean of r(X) b(X)            mean of m(X, W)
=========  ===========================  ===========================

The mean ratio is ``numerator / denominator``; the matching ATE estimators
(beta, gamma, delta) report ``numerator - denominator``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .datamodel import AnalysisDataset, validate_dataset
from .errors import (
    BootstrapError,
    ConditionViolation,
    DatasetError,
    EstimationError,
    GLMError,
    RatioEvaluationError,
)
from .glm import ModelSpec
from .nuisance import NuisanceSet, fit_g, fit_h, fit_iterated, fit_m, fit_ratio

RATIO_ESTIMATORS = ("phi", "chi", "psi")
ATE_FOR = {"phi": "beta", "chi": "gamma", "psi": "delta"}
RATIO_FOR = {v: k for k, v in ATE_FOR.items()}
MAX_FAILURE_FRACTION = 0.2


@dataclass(frozen=True)
class Estimate:
    estimand: str
    estimator: str
    value: float
    numerator: float
    denominator: float
    n0: int
    n1: int
    external_nuisance: bool = False


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    level: float
    replicates: int
    seed: int
    failed: int = 0
    draws: np.ndarray | None = field(default=None, repr=False, compare=False)
    method: str = "percentile bootstrap"


def _target_terms(ds, nuisances, estimator):
    mask = ds.target
    n0 = int(mask.sum())
    cols = ds.columns(mask)
    r = nuisances.ratio.evaluate(cols, n0)
    if estimator == "phi":
        nuisances.require("g")
        return r * nuisances.g.predict(cols, n0), ds.y[mask]
    if estimator == "chi":
        nuisances.require("h")
        h = nuisances.h.predict(cols, n0)
        return r * h, h
    nuisances.require("m", "b")
    return r * nuisances.b.predict(cols, n0), nuisances.m.predict(cols, n0)


def _estimate(ds, nuisances, estimator, estimand):
    top, bottom = _target_terms(ds, nuisances, estimator)
    n0 = top.shape[0]
    num_sum, den_sum = float(np.sum(top)), float(np.sum(bottom))
    numerator, denominator = num_sum / n0, den_sum / n0
    if estimand == "mean_ratio":
        if den_sum == 0.0:
            raise EstimationError(f"{estimator}: denominator sum is zero")
        value = num_sum / den_sum
        name = estimator
    else:
        value = numerator - denominator
        name = ATE_FOR[estimator]
    return Estimate(estimand, name, value, numerator, denominator, n0, ds.n1, nuisances.external)


def estimate_phi(ds: AnalysisDataset, nuisances: NuisanceSet) -> Estimate:
    """Mean ratio when every target-population member receives the control treatment."""
    return _estimate(ds, nuisances, "phi", "mean_ratio")


def estimate_chi(ds: AnalysisDataset, nuisances: NuisanceSet) -> Estimate:
    """Mean ratio with treatment variation in the target, confounding controlled by X."""
    return _estimate(ds, nuisances, "chi", "mean_ratio")


def estimate_psi(ds: AnalysisDataset, nuisances: NuisanceSet) -> Estimate:
    """Mean ratio with treatment variation in the target, confounding controlled by (X, W)."""
    return _estimate(ds, nuisances, "psi", "mean_ratio")


def estimate_ate(ds: AnalysisDataset, nuisances: NuisanceSet, variant: str) -> Estimate:
    """ATE counterpart of phi/chi/psi: ``variant`` is ``beta``, ``gamma`` or ``delta``."""
    if variant not in RATIO_FOR:
        raise ValueError(f"variant must be one of {tuple(RATIO_FOR)}")
    return _estimate(ds, nuisances, RATIO_FOR[variant], "ate")


@dataclass(frozen=True)
class Pipeline:
    """A full re-estimation recipe: fit every nuisance, then evaluate one estimator.

    ``external`` maps nuisance names (``g``, ``h``, ``m``) to fixed models that
    are used as given instead of being fit, in the original sample and in every
    bootstrap replicate alike.
    """

    estimator: str
    ratio_spec: ModelSpec
    outcome_spec: ModelSpec | None = None
    estimand: str = "mean_ratio"
    ratio_method: str = "arm_specific"
    m_spec: ModelSpec | None = None
    b_spec: ModelSpec | None = None
    external: Mapping = field(default_factory=dict)
    check_conditions: bool = True

    def __post_init__(self):
        if self.estimator not in RATIO_ESTIMATORS:
            raise ValueError(f"estimator must be one of {RATIO_ESTIMATORS}")
        if self.estimand not in ("mean_ratio", "ate"):
            raise ValueError("estimand must be 'mean_ratio' or 'ate'")
        unknown = set(self.external) - {"g", "h", "m"}
        if unknown:
            raise ValueError(f"external models are supported for g, h, m only; got {sorted(unknown)}")

    def _model(self, name, fitter, ds, spec):
        if name in self.external:
            model = self.external[name]
            return model if model.external else replace(model, external=True)
        if spec is None:
            raise ValueError(f"no model specification for {name}")
        return fitter(ds, spec)

    def fit(self, ds: AnalysisDataset) -> NuisanceSet:
        ratio = fit_ratio(ds, self.ratio_spec, self.ratio_method)
        if self.estimator == "phi":
            return NuisanceSet(ratio, g=self._model("g", fit_g, ds, self.outcome_spec))
        if self.estimator == "chi":
            return NuisanceSet(ratio, h=self._model("h", fit_h, ds, self.outcome_spec))
        m = self._model("m", fit_m, ds, self.m_spec)
        b_spec = self.b_spec or ModelSpec("gaussian", "identity", ds.x_names)
        return NuisanceSet(ratio, m=m, b=fit_iterated(ds, m, b_spec))

    def __call__(self, ds: AnalysisDataset) -> Estimate:
        if self.check_conditions:
            report = validate_dataset(ds, self.estimator)
            if report.errors:
                first = report.errors[0]
                raise ConditionViolation(first.message, first.code)
        return _estimate(ds, self.fit(ds), self.estimator, self.estimand)


# failures that make a bootstrap replicate unusable rather than the whole run invalid
_REPLICATE_FAILURES = (GLMError, DatasetError, RatioEvaluationError, EstimationError, ConditionViolation)


def resample_indices(ds: AnalysisDataset, seed: int, replicate: int) -> np.ndarray:
    """Row indices for one bootstrap replicate, drawn within the trial and target strata.

    The stream depends only on ``(seed, replicate)``.
    """
    rng = np.random.default_rng([int(seed), int(replicate)])
    trial = np.flatnonzero(ds.trial)
    target = np.flatnonzero(ds.target)
    return np.concatenate([
        trial[rng.integers(0, trial.size, trial.size)],
        target[rng.integers(0, target.size, target.size)],
    ])


def bootstrap_draws(ds: AnalysisDataset, statistic: Callable, B: int, seed: int = 0, threads: int = 1):
    """Evaluate ``statistic`` on ``B`` stratified resamples.

    Returns ``(draws, failed)`` with NaN draws for failed replicates.
    ``statistic`` maps a dataset to a float or an :class:`Estimate`.
    """
    if B < 1:
        raise BootstrapError("the number of bootstrap replicates must be at least 1")

    def one(r):
        try:
            out = statistic(ds.take(resample_indices(ds, seed, r)))
        except _REPLICATE_FAILURES:
            return np.nan
        value = float(out.value if isinstance(out, Estimate) else out)
        return value if np.isfinite(value) else np.nan

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            draws = np.array(list(pool.map(one, range(B))))
    else:
        draws = np.array([one(r) for r in range(B)])
    failed = int(np.count_nonzero(np.isnan(draws)))
    if failed > MAX_FAILURE_FRACTION * B:
        raise BootstrapError(f"{failed} of {B} bootstrap replicates failed", failed, B)
    return draws, failed


def percentile_interval(draws, level: float):
    ok = np.asarray(draws)[~np.isnan(draws)]
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(ok, [alpha, 1.0 - alpha])
    return float(lower), float(upper)


def bootstrap_ci(ds: AnalysisDataset, pipeline: Callable, B: int = 500, level: float = 0.95,
                 seed: int = 0, threads: int = 1, keep_draws: bool = True):
    """Point estimate on ``ds`` plus a percentile bootstrap interval.

    Trial and target rows are resampled separately, every internal nuisance is
    refit in each replicate and external models stay fixed. Replicates that
    fail to fit are dropped; more than 20% failures is an error.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    if B < 1:
        raise BootstrapError("the number of bootstrap replicates must be at least 1")
    estimate = pipeline(ds)
    draws, failed = bootstrap_draws(ds, pipeline, B, seed, threads)
    lower, upper = percentile_interval(draws, level)
    interval = Interval(lower, upper, level, B, int(seed), failed, draws if keep_draws else None)
    return estimate, interval


def result_document(estimate: Estimate, interval: Interval | None = None, **extra) -> dict:
    doc = {
        "estimand": estimate.estimand,
        "estimator": estimate.estimator,
        "point": estimate.value,
        "numerator": estimate.numerator,
        "denominator": estimate.denominator,
        "n0": estimate.n0,
        "n1": estimate.n1,
        "external_nuisance": estimate.external_nuisance,
        "ci_lower": None, "ci_upper": None, "level": None, "B": None,
        "failed_replicates": None, "seed": None,
    }
    if interval is not None:
        doc.update(
            ci_lower=interval.lower, ci_upper=interval.upper, level=interval.level,
            B=interval.replicates, failed_replicates=interval.failed, seed=interval.seed,
            method=interval.method,
        )
    doc.update(extra)
    return doc


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


__all__ = [
    "Estimate", "Interval", "Pipeline",
    "estimate_phi", "estimate_chi", "estimate_psi", "estimate_ate",
    "bootstrap_ci", "bootstrap_draws", "percentile_interval", "resample_indices", "result_document",
]
