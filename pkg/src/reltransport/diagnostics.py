"""Observed-data checks that accompany the estimators.

* :func:`check_restriction` - target-standardized discrepancy between two
  fitted conditional means, for the two observable restrictions implied when
  ratio and difference transportability hold together:

  R1: E[Y|X,S=1,A=1] == E[Y|X,S=1,A=0]
  R2: E[Y|X,S=1,A=0] == E[Y|X,S=0]

* :func:`positivity_report` - fitted trial-participation, trial-treatment and
  target-control probabilities.
* :func:`compat_check` - per-stratum bookkeeping of ratio vs difference
  transportability for given potential-outcome means.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .datamodel import AnalysisDataset
from .errors import BoundaryError, DatasetError, GLMError
from .estimators import Interval, bootstrap_draws, percentile_interval
from .glm import FittedModel, ModelSpec, fit_columns
from .nuisance import fit_g, fit_ratio

RESTRICTIONS = ("R1", "R2")
DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class DiagnosticResult:
    restriction: str
    statistic: float
    bootstrap_interval: Interval | None
    interpretation: str

    def to_dict(self):
        iv = self.bootstrap_interval
        return {
            "restriction": self.restriction,
            "statistic": self.statistic,
            "ci_lower": iv.lower if iv else None,
            "ci_upper": iv.upper if iv else None,
            "level": iv.level if iv else None,
            "B": iv.replicates if iv else None,
            "failed_replicates": iv.failed if iv else None,
            "seed": iv.seed if iv else None,
            "interpretation": self.interpretation,
        }


_MEANING = {
    "R1": "trial arm means coincide within covariate levels (treated vs control)",
    "R2": "the trial control-arm mean equals the target-population mean within covariate levels",
}


def restriction_statistic(ds: AnalysisDataset, first, second) -> float:
    """Average over target rows of ``first(x) - second(x)``.

    ``first`` and ``second`` are anything with a ``predict(columns, n)`` method.
    """
    mask = ds.target
    n0 = int(mask.sum())
    cols = ds.columns(mask)
    return float(np.mean(first.predict(cols, n0) - second.predict(cols, n0)))


class _ArmModel:
    """Adapter exposing one arm of a ratio model through ``predict``."""

    def __init__(self, ratio, arm):
        self.ratio, self.arm = ratio, arm

    def predict(self, columns, n=None):
        mu1, mu0 = self.ratio.arm_means(columns, n)
        return mu1 if self.arm == 1 else mu0


def _fitted_pair(ds, which, spec, g_spec, ratio_method):
    ratio = fit_ratio(ds, spec, ratio_method)
    if which == "R1":
        return _ArmModel(ratio, 1), _ArmModel(ratio, 0)
    return _ArmModel(ratio, 0), fit_g(ds, g_spec or spec)


def check_restriction(ds: AnalysisDataset, which: str, spec: ModelSpec | None = None, *,
                      g_spec: ModelSpec | None = None, models: Sequence | None = None,
                      ratio_method: str = "arm_specific", B: int = 200, level: float = 0.95,
                      seed: int = 0, threads: int = 1) -> DiagnosticResult:
    """Target-standardized discrepancy for restriction R1 or R2 with a bootstrap interval.

    Either pass ``spec`` (trial outcome model, also used for ``g`` unless
    ``g_spec`` is given) so that models are fit here and refit in each
    bootstrap replicate, or pass already fitted ``models`` as a pair
    ``(first, second)``; with fixed models no interval is computed.

    R1 compares the treated and control trial arms; R2 compares the trial
    control arm with the target-population outcome model ``g``.
    """
    if which not in RESTRICTIONS:
        raise ValueError(f"restriction must be one of {RESTRICTIONS}")
    if models is None and spec is None:
        raise ValueError("check_restriction needs either model specifications or fitted models")
    if models is not None:
        first, second = models
    else:
        first, second = _fitted_pair(ds, which, spec, g_spec, ratio_method)
    stat = restriction_statistic(ds, first, second)

    interval = None
    if models is None and B > 0:
        def replicate(sample):
            return restriction_statistic(sample, *_fitted_pair(sample, which, spec, g_spec, ratio_method))

        draws, failed = bootstrap_draws(ds, replicate, B, seed, threads)
        lower, upper = percentile_interval(draws, level)
        interval = Interval(lower, upper, level, B, int(seed), failed, draws)

    text = f"{which}: {_MEANING[which]}. "
    if interval is None:
        text += "No interval computed (fixed models)."
    elif interval.lower > 0 or interval.upper < 0:
        text += (f"The {level:.0%} interval excludes 0: evidence against {which}. If the other "
                 "restriction is also rejected, ratio and difference transportability cannot both hold.")
    else:
        text += f"The {level:.0%} interval includes 0: no evidence against {which}."
    return DiagnosticResult(which, stat, interval, text)


@dataclass(frozen=True)
class ProbabilitySummary:
    """Summary of fitted probabilities over the rows they are evaluated on."""

    condition: str
    quantity: str
    minimum: float
    p01: float
    median: float
    flagged_rows: tuple = ()
    degenerate: bool = False
    note: str = ""

    def to_dict(self):
        return {
            "condition": self.condition, "quantity": self.quantity, "min": self.minimum,
            "p01": self.p01, "median": self.median, "flagged_rows": list(self.flagged_rows),
            "degenerate": self.degenerate, "note": self.note,
        }


@dataclass(frozen=True)
class PositivityReport:
    threshold: float
    participation: ProbabilitySummary
    trial_treatment: ProbabilitySummary
    target_control: ProbabilitySummary

    @property
    def flagged_rows(self):
        rows = set(self.participation.flagged_rows) | set(self.trial_treatment.flagged_rows)
        return tuple(sorted(rows | set(self.target_control.flagged_rows)))

    def to_dict(self):
        return {
            "threshold": self.threshold,
            "A6": self.participation.to_dict(),
            "A3": self.trial_treatment.to_dict(),
            "B2_C2": self.target_control.to_dict(),
            "flagged_rows": list(self.flagged_rows),
        }


def _fit_probability(spec, cols, response, n):
    """Fitted probabilities plus a degenerate flag and note.

    A constant response yields its observed share; a separated one yields the
    last IRLS iterate, whose probabilities sit near 0 or 1.
    """
    try:
        return fit_columns(spec, cols, response).predict(cols, n), False, ""
    except BoundaryError as exc:
        if exc.coefficients is None:
            return np.full(n, float(np.mean(response))), True, f"degenerate stratum: {exc}"
        last = FittedModel(spec, exc.coefficients, converged=False)
        return last.predict(cols, n), True, f"boundary fit (separation): {exc}"


def _summarise(condition, quantity, probs, rows, threshold, degenerate, note):
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    flagged = tuple(int(r) for r in np.asarray(rows)[probs < threshold])
    return ProbabilitySummary(
        condition, quantity, float(np.min(probs)), float(np.percentile(probs, 1)),
        float(np.median(probs)), flagged, degenerate, note,
    )


def _as_logistic(spec, names):
    return ModelSpec("bernoulli", "logit", names if spec is None else spec.covariate_names,
                     True if spec is None else spec.include_intercept,
                     100 if spec is None else spec.max_iter, 1e-8 if spec is None else spec.tol)


def positivity_report(ds: AnalysisDataset, selection_spec: ModelSpec | None = None,
                      treatment_spec: ModelSpec | None = None, control_spec: ModelSpec | None = None,
                      threshold: float = DEFAULT_THRESHOLD) -> PositivityReport:
    """Logistic-model positivity diagnostics.

    * Pr[S=1 | X] fit on all rows, summarised over target rows (A6);
    * Pr[A=1 | X, S=1] fit and summarised on trial rows (A3);
    * Pr[A=0 | X, W, S=0] fit and summarised on target rows (B2/C2).

    Specs default to main-effects logistic models on X (plus W for the
    target-control model). Only covariate terms of the given specs are used;
    the family and link are always bernoulli/logit. Flagged rows are dataset
    row indices whose fitted probability is below ``threshold``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    sel = _as_logistic(selection_spec, ds.x_names)
    trt = _as_logistic(treatment_spec, ds.x_names)
    ctl = _as_logistic(control_spec, ds.x_names + ds.w_names)
    for term in sel.covariate_names + trt.covariate_names:
        if any(f in ds.w_names for f in term.split(":")):
            raise GLMError(f"W term {term!r} cannot be used outside the target sample")

    all_cols = ds.columns()
    p_sel, deg, note = _fit_probability(sel, all_cols, ds.s.astype(float), ds.n)
    target_rows = np.flatnonzero(ds.target)
    participation = _summarise("A6", "Pr[S=1|X]", p_sel[target_rows], target_rows, threshold, deg, note)

    trial_rows = np.flatnonzero(ds.trial)
    p_trt, deg, note = _fit_probability(trt, ds.columns(ds.trial), ds.a[ds.trial].astype(float), trial_rows.size)
    trial_treatment = _summarise("A3", "Pr[A=1|X,S=1]", p_trt, trial_rows, threshold, deg, note)

    ctl_response = 1.0 - ds.a[ds.target].astype(float)
    p_ctl, deg, note = _fit_probability(ctl, ds.columns(ds.target), ctl_response, target_rows.size)
    target_control = _summarise("B2/C2", "Pr[A=0|X,(W),S=0]", p_ctl, target_rows, threshold, deg, note)
    return PositivityReport(threshold, participation, trial_treatment, target_control)


# --- ratio vs difference transportability ------------------------------------

@dataclass(frozen=True)
class StratumMeans:
    """Conditional potential-outcome means in one covariate stratum.

    ``e11 = E[Y^1|x,S=1]``, ``e10 = E[Y^0|x,S=1]``, ``e01 = E[Y^1|x,S=0]``,
    ``e00 = E[Y^0|x,S=0]``.
    """

    e11: object
    e10: object
    e01: object
    e00: object


@dataclass(frozen=True)
class StratumFlags:
    holds_A4: bool
    holds_A4star: bool
    holds_I1: bool
    holds_I2: bool


@dataclass(frozen=True)
class CompatReport:
    strata: tuple
    theorem_satisfied: bool
    tol: float

    def to_dict(self):
        return {
            "tol": self.tol,
            "theorem_satisfied": self.theorem_satisfied,
            "strata": [vars(f) for f in self.strata],
        }


def _exact(v):
    return v if isinstance(v, (int, Fraction)) else Fraction(v)


def _exact_flags(m):
    e11, e10, e01, e00 = (_exact(v) for v in (m.e11, m.e10, m.e01, m.e00))
    return StratumFlags(
        holds_A4=e11 * e00 == e01 * e10,  # ratios compared without dividing
        holds_A4star=e11 - e10 == e01 - e00,
        holds_I1=e11 == e10 and e01 == e00,
        holds_I2=e11 == e01 and e10 == e00,
    )


def _float_flags(m, tol):
    e11, e10, e01, e00 = (float(v) for v in (m.e11, m.e10, m.e01, m.e00))

    def close(u, v):
        return abs(u - v) <= tol

    return StratumFlags(
        holds_A4=close(e11 / e10, e01 / e00),
        holds_A4star=close(e11 - e10, e01 - e00),
        holds_I1=close(e11, e10) and close(e01, e00),
        holds_I2=close(e11, e01) and close(e10, e00),
    )


def compat_check(strata: Sequence[StratumMeans], tol: float = 0.0) -> CompatReport:
    """Flag ratio (A4) and difference (A4*) transportability and implications I1, I2 per stratum.

    Flags use ``tol`` on the float values (exact comparisons when ``tol`` is 0). ``theorem_satisfied`` is evaluated in
    exact rational arithmetic on the same inputs (floats convert to fractions
    without rounding): every stratum where both A4 and A4* hold exactly must
    satisfy I1 or I2.
    """
    flags, theorem = [], True
    for i, m in enumerate(strata):
        if m.e10 == 0 or m.e00 == 0:
            raise DatasetError(f"stratum {i}: control means must be nonzero", [i])
        ex = _exact_flags(m)
        # with tol = 0 the flags are exact equalities, so the exact path answers both
        flags.append(ex if tol == 0 else _float_flags(m, tol))
        if ex.holds_A4 and ex.holds_A4star and not (ex.holds_I1 or ex.holds_I2):
            theorem = False
    return CompatReport(tuple(flags), theorem, float(tol))
