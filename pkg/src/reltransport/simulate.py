"""Finite-grid generative scenarios with known target-population estimands.

A scenario fixes, for every point ``x`` of a covariate grid:

* the covariate mass in the trial and in the target population;
* the control-arm mean ``e0(x, s)`` in each population (in the target it may
  further depend on a discrete ``W``);
* a treatment effect shared by both populations, either multiplicative
  (``effect_scale="ratio"``: treated mean ``= effect(x) * e0``) or additive
  (``effect_scale="difference"``: treated mean ``= e0 + effect(x)``).

With a multiplicative effect the conditional mean ratio is the same in the
trial and the target, so ratio transportability holds by construction.
Control-arm means never depend on treatment, so partial exchangeability in the
target holds too; target treatment may still depend on ``X`` (and ``W``),
which confounds naive analyses that ignore it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .datamodel import AnalysisDataset
from .errors import ScenarioError

TARGET_TREATMENTS = ("all_control", "logistic_in_x", "logistic_in_x_w")
OUTCOME_FAMILIES = ("bernoulli", "poisson", "gaussian")
OUTCOME_KIND = {"bernoulli": "binary", "poisson": "count", "gaussian": "continuous"}
MIN_MC_DRAWS = 1000
_MC_BATCH = 1_000_000


def _probs(name, p, size=None):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or (size is not None and p.shape[0] != size):
        raise ScenarioError(f"{name} must be a vector of length {size}")
    if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
        raise ScenarioError(f"{name} must be nonnegative and sum to 1")
    return p


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    x_names: tuple
    x_grid: np.ndarray
    trial_x_probs: np.ndarray
    target_x_probs: np.ndarray
    effect: np.ndarray
    trial_baseline: np.ndarray
    target_baseline: np.ndarray
    effect_scale: str = "ratio"
    w_names: tuple = ()
    w_grid: np.ndarray | None = None
    w_probs: np.ndarray | None = None
    target_treatment: str = "all_control"
    treatment_coef: tuple = ()
    trial_assignment_prob: float = 0.5
    outcome_family: str = "bernoulli"
    sigma: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("x_names", tuple(self.x_names))
        set_("w_names", tuple(self.w_names))
        grid = np.asarray(self.x_grid, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.shape[1] != len(self.x_names):
            raise ScenarioError("x_grid columns must match x_names")
        k = grid.shape[0]
        set_("x_grid", grid)
        set_("trial_x_probs", _probs("trial_x_probs", self.trial_x_probs, k))
        set_("target_x_probs", _probs("target_x_probs", self.target_x_probs, k))
        set_("effect", np.asarray(self.effect, dtype=float).reshape(k))
        set_("trial_baseline", np.asarray(self.trial_baseline, dtype=float).reshape(k))

        if self.w_names:
            wg = np.asarray(self.w_grid, dtype=float)
            if wg.ndim == 1:
                wg = wg[:, None]
            if wg.shape[1] != len(self.w_names):
                raise ScenarioError("w_grid columns must match w_names")
            m = wg.shape[0]
            set_("w_grid", wg)
            wp = np.asarray(self.w_probs, dtype=float).reshape(k, m)
            for i in range(k):
                _probs(f"w_probs[{i}]", wp[i], m)
            set_("w_probs", wp)
            tb = np.asarray(self.target_baseline, dtype=float)
            if tb.ndim == 1:
                tb = np.repeat(tb[:, None], m, axis=1)
            set_("target_baseline", tb.reshape(k, m))
        else:
            set_("w_grid", None)
            set_("w_probs", None)
            set_("target_baseline", np.asarray(self.target_baseline, dtype=float).reshape(k))

        if self.effect_scale not in ("ratio", "difference"):
            raise ScenarioError("effect_scale must be 'ratio' or 'difference'")
        if self.outcome_family not in OUTCOME_FAMILIES:
            raise ScenarioError(f"outcome_family must be one of {OUTCOME_FAMILIES}")
        if self.target_treatment not in TARGET_TREATMENTS:
            raise ScenarioError(f"target_treatment must be one of {TARGET_TREATMENTS}")
        if self.target_treatment == "logistic_in_x_w" and not self.w_names:
            raise ScenarioError("logistic_in_x_w needs W covariates")
        ncoef = {"all_control": 0, "logistic_in_x": 1 + len(self.x_names),
                 "logistic_in_x_w": 1 + len(self.x_names) + len(self.w_names)}[self.target_treatment]
        set_("treatment_coef", tuple(float(c) for c in self.treatment_coef))
        if len(self.treatment_coef) != ncoef:
            raise ScenarioError(f"{self.target_treatment} needs {ncoef} treatment coefficients")
        if not 0.0 < self.trial_assignment_prob < 1.0:
            raise ScenarioError("trial_assignment_prob must lie in (0, 1) (trial treatment positivity)")
        if not self.sigma > 0:
            raise ScenarioError("sigma must be positive")

        target_mass = self.target_x_probs > 0
        if np.any(target_mass & (self.trial_x_probs <= 0)):
            raise ScenarioError("every target grid point needs positive trial mass (trial participation positivity)")
        for label, base in (("trial", self.trial_baseline), ("target", self.target_baseline)):
            if np.any(base <= 0):
                raise ScenarioError(f"{label} control means must be positive")
            treated = self._treated_mean(base)
            if self.outcome_family == "bernoulli":
                if np.any(base >= 1) or np.any(treated <= 0) or np.any(treated >= 1):
                    raise ScenarioError(f"{label} bernoulli means must lie in (0, 1) under both treatments")
            elif self.outcome_family == "poisson" and np.any(treated <= 0):
                raise ScenarioError(f"{label} treated means must be positive")
            elif np.any(treated == 0):
                raise ScenarioError(f"{label} treated means must be nonzero")

    def _treated_mean(self, base):
        eff = self.effect if base.ndim == 1 else self.effect[:, None]
        return base * eff if self.effect_scale == "ratio" else base + eff

    @property
    def outcome_kind(self):
        return OUTCOME_KIND[self.outcome_family]

    @property
    def target_control_mean(self) -> np.ndarray:
        """``E[Y^0 | X=x, S=0]`` at every grid point (W marginalized)."""
        if self.w_names:
            return np.sum(self.w_probs * self.target_baseline, axis=1)
        return self.target_baseline

    def treatment_probability(self, x, w=None) -> np.ndarray:
        """Pr[A=1 | X, W, S=0] at the given rows."""
        x = np.atleast_2d(x)
        if self.target_treatment == "all_control":
            return np.zeros(x.shape[0])
        c = np.asarray(self.treatment_coef)
        eta = c[0] + x @ c[1:1 + len(self.x_names)]
        if self.target_treatment == "logistic_in_x_w":
            eta = eta + np.atleast_2d(w) @ c[1 + len(self.x_names):]
        return expit(eta)

    def stratum_means(self):
        """Per grid point ``(e11, e10, e01, e00)`` as diagnostics.StratumMeans."""
        from .diagnostics import StratumMeans

        e0_trial = self.trial_baseline
        e0_target = self.target_control_mean
        e1_trial = self._treated_mean(e0_trial)
        e1_target = self._treated_mean(e0_target)
        return [StratumMeans(float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(e1_trial, e0_trial, e1_target, e0_target)]

    def to_document(self) -> dict:
        doc = {
            "name": self.name,
            "x_names": list(self.x_names),
            "x_grid": self.x_grid.tolist(),
            "trial_x_probs": self.trial_x_probs.tolist(),
            "target_x_probs": self.target_x_probs.tolist(),
            "effect_scale": self.effect_scale,
            "effect": self.effect.tolist(),
            "trial_baseline": self.trial_baseline.tolist(),
            "target_baseline": self.target_baseline.tolist(),
            "target_treatment": {"kind": self.target_treatment, "coefficients": list(self.treatment_coef)},
            "trial_assignment_prob": self.trial_assignment_prob,
            "outcome": {"family": self.outcome_family, "sigma": self.sigma},
        }
        if self.w_names:
            doc["w"] = {"names": list(self.w_names), "grid": self.w_grid.tolist(), "probs": self.w_probs.tolist()}
        return doc

    @classmethod
    def from_document(cls, doc) -> "ScenarioSpec":
        if isinstance(doc, (str, bytes)):
            try:
                doc = json.loads(doc)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"malformed scenario document: {exc}") from None
        try:
            treatment = doc.get("target_treatment", {"kind": "all_control"})
            outcome = doc.get("outcome", {})
            w = doc.get("w") or {}
            return cls(
                x_names=doc["x_names"], x_grid=doc["x_grid"],
                trial_x_probs=doc["trial_x_probs"], target_x_probs=doc["target_x_probs"],
                effect=doc["effect"], trial_baseline=doc["trial_baseline"],
                target_baseline=doc["target_baseline"],
                effect_scale=doc.get("effect_scale", "ratio"),
                w_names=w.get("names", ()), w_grid=w.get("grid"), w_probs=w.get("probs"),
                target_treatment=treatment.get("kind", "all_control"),
                treatment_coef=treatment.get("coefficients", ()),
                trial_assignment_prob=doc.get("trial_assignment_prob", 0.5),
                outcome_family=outcome.get("family", "bernoulli"),
                sigma=outcome.get("sigma", 1.0),
                name=doc.get("name", ""),
            )
        except KeyError as exc:
            raise ScenarioError(f"scenario document is missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"invalid scenario document: {exc}") from None


def load_scenario(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return ScenarioSpec.from_document(fh.read())


def _apply_effect(sc, base, ix):
    """Treated-arm means for rows at grid indices ``ix`` with control means ``base``."""
    eff = sc.effect[ix]
    return base * eff if sc.effect_scale == "ratio" else base + eff


def _draw_outcome(rng, family, mean, sigma):
    if family == "bernoulli":
        return (rng.random(mean.shape[0]) < mean).astype(float)
    if family == "poisson":
        return rng.poisson(mean).astype(float)
    return mean + sigma * rng.standard_normal(mean.shape[0])


def _draw_categorical(rng, probs_rows):
    """One category per row, row ``i`` drawn from ``probs_rows[i]``."""
    cum = np.cumsum(probs_rows, axis=1)
    u = rng.random(probs_rows.shape[0])[:, None]
    idx = (u >= cum).sum(axis=1)
    return np.minimum(idx, probs_rows.shape[1] - 1)


def generate(scenario: ScenarioSpec, n1: int, n0: int, seed: int) -> AnalysisDataset:
    """Draw ``n1`` trial rows followed by ``n0`` target rows; fully determined by ``seed``."""
    if n1 < 1 or n0 < 1:
        raise ScenarioError("n1 and n0 must both be at least 1")
    sc = scenario
    rng = np.random.default_rng(seed)
    k = sc.x_grid.shape[0]

    ix1 = rng.choice(k, size=n1, p=sc.trial_x_probs)
    a1 = (rng.random(n1) < sc.trial_assignment_prob).astype(int)
    base1 = sc.trial_baseline[ix1]
    mean1 = np.where(a1 == 1, _apply_effect(sc, base1, ix1), base1)
    y1 = _draw_outcome(rng, sc.outcome_family, mean1, sc.sigma)

    ix0 = rng.choice(k, size=n0, p=sc.target_x_probs)
    x0 = sc.x_grid[ix0]
    if sc.w_names:
        iw0 = _draw_categorical(rng, sc.w_probs[ix0])
        w0 = sc.w_grid[iw0]
        base0 = sc.target_baseline[ix0, iw0]
    else:
        w0 = None
        base0 = sc.target_baseline[ix0]
    a0 = (rng.random(n0) < sc.treatment_probability(x0, w0)).astype(int)
    mean0 = np.where(a0 == 1, _apply_effect(sc, base0, ix0), base0)
    y0 = _draw_outcome(rng, sc.outcome_family, mean0, sc.sigma)

    w = None
    if sc.w_names:
        w = np.vstack([np.full((n1, len(sc.w_names)), np.nan), w0])
    return AnalysisDataset(
        x=np.vstack([sc.x_grid[ix1], x0]), s=np.r_[np.ones(n1, int), np.zeros(n0, int)],
        a=np.r_[a1, a0], y=np.r_[y1, y0], x_names=sc.x_names, w=w, w_names=sc.w_names,
        outcome_kind=sc.outcome_kind,
    )


@dataclass(frozen=True)
class TrueValues:
    mean_y1_s0: float
    mean_y0_s0: float
    mean_ratio: float
    ate: float
    method: str = "closed_form"
    n_draws: int | None = None
    seed: int | None = None
    se_mean_ratio: float | None = None
    se_ate: float | None = None

    def to_document(self) -> dict:
        return dict(vars(self))


def _closed_form(sc):
    e0 = sc.target_control_mean
    e1 = sc._treated_mean(e0)
    y1 = float(np.dot(sc.target_x_probs, e1))
    y0 = float(np.dot(sc.target_x_probs, e0))
    return y1, y0


def true_estimands(scenario: ScenarioSpec, method: str = "closed_form", n_draws: int = 1_000_000,
                   seed: int = 0) -> TrueValues:
    """Target-population ``E[Y^1]``, ``E[Y^0]``, their ratio and difference.

    ``closed_form`` sums over the grid. ``monte_carlo`` draws ``n_draws`` target
    units with both potential outcomes and reports delta-method standard errors
    for the ratio and the difference.
    """
    sc = scenario
    if method == "closed_form":
        y1, y0 = _closed_form(sc)
        if y0 == 0:
            raise ScenarioError("E[Y^0|S=0] is zero; the mean ratio is undefined")
        return TrueValues(y1, y0, y1 / y0, y1 - y0)
    if method != "monte_carlo":
        raise ValueError("method must be 'closed_form' or 'monte_carlo'")
    if n_draws < MIN_MC_DRAWS:
        raise ScenarioError(f"monte_carlo needs at least {MIN_MC_DRAWS} draws")

    k = sc.x_grid.shape[0]
    sums = np.zeros(5)  # y1, y0, y1^2, y0^2, y1*y0
    for b, start in enumerate(range(0, n_draws, _MC_BATCH)):
        size = min(_MC_BATCH, n_draws - start)
        rng = np.random.default_rng([int(seed), b])
        ix = rng.choice(k, size=size, p=sc.target_x_probs)
        if sc.w_names:
            base = sc.target_baseline[ix, _draw_categorical(rng, sc.w_probs[ix])]
        else:
            base = sc.target_baseline[ix]
        y1 = _draw_outcome(rng, sc.outcome_family, _apply_effect(sc, base, ix), sc.sigma)
        y0 = _draw_outcome(rng, sc.outcome_family, base, sc.sigma)
        sums += [y1.sum(), y0.sum(), (y1 * y1).sum(), (y0 * y0).sum(), (y1 * y0).sum()]
    m1, m0, s11, s00, s10 = sums / n_draws
    v1, v0, c10 = s11 - m1 * m1, s00 - m0 * m0, s10 - m1 * m0
    ratio = m1 / m0
    se_ate = math.sqrt(max(v1 + v0 - 2 * c10, 0.0) / n_draws)
    se_ratio = math.sqrt(max(v1 - 2 * ratio * c10 + ratio * ratio * v0, 0.0) / n_draws) / abs(m0)
    return TrueValues(float(m1), float(m0), float(ratio), float(m1 - m0), "monte_carlo",
                      int(n_draws), int(seed), se_ratio, se_ate)


def worked_example(**overrides) -> ScenarioSpec:
    """Binary-X scenario with uniform control use in the target.

    Target: ``X ~ Bernoulli(0.5)``, control risks 0.1 / 0.3, risk ratios 2 / 1.5,
    so the true mean ratio is 1.625 and the ATE 0.125.
    """
    params = dict(
        name="worked-example-A5",
        x_names=("x",), x_grid=[[0.0], [1.0]],
        trial_x_probs=[0.5, 0.5], target_x_probs=[0.5, 0.5],
        effect=[2.0, 1.5], trial_baseline=[0.2, 0.4], target_baseline=[0.1, 0.3],
        target_treatment="all_control", trial_assignment_prob=0.5, outcome_family="bernoulli",
    )
    params.update(overrides)
    return ScenarioSpec(**params)


def write_truth(truth: TrueValues, path):
    text = json.dumps(truth.to_document(), indent=2, sort_keys=True) + "\n"
    if isinstance(path, (str, os.PathLike)):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        path.write(text)
