"""
Treatment variation in the target population
============================================

When some target members already receive the new treatment, the target
outcome regression mixes treated and untreated means. phi then answers the
wrong question. chi standardizes over the untreated target rows instead
(treatment in the target unconfounded given X); psi additionally adjusts
for target-only covariates W through an iterated regression.
"""

from scipy.special import logit

from reltransport import ModelSpec, Pipeline, ScenarioSpec, generate, true_estimands

# Treatment is common where the effect is large (x = 0) and rare elsewhere.
confounded = ScenarioSpec(
    x_names=("x",), x_grid=[[0.0], [1.0]], trial_x_probs=[0.5, 0.5], target_x_probs=[0.5, 0.5],
    effect=[2.0, 1.1], trial_baseline=[9.0, 15.0], target_baseline=[6.0, 12.0],
    target_treatment="logistic_in_x", treatment_coef=(logit(0.9), logit(0.1) - logit(0.9)),
    outcome_family="poisson",
)
truth = true_estimands(confounded).mean_ratio
data = generate(confounded, 20_000, 20_000, seed=2)
spec = ModelSpec("poisson", "log", ("x",))

# check_conditions=False lets phi run even though the target is not all-control.
naive = Pipeline("phi", spec, spec, check_conditions=False)(data).value
chi = Pipeline("chi", spec, spec)(data).value
print(f"truth {truth:.4f}   phi (ignores target treatment) {naive:.4f}   chi {chi:.4f}")

# With a target-only covariate W that shifts both treatment and outcome, psi
# fits m(X, W) on untreated rows and averages it back to X over all target rows.
with_w = ScenarioSpec(
    x_names=("x",), x_grid=[[0.0], [1.0]], trial_x_probs=[0.5, 0.5], target_x_probs=[0.5, 0.5],
    effect=[1.5, 1.2], trial_baseline=[9.0, 15.0], target_baseline=[[6.0, 12.0], [9.0, 18.0]],
    w_names=("w",), w_grid=[[0.0], [1.0]], w_probs=[[0.6, 0.4], [0.3, 0.7]],
    target_treatment="logistic_in_x_w", treatment_coef=(-1.0, 0.5, 1.2), outcome_family="poisson",
)
data = generate(with_w, 20_000, 20_000, seed=3)
psi = Pipeline("psi", spec, m_spec=ModelSpec("poisson", "log", ("x", "w", "x:w")))(data).value
print(f"truth {true_estimands(with_w).mean_ratio:.4f}   psi {psi:.4f}")
