"""
Mean ratio in a target population that only uses the control treatment
=======================================================================

A trial estimates how a new treatment multiplies the mean outcome within
levels of a covariate X. A separate sample from the target population was
never treated. Standardizing the trial's conditional ratio over the target
outcome model gives the target-population mean ratio (phi) and the
average treatment effect (beta).
"""

from reltransport import ModelSpec, Pipeline, bootstrap_ci, generate, true_estimands, worked_example

# Target: X ~ Bernoulli(0.5), control risks 0.1 / 0.3, risk ratios 2 / 1.5.
scenario = worked_example()
truth = true_estimands(scenario)
print(f"true mean ratio {truth.mean_ratio:.4f}, true ATE {truth.ate:.4f}")

data = generate(scenario, n1=3000, n0=3000, seed=1)
print(f"{data.n1} trial rows, {data.n0} target rows")

# Saturated logistic models in X for the trial arms and for the target outcome.
spec = ModelSpec("bernoulli", "logit", ("x",))
phi = Pipeline("phi", ratio_spec=spec, outcome_spec=spec)
beta = Pipeline("phi", ratio_spec=spec, outcome_spec=spec, estimand="ate")

for label, pipeline in (("mean ratio (phi)", phi), ("ATE (beta)", beta)):
    estimate, interval = bootstrap_ci(data, pipeline, B=200, seed=7)
    print(f"{label:17s} {estimate.value:.4f}  95% CI [{interval.lower:.4f}, {interval.upper:.4f}]")
