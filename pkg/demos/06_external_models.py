"""
Reusing an outcome model fitted elsewhere
=========================================

An outcome model for the target population (for example from a registry)
can be supplied instead of fitting one. It stays fixed across bootstrap
replicates, and the result is marked as using an external nuisance model.
"""

from reltransport import ModelSpec, Pipeline, bootstrap_ci, generate, import_external_model, worked_example

document = '{"family": "bernoulli", "link": "logit", "coefficients": [["intercept", -2.1972], ["x", 1.3499]]}'
g = import_external_model(document)
print("external g at x = 0, 1:", g.predict({"x": [0.0, 1.0]}))

data = generate(worked_example(), 3000, 3000, seed=6)
spec = ModelSpec("bernoulli", "logit", ("x",))
estimate, interval = bootstrap_ci(data, Pipeline("phi", spec, external={"g": g}), B=200, seed=2)
print(f"phi {estimate.value:.4f} [{interval.lower:.4f}, {interval.upper:.4f}], external: {estimate.external_nuisance}")
