"""
The GLM engine behind every nuisance model
==========================================

Fisher scoring (IRLS) with step-halving for gaussian, bernoulli and poisson
families. Log-binomial models estimate risk ratios directly but can hit the
boundary of the parameter space; the engine reports that instead of
returning a silently wrong fit.
"""

import numpy as np

from reltransport import ModelSpec, fit_glm, predict_mean
from reltransport.errors import BoundaryError

x = np.repeat([0.0, 1.0], 10)

# 2/10 events unexposed, 6/10 exposed: the log-link slope is log(3).
y = np.array([1] * 2 + [0] * 8 + [1] * 6 + [0] * 4, dtype=float)
fit = fit_glm(ModelSpec("bernoulli", "log", ("x",)), x[:, None], y)
print("risk ratio", np.exp(fit.coefficients[1]), "after", fit.iterations, "iterations")
print("predicted risk at x=1:", predict_mean(fit, [1.0]))

# Every exposed row has the event: the MLE sits on mu = 1.
y_edge = np.array([1] * 2 + [0] * 8 + [1] * 10, dtype=float)
try:
    fit_glm(ModelSpec("bernoulli", "log", ("x",)), x[:, None], y_edge)
except BoundaryError as exc:
    print("boundary:", exc)

# Fitted models serialize to a small JSON document and load back bit-exactly.
print(fit.dumps())
