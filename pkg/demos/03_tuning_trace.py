"""
Watching the radius-margin bound go down
========================================

Tune one binary problem directly and print the descent trace: the bound
``T = R^2 M^2``, its two factors and the accepted step.
"""

import numpy as np

from hdkernel.hdda import fit_hdda
from hdkernel.simulate import generate, scenario_config
from hdkernel.tune import TuneConfig, optimize

train, test, _ = generate(scenario_config("sim-desk", seed=0))
X = train.features
y = np.where(train.labels == 1, 1.0, -1.0)
model = fit_hdda(X[y > 0], s=0.1, class_id=1)

result = optimize(X, y, "hdda-mahalanobis", model=model, config=TuneConfig(max_iter=40))
trace = result.trace
print(trace.to_csv())
print(f"stopped: {trace.reason}; T {trace.T[0]:.3f} -> {trace.T.min():.3f}")
print("C =", round(result.C, 4))
print("sigma^2 =", np.round(result.spec.sigma2, 4))

# The same problem with a Gaussian kernel, for scale.
gauss = optimize(X, y, "gaussian", config=TuneConfig(max_iter=40))
print(f"gaussian: T {gauss.trace.T.min():.3f}, sigma^2 = {gauss.spec.sigma2[0]:.3f}, C = {gauss.C:.4f}")
