"""
How the HDDA kernel bends distances
===================================

In two dimensions with one signal direction, the kernel decays at a rate
set by the signal weight along ``q1`` and at a second rate across it.
"""

import numpy as np

from hdkernel.hdda import HddaClassModel
from hdkernel.kernels import KernelSpec, evaluate, metric_tensor

theta = np.pi / 6
q1 = np.array([np.cos(theta), np.sin(theta)])
q_perp = np.array([-q1[1], q1[0]])

model = HddaClassModel.from_covariance_parts(np.array([4.0]), q1[:, None], 1.0)
spec = KernelSpec.hdda_mahalanobis(model, np.array([0.5, 0.5]))

origin = np.zeros(2)
print("   t   along q1   across q1")
for t in (0.25, 0.5, 1.0, 1.5):
    print(f"{t:4.2f}   {evaluate(spec, origin, t * q1):.5f}    {evaluate(spec, origin, t * q_perp):.5f}")

# The quadratic form behind the exponent; its eigenvectors are q1 and q_perp.
M = metric_tensor(spec)
vals, vecs = np.linalg.eigh(M)
print("metric eigenvalues", np.round(vals, 4))
print("leading eigenvector", np.round(vecs[:, -1] * np.sign(vecs[0, -1]), 4), "q1", np.round(q1, 4))
