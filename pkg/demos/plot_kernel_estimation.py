"""
Estimating the blur kernel from a registered pair
=================================================

When a high-resolution scan and a low-resolution scan of the same region
are available, the forward operator can be fitted by linear least squares
in the kernel.  Here the hidden kernel is random, which is harder than a
smooth blur since nothing about its shape can be guessed.
"""

import time

import numpy as np

from wasserpatch.forward import estimate_kernel
from wasserpatch.imaging import OperatorSpec, conv_valid

rng = np.random.default_rng(0)
hidden = OperatorSpec(rng.random((13, 13, 13)), 3)
x_hi = rng.random((60, 60, 60))
y_lo = conv_valid(x_hi, hidden)
print("HR", x_hi.shape, "-> LR", y_lo.shape)

###############################################################################
# Conjugate gradients on the normal equations converge in a few dozen steps.

t0 = time.perf_counter()
fit = estimate_kernel(x_hi, y_lo, kernel_size=13, stride=3)
print(f"CG: relative residual {fit.relative_residual:.2e} after {fit.iterations} iterations "
      f"({time.perf_counter() - t0:.1f}s)")

###############################################################################
# Plain gradient descent with backtracking is much slower on this
# problem: the operator is badly conditioned.

fit_gd = estimate_kernel(x_hi, y_lo, kernel_size=13, stride=3, iters=50, method="gd")
print(f"GD: relative residual {fit_gd.relative_residual:.2e} after {fit_gd.iterations} iterations")

###############################################################################
# The fitted operator predicts unseen data.

held = rng.random((25, 25, 25))
err = np.linalg.norm(conv_valid(held, fit.operator) - conv_valid(held, hidden))
print(f"held-out relative error {err / np.linalg.norm(conv_valid(held, hidden)):.2e}")
