"""
Discovering the predator-prey equations from noisy samples
==========================================================

Simulate the Lotka-Volterra system, corrupt it with Gaussian noise, then
recover the governing equations with STLSQ and a bagged ensemble.
"""

import numpy as np

from sindycp.preprocess import prepare_regression
from sindycp.sindy import aggregate, bootstrap_ensemble, inclusion_probability, stlsq
from sindycp.systems import NoiseSpec, add_measurement_noise, make_system, simulate_ode

# the generating system: x1' = x1 - 0.1 x1 x2,  x2' = 0.1 x1 x2 - x2
lv = make_system("lotka_volterra")
clean = simulate_ode(lv, lv.default_x0, dt=0.1, n=399)
noisy = add_measurement_noise(clean, NoiseSpec("gaussian", level=0.3, seed=1))

# smooth, differentiate and build the quadratic library in one call
theta, xdot = prepare_regression(noisy, window=9, polyorder=3)
print("library:", theta.feature_names)

# a single sparse fit
model = stlsq(theta, xdot, lam=0.05)
for k, label in enumerate(("x1'", "x2'")):
    terms = [f"{model.coeffs[j, k]:+.3f} {name}" for j, name in enumerate(model.feature_names)
             if model.support[j, k]]
    print(f"{label} = {' '.join(terms)}")

# bagging: 50 bootstrap members, median aggregate and inclusion probabilities
ens = bootstrap_ensemble(theta, xdot, B=50, lam=0.05, seed=0)
print("\nmedian aggregate:\n", np.round(aggregate(ens, "median").coeffs, 3))
print("inclusion probability:\n", inclusion_probability(ens))
print("true coefficients:\n", lv.true_coeffs.coeffs)
