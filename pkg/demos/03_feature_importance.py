"""
Which library terms matter?
===========================

Compare three importance measures on one noisy series: ensemble inclusion
probability, jackknife LOCO excess error and the LOCO-path statistic.
"""

from sindycp.importance import LambdaGrid, inclusion_report, loco_importance, loco_path_importance
from sindycp.preprocess import prepare_regression
from sindycp.sindy import bootstrap_ensemble
from sindycp.systems import NoiseSpec, add_measurement_noise, make_system, simulate_ode

lv = make_system("lotka_volterra")
clean = simulate_ode(lv, lv.default_x0, dt=0.1, n=149)
noisy = add_measurement_noise(clean, NoiseSpec("gaussian", 0.3, seed=2))
theta, xdot = prepare_regression(noisy)

reports = [
    inclusion_report(bootstrap_ensemble(theta, xdot, B=50, lam=0.05, seed=0)),
    loco_importance(theta, xdot, lam=0.05),
    loco_path_importance(theta, xdot, LambdaGrid.around(0.05)),
]

names = theta.feature_names
print(f"{'feature':8s}" + "".join(f"{r.method:>22s}" for r in reports))
for j, name in enumerate(names):
    cells = "".join(f"{r.scores[j, 0]:>11.3f}{r.scores[j, 1]:>11.3f}" for r in reports)
    print(f"{name:8s}{cells}")
print("(two columns per method: x1' and x2' equations; true terms are x1, x2 and x1*x2)")

# every method should put the generating terms on top
for r in reports:
    print(r.method, "top-2 per state:", [sorted(names[i] for i in s) for s in r.top(2)])
