"""Survival integral over the growing window for the finite-mean and case-a presets."""
import numpy as np

from branchsim.branching import survival_integral
from branchsim.config import preset_model
from branchsim.model import critical_dimensions, predicted_decay_exponent

t = [25.0, 50.0, 100.0, 200.0]
for name in ("finite-mean-subcritical", "case-a"):
    model = preset_model(name)
    si = survival_integral(model, 0, t, 1.0, 3.0, 200_000, np.random.default_rng(2))
    pred = predicted_decay_exponent(critical_dimensions(model), model.d)
    print(f"{name}: predicted bound exponent {pred:+.3f}, decreasing at 2 paired SE: {si.decreasing(2.0)}")
    for tt, est, se, R in zip(si.t, si.estimate, si.se, si.window):
        print(f"  t={tt:6.0f}  window={R:8.1f}  estimate={est:.4f} +/- {se:.4f}")
