"""Compare the deterministic occupation-time solver with renewal simulation."""
import numpy as np

from branchsim.config import preset_model
from branchsim.renewal import empirical_occupation_cdf, solve_linear_system

model = preset_model("case-a")
grid = solve_linear_system(model, 6.0, 0.02)
t_vals, a_vals = [2.0, 4.0, 6.0], [0.5, 1.5, 3.0]
emp = empirical_occupation_cdf(model, 0, t_vals, a_vals, 100_000, np.random.default_rng(1))
print(f"solver: {grid.iterations} sweeps, final change {grid.residual:.1e}")
print(" j    t    a   solver  simulated   se")
for j in range(model.K):
    for p, t in enumerate(t_vals):
        for q, a in enumerate(a_vals):
            if a < t:
                e = emp[j][p][q]
                print(f"{j:2d} {t:4.1f} {a:4.1f}   {grid.alpha(0, j, t, a):.4f}   {e.p_hat:.4f}   {e.se:.4f}")
