"""Kinetic energy is spent on alignment, and the books must balance.

Along any trajectory the energy drop from t=0 equals the time integral of
the pairwise dissipation rate.  Both sides are computed from snapshots
alone, so the defect measures snapshot quadrature, not the integrator:
doubling the snapshot density cuts it by four.
"""

import numpy as np

from flocklab.diagnostics import energy_balance_residual, energy_series
from flocklab.dynamics import ModelParams, ParticleState, integrate

x = np.linspace(-0.6, 0.6, 10)[:, None]
v = 0.4 * np.sin(1.2 * x + 0.3)
params = ModelParams(d=1, alpha=1.0, N=10, T=1.0, M=2.0)

for count in (50, 100, 200, 400):
    traj = integrate(
        ParticleState(0.0, x, v),
        params,
        tol=1e-9,
        snapshot_times=np.linspace(0.0, 1.0, count),
    )
    res = energy_balance_residual(traj)
    print(f"{count:4d} snapshots: balance defect {res:.3e}")

t, e, dee = energy_series(traj)
print(f"\nenergy {e[0]:.6f} -> {e[-1]:.6f}; dissipation rate peaks at {dee.max():.4f}")
print("defect shrinks ~4x per halving: pure trapezoid error, as it should be")
