"""Weak-identity residuals: the kinetic law on atoms, the fluid laws on bins.

Part one integrates a ten-particle run and tests it against a battery of
smooth compactly supported test functions in the kinetic weak identity.
The residual is pure time quadrature and falls at second order in the
snapshot spacing.

Part two bins a larger cloud into width-h cells and evaluates the
continuity and momentum identities on the binned fields.  Those residuals
measure how hydrodynamic the cloud is at scale h; they shrink as N grows.
"""

import numpy as np

from flocklab.dynamics import ModelParams, ParticleState, integrate
from flocklab.meanfield import InitialSpec, local_fields, sample_initial
from flocklab.measures import from_particles
from flocklab.weakform import (
    continuity_residual,
    kinetic_battery,
    kinetic_weak_residual,
    macro_battery,
    momentum_residual,
    vector_battery,
)

# ---- kinetic identity on an atomic trajectory ----
x = np.linspace(-0.5, 0.5, 10)[:, None]
v = 0.4 * np.cos(3.0 * x)
params = ModelParams(d=1, alpha=1.5, N=10, T=0.5, M=2.0)
battery = kinetic_battery(1, 0.5, 2.0, size=12, seed=0)
print("snapshots  kinetic residual (battery max)")
for count in (26, 51, 101):
    traj = integrate(
        ParticleState(0.0, x, v),
        params,
        tol=1e-11,
        snapshot_times=np.linspace(0.0, 0.5, count),
    )
    r = max(kinetic_weak_residual(traj, phi) for phi in battery)
    print(f"{count:9d}  {r:.3e}")

# ---- fluid identities on binned fields ----
spec = InitialSpec(
    d=1,
    density="uniform-box",
    density_params={"center": [0.0], "halfwidth": 1.0},
    velocity="sinusoid",
    velocity_params={"amplitude": [0.05], "wavenumber": [120.0]},
    seed=2,
)
H, T = 0.125, 0.5
times = np.linspace(0.0, T, 1025)
mb = macro_battery(1, T, 2.0, size=24, seed=0)
vb = vector_battery(1, T, 2.0, size=24, seed=0)
print("\n    N  continuity   momentum")
for n in (50, 100, 200, 400):
    x0, v0 = sample_initial(spec, n, bound=2.0)
    traj = integrate(
        ParticleState(0.0, x0, v0),
        ModelParams(d=1, alpha=1.0, N=n, T=T, M=2.0),
        tol=1e-6,
        snapshot_times=times,
    )
    grids = [local_fields(from_particles(s), 1, H) for s in traj.snapshots]
    cont = max(continuity_residual(traj.times(), grids, phi) for phi in mb)
    mom = max(
        momentum_residual(
            traj.times(), grids, phi, 1.0,
            initial_atoms=(x0, v0, np.full(n, 1.0 / n)),
        )
        for phi in vb
    )
    print(f"{n:5d}  {cont:.3e}    {mom:.3e}")
