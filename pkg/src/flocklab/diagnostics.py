"""Scalar diagnostics of atomic phase-space measures and trajectories.

Conventions.  All pair functionals are double sums over ordered atom pairs
(a, b) against the product measure, so each unordered pair enters twice.
Self-pairs (a = b) are excluded; they contribute nothing when a kernel is
bounded, and are meaningless for the raw singular kernel.  Pairs sharing a
position are additionally excluded exactly when the kernel has no
regularization (eta = 0), mirroring an off-diagonal integral.

The kernel normalization beta(eta, alpha, d) is the integral of
(|x| + eta)^(-alpha) over R^d.  Closed forms are implemented for d = 1 and
d = 2; when alpha equals d the quantity enters only through ratios and is
set to 1 exactly.  The eta-weighted monokineticity functional uses the
conditional mean velocity from exact disintegration, with the inner sum
running over the spatial marginal's atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .errors import DivergentNormalization, UnsupportedDimension
from .measures import EmpiricalMeasure, from_particles, phi_weighted_marginal


def _split(mu: EmpiricalMeasure, d: int):
    if mu.point_dim != 2 * d:
        raise ValueError("phase measure must have point dimension 2d")
    return mu.points[:, :d], mu.points[:, d:], mu.weights


def kinetic_energy(mu: EmpiricalMeasure, d: int) -> float:
    """Second velocity moment: sum of w |v|^2."""
    _, v, w = _split(mu, d)
    return float(w @ np.einsum("ij,ij->i", v, v))


def momentum(mu: EmpiricalMeasure, d: int) -> np.ndarray:
    """First velocity moment: sum of w v."""
    _, v, w = _split(mu, d)
    return w @ v


def _pair_grids(x: np.ndarray, v: np.ndarray):
    dx = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
    dv = v[:, None, :] - v[None, :, :]
    s2 = np.einsum("ijk,ijk->ij", dv, dv)
    return r, s2


def enstrophy(mu: EmpiricalMeasure, d: int, alpha: float) -> float:
    """Alignment dissipation rate:
    sum over off-diagonal pairs of w_a w_b |v_a - v_b|^2 / |x_a - x_b|^alpha."""
    x, v, w = _split(mu, d)
    r, s2 = _pair_grids(x, v)
    mask = ~np.eye(len(w), dtype=bool) & (r > 0.0)
    with np.errstate(divide="ignore"):
        kern = np.where(mask, r, 1.0) ** (-alpha)
    val = (w[:, None] * w[None, :]) * s2 * kern
    return float(val[mask].sum())


def dalpha(mu: EmpiricalMeasure, d: int, alpha: float, eta: float = 0.0) -> float:
    """Higher-moment dissipation:
    sum over pairs of w_a w_b |v_a - v_b|^(alpha+2) / (|x_a - x_b| + eta)^alpha.

    At eta = 0 pairs sharing a position are excluded; with eta > 0 every
    off-diagonal pair counts (co-located atoms included).
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    x, v, w = _split(mu, d)
    r, s2 = _pair_grids(x, v)
    mask = ~np.eye(len(w), dtype=bool)
    if eta == 0.0:
        mask &= r > 0.0
    with np.errstate(divide="ignore"):
        kern = np.where(mask, r + eta, 1.0) ** (-alpha)
    val = (w[:, None] * w[None, :]) * s2 ** ((alpha + 2.0) / 2.0) * kern
    return float(val[mask].sum())


def beta_eta(eta: float, alpha: float, d: int) -> float:
    """Normalization integral of (|x| + eta)^(-alpha) over R^d, closed form.

    Equals 1 exactly at alpha = d (the critical case enters only through
    ratios).  Raises DivergentNormalization for alpha < d and
    UnsupportedDimension for d >= 3; scaling obeys eta^alpha beta ~ eta^d.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    if d not in (1, 2):
        raise UnsupportedDimension(
            "closed forms cover d in {1, 2}", dimension=d
        )
    if alpha < d:
        raise DivergentNormalization(
            "normalization integral diverges for alpha < d",
            alpha=alpha,
            dimension=d,
        )
    if alpha == d:
        return 1.0
    if d == 1:
        return 2.0 * eta ** (1.0 - alpha) / (alpha - 1.0)
    return 2.0 * np.pi * eta ** (2.0 - alpha) * (
        1.0 / (alpha - 2.0) - 1.0 / (alpha - 1.0)
    )


def eta_monokineticity(
    mu: EmpiricalMeasure, d: int, alpha: float, eta: float
) -> float:
    """Deviation from a single velocity per site, weighted by the
    regularized kernel against the spatial marginal:

        sum_{a,b} w_a w_b |v_a - u(x_a)|^(alpha+2) / (|x_a - x_b| + eta)^alpha

    with u the conditional mean velocity at exact position groups.  Zero
    exactly on monokinetic data.  Dominated by 2^(alpha+1) dalpha(mu, eta):
    splitting v - u(x) at the partner site and applying the convexity bound
    (s + t)^p <= 2^(p-1) (s^p + t^p) twice.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x, v, w = _split(mu, d)
    _, inverse = np.unique(x, axis=0, return_inverse=True)
    labels = inverse.ravel()
    k = int(labels.max()) + 1 if labels.size else 0
    gmass = np.zeros(k)
    np.add.at(gmass, labels, w)
    # normalize weights inside each group before averaging so a
    # single-atom group recovers its velocity exactly (w / w == 1);
    # zero-mass groups carry zero-weight atoms only, any mean works there
    wn = w / np.maximum(gmass, 1e-300)[labels]
    means = np.zeros((k, d))
    np.add.at(means, labels, wn[:, None] * v)
    u = means[labels]
    dev = np.sqrt(np.einsum("ij,ij->i", v - u, v - u))
    dx = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
    kern = (r + eta) ** (-alpha)
    return float((w * dev ** (alpha + 2.0)) @ kern @ w)


def min_distance(mu: EmpiricalMeasure, d: int) -> float:
    x, _, _ = _split(mu, d)
    if x.shape[0] < 2:
        return np.inf
    dx = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
    return float(r[~np.eye(x.shape[0], dtype=bool)].min())


def cumulative_trapezoid(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    inc = 0.5 * (y[1:] + y[:-1]) * np.diff(t)
    return np.concatenate([[0.0], np.cumsum(inc)])


def energy_series(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times, kinetic energy, and enstrophy along the snapshots."""
    d = traj.params.d
    alpha = traj.params.alpha
    ts, es, ds = [], [], []
    for st in traj.snapshots:
        mu = from_particles(st)
        ts.append(st.t)
        es.append(kinetic_energy(mu, d))
        ds.append(enstrophy(mu, d, alpha))
    return np.array(ts), np.array(es), np.array(ds)


def energy_balance_residual(traj: Trajectory) -> float:
    """Largest defect of the balance  integral of enstrophy = energy drop,
    checked at every snapshot with trapezoid quadrature in time."""
    t, e, dd = energy_series(traj)
    integral = cumulative_trapezoid(t, dd)
    return float(np.abs(integral - (e[0] - e)).max())


def mp_margin(
    traj: Trajectory,
    t0: float,
    t: float,
    center: np.ndarray,
    radius: float,
) -> float:
    """Mass-propagation margin for the closed ball B(center, radius):

        rho_t( B(center, radius + (t - t0) M) ) - rho_t0( B(center, radius) )

    Nonnegative whenever speeds stay below M, since every particle moves at
    most (t - t0) M.  Raises SnapshotMissing off the snapshot grid.
    """
    if t < t0:
        raise ValueError("needs t >= t0")
    center = np.asarray(center, float)
    s0 = traj.state_at(t0)
    s1 = traj.state_at(t)
    m = traj.params.M
    n = traj.params.N

    def ball_mass(state, rad):
        dist = np.sqrt(((state.x - center[None, :]) ** 2).sum(axis=1))
        return float((dist <= rad).sum()) / n

    return ball_mass(s1, radius + (t - t0) * m) - ball_mass(s0, radius)


def sf_modulus(
    traj: Trajectory,
    t0: float,
    phi_v,
    probe_times,
) -> np.ndarray:
    """Continuity modulus of the free-transport unwind.

    For each probe time t, the flat distance between the phi-weighted
    unwound spatial measure of mu_t (atoms at x - (t - t0) v, weights
    w phi(v)) and the same construction at t = t0.  Values tend to zero as
    t -> t0 for trajectories; no claim is made beyond the probes reported.
    """
    d = traj.params.d
    ref_state = traj.state_at(t0)
    ref = phi_weighted_marginal(from_particles(ref_state), d, t0, t0, phi_v)
    from .measures import dbl

    out = []
    for t in probe_times:
        mu = from_particles(traj.state_at(t))
        unwound = phi_weighted_marginal(mu, d, t0, t, phi_v)
        out.append(dbl(unwound, ref))
    return np.array(out)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-snapshot diagnostic series for one trajectory.

    eeta columns follow eta_ladder; mkvar columns follow h_ladder (bin
    widths for the velocity-variance index).
    """

    times: np.ndarray
    energy: np.ndarray
    enstrophy: np.ndarray
    dalpha: np.ndarray
    momentum: np.ndarray
    min_distance: np.ndarray
    eta_ladder: tuple
    eeta: np.ndarray
    h_ladder: tuple
    mkvar: np.ndarray
    energy_residual: float

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "energy": self.energy.tolist(),
            "enstrophy": self.enstrophy.tolist(),
            "dalpha": self.dalpha.tolist(),
            "momentum": self.momentum.tolist(),
            "min_distance": [
                (x if np.isfinite(x) else None) for x in self.min_distance
            ],
            "eta_ladder": list(self.eta_ladder),
            "eeta": self.eeta.tolist(),
            "h_ladder": list(self.h_ladder),
            "mkvar": self.mkvar.tolist(),
            "energy_residual": self.energy_residual,
        }


def build_report(
    traj: Trajectory,
    eta_ladder: tuple = (1.0, 0.3, 0.1, 0.03, 0.01),
    bin_fractions: tuple = (1 / 8, 1 / 16, 1 / 32),
) -> DiagnosticsReport:
    """Full diagnostic sweep over the snapshots of a trajectory."""
    from .meanfield import mk_index  # local import to avoid a module cycle

    d = traj.params.d
    alpha = traj.params.alpha
    x0 = traj.snapshots[0].x
    if x0.shape[0] >= 2:
        dx = x0[:, None, :] - x0[None, :, :]
        diam = float(np.sqrt(np.einsum("ijk,ijk->ij", dx, dx)).max())
    else:
        diam = 1.0
    diam = max(diam, 1e-9)
    h_ladder = tuple(diam * f for f in bin_fractions)

    rows = {
        "t": [],
        "E": [],
        "D": [],
        "Da": [],
        "mom": [],
        "md": [],
        "eeta": [],
        "mk": [],
    }
    for st in traj.snapshots:
        mu = from_particles(st)
        rows["t"].append(st.t)
        rows["E"].append(kinetic_energy(mu, d))
        rows["D"].append(enstrophy(mu, d, alpha))
        rows["Da"].append(dalpha(mu, d, alpha, 0.0))
        rows["mom"].append(momentum(mu, d))
        rows["md"].append(min_distance(mu, d))
        rows["eeta"].append(
            [eta_monokineticity(mu, d, alpha, e) for e in eta_ladder]
        )
        rows["mk"].append([mk_index(mu, d, h) for h in h_ladder])

    return DiagnosticsReport(
        times=np.array(rows["t"]),
        energy=np.array(rows["E"]),
        enstrophy=np.array(rows["D"]),
        dalpha=np.array(rows["Da"]),
        momentum=np.array(rows["mom"]),
        min_distance=np.array(rows["md"]),
        eta_ladder=tuple(eta_ladder),
        eeta=np.array(rows["eeta"]),
        h_ladder=h_ladder,
        mkvar=np.array(rows["mk"]),
        energy_residual=energy_balance_residual(traj),
    )
