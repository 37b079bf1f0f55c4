"""Singular-kernel alignment dynamics for N interacting particles.

The system integrated here is first order in position and velocity:

    dx_i/dt = v_i
    dv_i/dt = (1/N) sum_{j != i} |x_i - x_j|^(-alpha) (v_j - v_i)

with communication exponent alpha >= 1, the regime in which trajectories
starting from pairwise-distinct positions stay collision free.  The kernel
is evaluated without regularization by default; close approaches are
handled by the step-size policy, not by smoothing the force law.

Integration uses the Dormand-Prince embedded 5(4) pair with PI step-size
control, plus a geometric cap that keeps each step well below the time a
pair would need to close its current separation at the current relative
speed.  Force sums are accumulated with compensated (Kahan) summation over
fixed-order blocks, so results do not depend on BLAS threading and momentum
cancellation survives long runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CollisionalState, SnapshotMissing, StepCollapse

# Below this separation the kernel is considered non-evaluable: powers of
# the inverse distance would overflow well before reaching it, and no
# physically meaningful trajectory of the alpha >= 1 system gets there.
COLLISION_FLOOR = 1e-100

# Step-size floor, relative to the horizon.
STEP_FLOOR_FRACTION = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Static description of one particle model.

    d      spatial dimension
    alpha  communication exponent, alpha >= 1
    N      particle count
    T      time horizon
    M      bound on initial support and speeds:  |x_i(0)| <= M, |v_i(0)| <= M
    """

    d: int
    alpha: float
    N: int
    T: float
    M: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if not self.alpha >= 1.0:
            raise ValueError("alpha must be >= 1 (collision-avoidance regime)")
        if self.N < 1:
            raise ValueError("need at least one particle")
        if not self.T > 0.0:
            raise ValueError("horizon must be positive")
        if not self.M > 0.0:
            raise ValueError("support bound must be positive")

    @property
    def monokinetic_regime(self) -> bool:
        """alpha >= d: velocity averaging concentrates mass on graphs."""
        return self.alpha >= self.d

    @property
    def meanfield_regime(self) -> bool:
        """alpha <= 2: exponent range used by the refinement studies."""
        return self.alpha <= 2.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParticleState:
    """Positions and velocities of all particles at one time.

    Arrays are read-only; states can be shared freely between threads.
    """

    t: float
    x: np.ndarray  # (N, d)
    v: np.ndarray  # (N, d)

    def __post_init__(self):
        x = _frozen(self.x)
        v = _frozen(self.v)
        if x.ndim != 2 or x.shape != v.shape:
            raise ValueError("x and v must both have shape (N, d)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def n_particles(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def max_speed(self) -> float:
        return float(np.sqrt((self.v**2).sum(axis=1).max()))


def compensated_axis_sum(a: np.ndarray, axis: int = 0, block: int = 32) -> np.ndarray:
    """Deterministic compensated sum along one axis.

    Partial sums over fixed-order blocks (numpy pairwise reduction inside a
    block) are combined with Kahan compensation, giving near-exact results
    at a fraction of the cost of element-wise compensation.
    """
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, 0)
    n = a.shape[0]
    s = np.zeros(a.shape[1:], dtype=np.float64)
    c = np.zeros_like(s)
    for start in range(0, n, block):
        y = a[start : start + block].sum(axis=0) - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def pair_distances(x: np.ndarray) -> np.ndarray:
    """Full matrix of pairwise Euclidean distances, zeros on the diagonal."""
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def min_pair_distance(x: np.ndarray) -> tuple[float, tuple[int, int]]:
    """Smallest pairwise distance and the indices achieving it."""
    n = x.shape[0]
    if n < 2:
        return np.inf, (-1, -1)
    dist = pair_distances(x)
    iu = np.triu_indices(n, k=1)
    flat = dist[iu]
    k = int(np.argmin(flat))
    return float(flat[k]), (int(iu[0][k]), int(iu[1][k]))


def max_relative_speed(v: np.ndarray) -> float:
    n = v.shape[0]
    if n < 2:
        return 0.0
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).max()))


def alignment_rhs(
    x: np.ndarray,
    v: np.ndarray,
    alpha: float,
    kernel_floor: float = 0.0,
) -> np.ndarray:
    """Velocity derivatives of the alignment system.

    Raises CollisionalState when a pair sits at (numerically) zero
    separation.  The optional kernel_floor clips distances from below
    before the power law is applied; it is off by default and only meant
    for regularization experiments.

    The accumulated pair forces are antisymmetric, so the velocity
    derivatives sum to zero up to the accuracy of compensated summation.
    """
    n, d = x.shape
    if n == 1:
        return np.zeros((1, d))
    dist = pair_distances(x)
    offdiag = ~np.eye(n, dtype=bool)
    dmin = float(dist[offdiag].min())
    if kernel_floor <= 0.0 and dmin <= COLLISION_FLOOR:
        i, j = min_pair_distance(x)[1]
        raise CollisionalState(
            "pair separation at or below the evaluable floor",
            pair=[i, j],
            distance=dmin,
        )
    deff = np.maximum(dist, kernel_floor) if kernel_floor > 0.0 else dist
    with np.errstate(divide="ignore"):
        w = np.where(offdiag, deff, 1.0) ** (-alpha)
    w[~offdiag] = 0.0
    contrib = w[:, :, None] * (v[None, :, :] - v[:, None, :])
    return compensated_axis_sum(contrib, axis=1) / n


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# Difference between the 5th and embedded 4th order weights.
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one integration plus its per-step log.

    Snapshots start at t=0 and end at t=T.  The log holds, per accepted
    step: end time, step size, local error estimate (normalized), and the
    minimum pair distance at the step's end state.
    """

    params: ModelParams
    snapshots: tuple
    step_t: np.ndarray
    step_h: np.ndarray
    step_err: np.ndarray
    step_min_dist: np.ndarray
    tol: float | None = None
    fixed_step: float | None = None
    kernel_floor: float = 0.0

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    def state_at(self, t: float) -> ParticleState:
        ts = self.times()
        scale = max(1.0, abs(float(t)))
        k = int(np.argmin(np.abs(ts - t)))
        if abs(ts[k] - t) > 1e-9 * scale:
            raise SnapshotMissing(
                "time not on the stored snapshot grid", requested=float(t)
            )
        return self.snapshots[k]


def _step_cap(
    x: np.ndarray, v: np.ndarray, safety: float, kernel_floor: float = 0.0
) -> tuple[float, float]:
    """Geometric step bound and current minimum pair distance.

    The bound is ``safety`` times the smallest per-pair closing time
    r_ij / |v_i - v_j|, so a pair moving apart (or in lockstep) imposes no
    constraint no matter how close it sits.  Pairing the global minimum
    distance with the global maximum relative speed instead would throttle
    large well-separated clouds to absurdly small steps.
    """
    n = x.shape[0]
    if n < 2:
        return np.inf, np.inf
    dist = pair_distances(x)
    iu = np.triu_indices(n, k=1)
    r = dist[iu]
    dmin = float(r.min())
    dv = v[:, None, :] - v[None, :, :]
    w = np.sqrt(np.einsum("ijk,ijk->ij", dv, dv))[iu]
    closing = w > 0.0
    if not closing.any():
        return np.inf, dmin
    tau = float((np.maximum(r[closing], kernel_floor) / w[closing]).min())
    return safety * tau, dmin


def integrate(
    state0: ParticleState,
    params: ModelParams,
    tol: float = 1e-8,
    snapshot_times: Sequence[float] | None = None,
    fixed_step: float | None = None,
    geometry_safety: float = 0.2,
    kernel_floor: float = 0.0,
    max_steps: int = 50_000_000,
) -> Trajectory:
    """Integrate the alignment system over [0, T].

    Snapshot times are clamped onto exactly (the integrator lands on them),
    and t=0, t=T are always included.  The adaptive controller keeps the
    normalized local error estimate at or below 1 (absolute and relative
    tolerance both equal to ``tol``); independently, every step is capped
    by  geometry_safety * min over pairs of (separation / closing speed),
    so no pair can close more than a fixed fraction of its gap per step.

    With ``fixed_step`` set, adaptivity and the geometric cap are bypassed;
    this mode exists for convergence studies on smooth problems.

    Raises StepCollapse when the required step falls below 1e-12 * T, and
    propagates CollisionalState from the force evaluation.
    """
    n, d = state0.x.shape
    if (n, d) != (params.N, params.d):
        raise ValueError("state shape does not match params")
    T = float(params.T)
    if snapshot_times is None:
        snaps = np.array([0.0, T])
    else:
        snaps = np.unique(np.concatenate([[0.0, T], np.asarray(snapshot_times, float)]))
        if snaps[0] < -1e-15 or snaps[-1] > T * (1 + 1e-12):
            raise ValueError("snapshot times must lie in [0, T]")
        snaps[0], snaps[-1] = 0.0, T

    nd = n * d

    def unpack(y):
        return y[:nd].reshape(n, d), y[nd:].reshape(n, d)

    def f(y):
        x, v = unpack(y)
        acc = alignment_rhs(x, v, params.alpha, kernel_floor=kernel_floor)
        return np.concatenate([v.ravel(), acc.ravel()])

    t = 0.0
    y = np.concatenate([state0.x.ravel(), state0.v.ravel()])
    snapshots = [ParticleState(0.0, *unpack(y))]
    log_t, log_h, log_err, log_dmin = [], [], [], []

    k = [np.empty_like(y) for _ in range(7)]
    k[0] = f(y)

    h_floor = STEP_FLOOR_FRACTION * T
    if fixed_step is not None:
        h_ctrl = float(fixed_step)
    else:
        # Conservative opening step; the controller recovers quickly.
        scale = tol + tol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((k[0] / scale) ** 2))
        h_ctrl = 0.01 * d0 / d1 if d1 > 0 else 1e-3 * T
        h_ctrl = min(max(h_ctrl, 1e-8 * T), 1e-2 * T)

    facold = 1e-4
    last_rejected = False
    next_snap = 1  # index into snaps; snaps[0] already recorded
    steps = 0
    x_now, v_now = unpack(y)
    cap, _ = _step_cap(x_now, v_now, geometry_safety, kernel_floor)

    while t < T:
        if steps >= max_steps:
            raise RuntimeError("step budget exceeded")
        hmax_here = snaps[next_snap] - t
        if fixed_step is not None:
            h_free = h_ctrl
        else:
            h_free = min(h_ctrl, cap)
            if h_free < h_floor:
                dmin, pair = min_pair_distance(x_now)
                raise StepCollapse(
                    "step size fell below the floor",
                    time=t,
                    step=h_free,
                    pair=list(pair),
                    distance=dmin,
                )
        clamped = h_free >= hmax_here * (1 - 1e-14)
        h = hmax_here if clamped else h_free

        for s in range(1, 6):
            ys = y + h * sum(_A[s][m] * k[m] for m in range(s))
            k[s] = f(ys)
        y5 = y + h * sum(_B5[m] * k[m] for m in range(6))
        # _B5[6] = 0; the last stage is evaluated at (t+h, y5) and is
        # reused as the first stage of the next step.
        k[6] = f(y5)
        err_vec = h * sum(_E[m] * k[m] for m in range(7))

        if fixed_step is not None:
            err = 0.0
            accept = True
        else:
            sc = tol + tol * np.maximum(np.abs(y), np.abs(y5))
            err = float(np.sqrt(np.mean((err_vec / sc) ** 2)))
            accept = err <= 1.0

        if accept:
            t_new = snaps[next_snap] if clamped else t + h
            y = y5
            k[0] = k[6]
            x_now, v_now = unpack(y)
            cap, dmin_new = _step_cap(x_now, v_now, geometry_safety, kernel_floor)
            log_t.append(t_new)
            log_h.append(h)
            log_err.append(err)
            log_dmin.append(dmin_new)
            t = t_new
            if clamped:
                snapshots.append(ParticleState(float(t), x_now, v_now))
                next_snap += 1
                if next_snap >= len(snaps):
                    break
            if fixed_step is None:
                fac11 = err**0.17
                fac = fac11 / facold**0.04
                fac = max(0.1, min(5.0, fac / 0.9))
                h_new = h / fac
                if last_rejected:
                    h_new = min(h_new, h)
                h_ctrl = h_new
                facold = max(err, 1e-4)
                last_rejected = False
        else:
            fac11 = err**0.17
            h_ctrl = h / min(5.0, fac11 / 0.9)
            last_rejected = True
            if h_ctrl < h_floor:
                x_now, v_now = unpack(y)
                dmin, pair = min_pair_distance(x_now)
                raise StepCollapse(
                    "step size fell below the floor",
                    time=t,
                    step=h_ctrl,
                    pair=list(pair),
                    distance=dmin,
                )
        steps += 1

    return Trajectory(
        params=params,
        snapshots=tuple(snapshots),
        step_t=np.array(log_t),
        step_h=np.array(log_h),
        step_err=np.array(log_err),
        step_min_dist=np.array(log_dmin),
        tol=None if fixed_step is not None else tol,
        fixed_step=fixed_step,
        kernel_floor=kernel_floor,
    )
