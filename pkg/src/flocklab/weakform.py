"""Weak-formulation residuals and compactly supported test functions.

Test functions are products  phi(t, x, v) = w(t) G(x) H(v)  built from C2
pieces with certified analytic bounds:

  window   w(t) = (1 - t/t_end)^3 on [0, t_end], zero after; w(0) = 1 and
           w, w', w'' all vanish at t_end, so boundary terms at the final
           time drop from every identity.  |w| <= 1, |w'| <= 3/t_end.
  bump     b(y) = (1 - |y - c|^2 / r^2)^3 inside the ball B(c, r), zero
           outside.  |b| <= 1, |grad b| <= 96/(25 sqrt 5)/r, and the
           Hessian norm is at most 6/r^2 (extremes at |y - c|^2/r^2 = 0
           and 1/5).
  plateau  radial quintic smoothstep: 1 on B(0, r_in), 0 outside
           B(0, r_out), 6u^5 - 15u^4 + 10u^3 in between.  |grad| <=
           (15/8)/(r_out - r_in); Hessian norm <= (10/sqrt 3)/(r_out -
           r_in)^2 for r_in >= r_out - r_in.

Residuals integrate the transported test function against snapshot data
with trapezoid quadrature in time.  For an exact solution each residual
vanishes up to quadrature and binning error; the pair interaction term
always enters with coefficient -1/2 after symmetrizing the force over
ordered pairs.

Field-based residuals are duck typed: they accept any grid object exposing
h, d, and cells with mass, velocity, barycenter attributes.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import Trajectory
from .errors import GridMismatch
from .rng import CounterRNG

_BUMP_LIP = 96.0 / (25.0 * math.sqrt(5.0))  # max of 6 s (1-s^2)^2
_PLATEAU_LIP = 15.0 / 8.0
_PLATEAU_HESS = 10.0 / math.sqrt(3.0)


def _bump(z: np.ndarray, r: float):
    """Cube bump and gradient at offsets z, shape (n, d) -> (n,), (n, d)."""
    s = np.einsum("ij,ij->i", z, z) / r**2
    core = np.maximum(1.0 - s, 0.0)
    val = core**3
    grad = (-6.0 / r**2) * (core**2)[:, None] * z
    return val, grad


def _plateau(y: np.ndarray, r_in: float, r_out: float):
    """Radial quintic plateau and gradient, shape (n, d) -> (n,), (n, d)."""
    s = np.sqrt(np.einsum("ij,ij->i", y, y))
    u = np.clip((r_out - s) / (r_out - r_in), 0.0, 1.0)
    val = u**3 * (10.0 - 15.0 * u + 6.0 * u**2)
    qp = 30.0 * u**2 * (1.0 - u) ** 2
    inside = (s > r_in) & (s < r_out) & (s > 0)
    coef = np.where(inside, -qp / (r_out - r_in) / np.where(s > 0, s, 1.0), 0.0)
    return val, coef[:, None] * y


def _window(t: float, t_end: float):
    if t >= t_end:
        return 0.0, 0.0
    u = 1.0 - t / t_end
    return u**3, -3.0 * u**2 / t_end


class TestFunction:
    """Scalar phase-space test function w(t) G(x) H(v).

    G is a cube bump at x_center with radius x_radius.  H is selected by
    v_kind: "const" (a velocity plateau, identically 1 wherever |v| stays
    below v_plateau_in), "linear" (v_component times the plateau),
    "energy" (|v|^2 times the plateau), or "bump" (cube bump at v_center).
    The whole product is rescaled so that
    max(sup |phi|, Lip_x, Lip_v) = 1; certified bounds are stored after
    scaling.
    """

    __test__ = False  # keep pytest collection away from the name

    def __init__(
        self,
        d: int,
        t_end: float,
        x_center,
        x_radius: float,
        v_kind: str,
        v_plateau: tuple = (1.0, 2.0),
        v_component: int = 0,
        v_center=None,
        v_radius: float = 1.0,
    ):
        if v_kind not in ("const", "linear", "energy", "bump"):
            raise ValueError(f"unknown v_kind {v_kind!r}")
        self.d = d
        self.t_end = float(t_end)
        self.x_center = np.asarray(x_center, float)
        self.x_radius = float(x_radius)
        self.v_kind = v_kind
        self.v_plateau = (float(v_plateau[0]), float(v_plateau[1]))
        self.v_component = int(v_component)
        self.v_center = (
            np.zeros(d) if v_center is None else np.asarray(v_center, float)
        )
        self.v_radius = float(v_radius)

        r_in, r_out = self.v_plateau
        width = r_out - r_in
        if v_kind == "const":
            sup_h, lip_h = 1.0, _PLATEAU_LIP / width
        elif v_kind == "linear":
            sup_h = r_out
            lip_h = 1.0 + r_out * _PLATEAU_LIP / width
        elif v_kind == "energy":
            sup_h = r_out**2
            lip_h = 2.0 * r_out + r_out**2 * _PLATEAU_LIP / width
        else:
            sup_h, lip_h = 1.0, _BUMP_LIP / self.v_radius

        sup = sup_h
        lip_x = (_BUMP_LIP / self.x_radius) * sup_h
        lip_v = lip_h
        self.scale = 1.0 / max(sup, lip_x, lip_v)
        self.sup_value = sup * self.scale
        self.lip_x = lip_x * self.scale
        self.lip_v = lip_v * self.scale
        self.sup_dt = (3.0 / self.t_end) * sup_h * self.scale

    def _h(self, v: np.ndarray):
        r_in, r_out = self.v_plateau
        if self.v_kind == "bump":
            return _bump(v - self.v_center[None, :], self.v_radius)
        p, gp = _plateau(v, r_in, r_out)
        if self.v_kind == "const":
            return p, gp
        if self.v_kind == "linear":
            vk = v[:, self.v_component]
            val = vk * p
            grad = vk[:, None] * gp
            grad[:, self.v_component] += p
            return val, grad
        s2 = np.einsum("ij,ij->i", v, v)
        return s2 * p, s2[:, None] * gp + 2.0 * p[:, None] * v

    def _parts(self, t: float, x: np.ndarray, v: np.ndarray):
        w, wp = _window(t, self.t_end)
        g, gg = _bump(x - self.x_center[None, :], self.x_radius)
        h, gh = self._h(v)
        return w, wp, g, gg, h, gh

    def value(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        w, _, g, _, h, _ = self._parts(t, x, v)
        return self.scale * w * g * h

    def dt(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        _, wp, g, _, h, _ = self._parts(t, x, v)
        return self.scale * wp * g * h

    def grad_x(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        w, _, _, gg, h, _ = self._parts(t, x, v)
        return self.scale * w * h[:, None] * gg

    def grad_v(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        w, _, g, _, _, gh = self._parts(t, x, v)
        return self.scale * w * g[:, None] * gh


class MacroTestFunction:
    """Scalar space-time test function w(t) G(x) for the macro equations."""

    def __init__(self, d: int, t_end: float, x_center, x_radius: float):
        self.d = d
        self.t_end = float(t_end)
        self.x_center = np.asarray(x_center, float)
        self.x_radius = float(x_radius)
        lip = _BUMP_LIP / self.x_radius
        self.scale = 1.0 / max(1.0, lip)
        self.sup_value = self.scale
        self.lip_x = lip * self.scale
        self.sup_dt = (3.0 / self.t_end) * self.scale

    def value(self, t: float, x: np.ndarray) -> np.ndarray:
        w, _ = _window(t, self.t_end)
        g, _ = _bump(x - self.x_center[None, :], self.x_radius)
        return self.scale * w * g

    def dt(self, t: float, x: np.ndarray) -> np.ndarray:
        _, wp = _window(t, self.t_end)
        g, _ = _bump(x - self.x_center[None, :], self.x_radius)
        return self.scale * wp * g

    def grad_x(self, t: float, x: np.ndarray) -> np.ndarray:
        w, _ = _window(t, self.t_end)
        _, gg = _bump(x - self.x_center[None, :], self.x_radius)
        return self.scale * w * gg


class VectorTestFunction:
    """One-component vector test function phi = e_k w(t) G(x)."""

    def __init__(self, base: MacroTestFunction, component: int):
        if not 0 <= component < base.d:
            raise ValueError("component out of range")
        self.base = base
        self.component = component
        self.d = base.d
        self.sup_value = base.sup_value
        self.lip_x = base.lip_x
        self.sup_dt = base.sup_dt

    def value(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], self.d))
        out[:, self.component] = self.base.value(t, x)
        return out

    def dt(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], self.d))
        out[:, self.component] = self.base.dt(t, x)
        return out

    def conv(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """(u . grad) phi, shape (n, d)."""
        out = np.zeros((x.shape[0], self.d))
        g = self.base.grad_x(t, x)
        out[:, self.component] = np.einsum("ij,ij->i", u, g)
        return out


# ---- batteries ----


def kinetic_battery(d: int, T: float, M: float, size: int = 24, seed: int = 0):
    """Phase-space test functions with supports inside
    (T + 1) B(0, 2M) x B(0, 2M), kinds cycled, geometry drawn from the
    seeded counter stream."""
    rng = CounterRNG(seed)
    kinds = ["const"] + [("linear", k) for k in range(d)] + ["energy", "bump"]
    out = []
    for i in range(size):
        kind = kinds[i % len(kinds)]
        sub = rng.spawn(i)
        center = sub.uniform(d, -M, M)
        r_cap = min((1.0 + T) * M, 2.0 * (1.0 + T) * M - np.linalg.norm(center))
        radius = float(sub.uniform(1, 0.4 * M, r_cap)[0])
        t_end = float(sub.uniform(1, 0.6 * T, T)[0])
        common = dict(
            d=d,
            t_end=t_end,
            x_center=center,
            x_radius=radius,
            v_plateau=(M, 2.0 * M),
        )
        if kind == "const":
            out.append(TestFunction(v_kind="const", **common))
        elif kind == "energy":
            out.append(TestFunction(v_kind="energy", **common))
        elif kind == "bump":
            vc = sub.uniform(d, -M / 2, M / 2)
            vr = float(sub.uniform(1, 0.5 * M, M)[0])
            out.append(
                TestFunction(v_kind="bump", v_center=vc, v_radius=vr, **common)
            )
        else:
            out.append(TestFunction(v_kind="linear", v_component=kind[1], **common))
    return out


def macro_battery(d: int, T: float, M: float, size: int = 24, seed: int = 0):
    rng = CounterRNG(seed)
    out = []
    for i in range(size):
        sub = rng.spawn(i)
        center = sub.uniform(d, -M, M)
        r_cap = min((1.0 + T) * M, 2.0 * (1.0 + T) * M - np.linalg.norm(center))
        radius = float(sub.uniform(1, 0.4 * M, r_cap)[0])
        t_end = float(sub.uniform(1, 0.6 * T, T)[0])
        out.append(MacroTestFunction(d, t_end, center, radius))
    return out


def vector_battery(d: int, T: float, M: float, size: int = 24, seed: int = 0):
    scalars = macro_battery(d, T, M, size=size, seed=seed)
    return [
        VectorTestFunction(base, component=i % d)
        for i, base in enumerate(scalars)
    ]


# ---- residuals on trajectories ----


def _pair_kernel(x: np.ndarray, alpha: float):
    dx = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
    mask = ~np.eye(x.shape[0], dtype=bool) & (r > 0.0)
    with np.errstate(divide="ignore"):
        psi = np.where(mask, np.where(mask, r, 1.0) ** (-alpha), 0.0)
    return psi


def kinetic_weak_residual(traj: Trajectory, phi: TestFunction) -> float:
    """Defect of the phase-space weak identity along one trajectory:

        | -phi(0) term - int (d_t phi + v . grad_x phi) d mu dt
          + 1/2 int sum_{pairs} (grad_v phi - grad_v phi') . (v - v') psi |

    evaluated on the snapshot grid with trapezoid quadrature.  Zero for an
    exact solution up to time-quadrature error.
    """
    alpha = traj.params.alpha
    n = traj.params.N
    w = 1.0 / n
    times = traj.times()
    a_vals = np.empty(len(times))
    b_vals = np.empty(len(times))
    for k, st in enumerate(traj.snapshots):
        a_vals[k] = (phi.dt(st.t, st.x, st.v)
                     + np.einsum("ij,ij->i", st.v, phi.grad_x(st.t, st.x, st.v))
                     ).sum() * w
        psi = _pair_kernel(st.x, alpha)
        gv = phi.grad_v(st.t, st.x, st.v)
        dgv = gv[:, None, :] - gv[None, :, :]
        dv = st.v[:, None, :] - st.v[None, :, :]
        b_vals[k] = w * w * (np.einsum("ijk,ijk->ij", dgv, dv) * psi).sum()
    phi0 = phi.value(times[0], traj.snapshots[0].x, traj.snapshots[0].v).sum() * w
    a_int = np.trapezoid(a_vals, times)
    b_int = np.trapezoid(b_vals, times)
    return float(abs(-phi0 - a_int + 0.5 * b_int))


# ---- residuals on binned fields ----


def _check_grids(grids):
    if not grids:
        raise ValueError("need at least one field grid")
    h0, d0 = grids[0].h, grids[0].d
    for g in grids[1:]:
        if g.h != h0 or g.d != d0:
            raise GridMismatch(
                "field sequence mixes grids", h_left=h0, h_right=g.h
            )
    return h0, d0


def _cells_arrays(grid):
    if not grid.cells:
        d = grid.d
        return np.zeros((0, d)), np.zeros((0, d)), np.zeros(0)
    b = np.stack([c.barycenter for c in grid.cells])
    u = np.stack([c.velocity for c in grid.cells])
    m = np.array([c.mass for c in grid.cells])
    return b, u, m


def continuity_residual(times, grids, phi: MacroTestFunction) -> float:
    """Defect of the weak continuity identity on binned fields:

        | phi(0) mass term + int sum_c m_c (d_t phi + u_c . grad phi)(b_c) dt |

    with phi evaluated at cell barycenters.  Converges to zero as the
    trajectory, grid, and time step refine together.
    """
    _check_grids(grids)
    times = np.asarray(times, float)
    vals = np.empty(len(times))
    for k, (t, g) in enumerate(zip(times, grids)):
        b, u, m = _cells_arrays(g)
        if m.size == 0:
            vals[k] = 0.0
            continue
        vals[k] = float(
            (m * (phi.dt(t, b) + np.einsum("ij,ij->i", u, phi.grad_x(t, b)))).sum()
        )
    b0, _, m0 = _cells_arrays(grids[0])
    phi0 = float((m0 * phi.value(times[0], b0)).sum()) if m0.size else 0.0
    return float(abs(phi0 + np.trapezoid(vals, times)))


def momentum_residual(
    times,
    grids,
    phi: VectorTestFunction,
    alpha: float,
    initial_atoms=None,
) -> float:
    """Defect of the weak momentum identity on binned fields:

        | phi(0) momentum term + int transport dt - 1/2 int singular dt |

    transport(t) = sum_c m_c u_c . (d_t phi + (u_c . grad) phi)(b_c)
    singular(t)  = sum_{c != c'} m_c m_c' psi(b_c, b_c')
                   (phi(b_c) - phi(b_c')) . (u_c - u_c')

    If initial_atoms = (x0, v0, w0) is given the t = 0 moment uses the
    unbinned atoms; otherwise the first grid supplies it.
    """
    _check_grids(grids)
    times = np.asarray(times, float)
    tvals = np.empty(len(times))
    svals = np.empty(len(times))
    for k, (t, g) in enumerate(zip(times, grids)):
        b, u, m = _cells_arrays(g)
        if m.size == 0:
            tvals[k] = svals[k] = 0.0
            continue
        drive = phi.dt(t, b) + phi.conv(t, b, u)
        tvals[k] = float((m * np.einsum("ij,ij->i", u, drive)).sum())
        psi = _pair_kernel(b, alpha)
        pv = phi.value(t, b)
        dphi = pv[:, None, :] - pv[None, :, :]
        du = u[:, None, :] - u[None, :, :]
        inner = np.einsum("ijk,ijk->ij", dphi, du)
        svals[k] = float(((m[:, None] * m[None, :]) * psi * inner).sum())
    if initial_atoms is not None:
        x0, v0, w0 = initial_atoms
        x0 = np.asarray(x0, float)
        v0 = np.asarray(v0, float)
        w0 = np.asarray(w0, float)
        phi0 = float((w0 * np.einsum("ij,ij->i", v0, phi.value(times[0], x0))).sum())
    else:
        b0, u0, m0 = _cells_arrays(grids[0])
        phi0 = (
            float((m0 * np.einsum("ij,ij->i", u0, phi.value(times[0], b0))).sum())
            if m0.size
            else 0.0
        )
    return float(abs(phi0 + np.trapezoid(tvals, times) - 0.5 * np.trapezoid(svals, times)))


def dissipation_margin(times, grids, alpha: float) -> np.ndarray:
    """Energy drop minus integrated pair dissipation, per snapshot, on
    binned fields:

        margin(t) = (E(0) - E(t)) - int_0^t D(s) ds
        E(t) = sum_c m_c |u_c|^2
        D(t) = sum_{c != c'} m_c m_c' |u_c - u_c'|^2 psi(b_c, b_c')

    Binning discards in-cell variance from E, so on refined grids the
    margin approaches the true (nonnegative) defect from above or below
    only in the limit; values are reported raw.
    """
    _check_grids(grids)
    times = np.asarray(times, float)
    e = np.empty(len(times))
    dd = np.empty(len(times))
    for k, g in enumerate(grids):
        b, u, m = _cells_arrays(g)
        if m.size == 0:
            e[k] = dd[k] = 0.0
            continue
        e[k] = float((m * np.einsum("ij,ij->i", u, u)).sum())
        psi = _pair_kernel(b, alpha)
        du = u[:, None, :] - u[None, :, :]
        s2 = np.einsum("ijk,ijk->ij", du, du)
        dd[k] = float(((m[:, None] * m[None, :]) * psi * s2).sum())
    inc = 0.5 * (dd[1:] + dd[:-1]) * np.diff(times)
    integral = np.concatenate([[0.0], np.cumsum(inc)])
    return (e[0] - e) - integral
