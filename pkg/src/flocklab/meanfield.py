"""Initial-data sampling, binned macroscopic fields, and refinement studies.

Sampling is counter-based: atom i of a configuration draws from substream i
of the configuration key, so the first n atoms of an N-atom sample coincide
with the n-atom sample for every n <= N.  Growing a study never reshuffles
the smaller ensembles.

Binned fields live on an axis-aligned grid anchored at the origin with cell
index floor(x / h) per coordinate.  Only nonempty cells are stored.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import FlockLabError, GridMismatch, RejectionOverflow
from .measures import EmpiricalMeasure, dbl, from_particles, marginal_x
from .rng import CounterRNG

_DENSITIES = ("uniform-box", "truncated-gaussian", "two-bump")
_VELOCITIES = ("constant", "linear-shear", "sinusoid", "two-speed-split")
_REDRAW_BUDGET = 1000


@dataclass(frozen=True)
class InitialSpec:
    """Recipe for an initial phase-space sample.

    density_params / velocity_params by kind:
      uniform-box: center (d,), halfwidth > 0
      truncated-gaussian: center (d,), sigma > 0, cut > 0 (radius, redraw outside)
      two-bump: centers (2, d), halfwidth, split in (0, 1)
      constant: value (d,)
      linear-shear: base (d,), gradient (d, d); u(x) = base + gradient @ x
      sinusoid: amplitude (d,), wavenumber (d,); u(x) = amplitude * sin(k . x)
      two-speed-split: values (2, d), fraction in (0, 1)
    Every draw must satisfy |x| <= M and |u0(x)| <= M for the configured
    bound M; violations raise at sampling time, not construction.
    """

    d: int
    density: str
    density_params: dict
    velocity: str
    velocity_params: dict
    seed: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.density not in _DENSITIES:
            raise ValueError(f"unknown density kind {self.density!r}")
        if self.velocity not in _VELOCITIES:
            raise ValueError(f"unknown velocity kind {self.velocity!r}")
        if self.density == "uniform-box":
            if float(self.density_params["halfwidth"]) <= 0:
                raise ValueError("halfwidth must be positive")
        elif self.density == "truncated-gaussian":
            if float(self.density_params["sigma"]) <= 0:
                raise ValueError("sigma must be positive")
            if float(self.density_params["cut"]) <= 0:
                raise ValueError("cut must be positive")
        else:
            if not 0 < float(self.density_params["split"]) < 1:
                raise ValueError("split must lie in (0, 1)")
            if float(self.density_params["halfwidth"]) <= 0:
                raise ValueError("halfwidth must be positive")
        if self.velocity == "two-speed-split":
            if not 0 < float(self.velocity_params["fraction"]) < 1:
                raise ValueError("fraction must lie in (0, 1)")

    def support_diameter(self) -> float:
        """Diameter of the recipe's spatial support (exact, not sampled);
        the customary default bin width is this over 16."""
        p = self.density_params
        if self.density == "uniform-box":
            return 2.0 * float(p["halfwidth"]) * math.sqrt(self.d)
        if self.density == "truncated-gaussian":
            return 2.0 * float(p["cut"])
        centers = np.asarray(p["centers"], float)
        gap = float(np.linalg.norm(centers[0] - centers[1]))
        return gap + 2.0 * float(p["halfwidth"]) * math.sqrt(self.d)


def _draw_position(spec: InitialSpec, rng: CounterRNG) -> np.ndarray:
    d = spec.d
    p = spec.density_params
    if spec.density == "uniform-box":
        c = np.asarray(p["center"], float)
        h = float(p["halfwidth"])
        return c + rng.uniform(d, -h, h)
    if spec.density == "truncated-gaussian":
        c = np.asarray(p["center"], float)
        s = float(p["sigma"])
        cut = float(p["cut"])
        for _ in range(_REDRAW_BUDGET):
            g = s * rng.normal(d)
            if np.linalg.norm(g) <= cut:
                return c + g
        raise RejectionOverflow(
            "truncated gaussian redraw budget exhausted",
            budget=_REDRAW_BUDGET,
        )
    centers = np.asarray(p["centers"], float)
    h = float(p["halfwidth"])
    split = float(p["split"])
    pick = centers[0] if rng.uniform(1)[0] < split else centers[1]
    return pick + rng.uniform(d, -h, h)


def _velocity_at(spec: InitialSpec, x: np.ndarray, rng: CounterRNG) -> np.ndarray:
    p = spec.velocity_params
    if spec.velocity == "constant":
        return np.asarray(p["value"], float).copy()
    if spec.velocity == "linear-shear":
        base = np.asarray(p["base"], float)
        grad = np.asarray(p["gradient"], float)
        return base + grad @ x
    if spec.velocity == "sinusoid":
        amp = np.asarray(p["amplitude"], float)
        k = np.asarray(p["wavenumber"], float)
        return amp * math.sin(float(k @ x))
    values = np.asarray(p["values"], float)
    frac = float(p["fraction"])
    # coin drawn after the position so the spatial stream is unchanged
    return values[0].copy() if rng.uniform(1)[0] < frac else values[1].copy()


def sample_initial(spec: InitialSpec, n: int, bound: float):
    """Draw n phase atoms (positions x, velocities v) from the recipe.

    Atom i uses substream i of the seed; prefixes are stable under growing
    n.  Exact position duplicates are redrawn from later counters of the
    same substream (budget per atom, then RejectionOverflow).  Raises if a
    draw lands outside |x| <= bound or |v| <= bound.
    """
    if n < 1:
        raise ValueError("n must be positive")
    root = CounterRNG(spec.seed)
    xs = np.empty((n, spec.d))
    vs = np.empty((n, spec.d))
    seen = set()
    for i in range(n):
        sub = root.spawn(i)
        for attempt in range(_REDRAW_BUDGET):
            x = _draw_position(spec, sub)
            key = x.tobytes()
            if key not in seen:
                break
        else:
            raise RejectionOverflow(
                "duplicate-position redraw budget exhausted",
                atom=i,
                budget=_REDRAW_BUDGET,
            )
        seen.add(key)
        v = _velocity_at(spec, x, sub)
        if np.linalg.norm(x) > bound or np.linalg.norm(v) > bound:
            raise ValueError(
                "initial recipe escapes the configured bound: "
                f"|x|={np.linalg.norm(x):.3g}, |v|={np.linalg.norm(v):.3g}, "
                f"bound={bound:.3g}"
            )
        xs[i] = x
        vs[i] = v
    return xs, vs


@dataclass(frozen=True)
class LocalField:
    """Macroscopic state of one occupied grid cell.

    center is the geometric cell center; barycenter the mass-weighted mean
    position of the atoms inside (a better quadrature node than the
    center).  cov_trace is the velocity variance around the cell mean,
    trace form: (sum w |v - u|^2) / mass.
    """

    index: tuple
    center: np.ndarray
    barycenter: np.ndarray
    mass: float
    velocity: np.ndarray
    cov_trace: float


@dataclass(frozen=True)
class FieldGrid:
    """All occupied cells of one binning, plus the grid geometry."""

    h: float
    d: int
    cells: tuple

    def total_mass(self) -> float:
        return float(sum(c.mass for c in self.cells))


def local_fields(mu: EmpiricalMeasure, d: int, h: float) -> FieldGrid:
    """Bin a phase measure into cells of width h anchored at the origin."""
    if h <= 0:
        raise ValueError("cell width must be positive")
    if mu.point_dim != 2 * d:
        raise ValueError("phase measure must have point dimension 2d")
    x = mu.points[:, :d]
    v = mu.points[:, d:]
    w = mu.weights
    idx = np.floor(x / h).astype(np.int64)
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    k = uniq.shape[0]
    mass = np.zeros(k)
    np.add.at(mass, inverse, w)
    xsum = np.zeros((k, d))
    np.add.at(xsum, inverse, w[:, None] * x)
    vsum = np.zeros((k, d))
    np.add.at(vsum, inverse, w[:, None] * v)
    cells = []
    for c in range(k):
        m = float(mass[c])
        if m <= 0.0:
            continue
        u = vsum[c] / m
        bary = xsum[c] / m
        sel = inverse == c
        dv = v[sel] - u
        ct = float((w[sel] * np.einsum("ij,ij->i", dv, dv)).sum() / m)
        cells.append(
            LocalField(
                index=tuple(int(j) for j in uniq[c]),
                center=(uniq[c] + 0.5) * h,
                barycenter=bary,
                mass=m,
                velocity=u,
                cov_trace=ct,
            )
        )
    return FieldGrid(h=float(h), d=d, cells=tuple(cells))


def mk_index(mu: EmpiricalMeasure, d: int, h: float) -> float:
    """Binned monokineticity index: mass-weighted velocity variance,
    sum over cells of mass * cov_trace.  Zero iff each cell is
    single-speed; bounded by Lip(u)^2 d h^2 for velocities sampled from an
    L-Lipschitz field (each in-cell deviation is at most L h sqrt(d))."""
    grid = local_fields(mu, d, h)
    return float(sum(c.mass * c.cov_trace for c in grid.cells))


def check_same_grid(a: FieldGrid, b: FieldGrid) -> None:
    if a.h != b.h or a.d != b.d:
        raise GridMismatch(
            "field grids differ",
            h_left=a.h,
            h_right=b.h,
            d_left=a.d,
            d_right=b.d,
        )


# ---- refinement study over particle number ----


@dataclass(frozen=True)
class StudyRow:
    """Per-N outcome of a refinement study.  None fields mean the run for
    this N failed; see error.

    mk and max_cell_mass are (probe, ladder-width) tables over the study's
    h_ladder.  max_cell_mass tracks the heaviest bin: a proxy trend for
    atom concentration in the limit, reported without any verdict.
    """

    n: int
    energy: tuple | None
    mk: tuple | None
    max_cell_mass: tuple | None
    continuity: float | None
    momentum: float | None
    margins: tuple | None
    error: dict | None

    def to_dict(self) -> dict:
        def grid(v):
            return [list(r) for r in v] if v is not None else None

        return {
            "n": self.n,
            "energy": list(self.energy) if self.energy is not None else None,
            "mk": grid(self.mk),
            "max_cell_mass": grid(self.max_cell_mass),
            "continuity": self.continuity,
            "momentum": self.momentum,
            "margins": list(self.margins) if self.margins is not None else None,
            "error": self.error,
        }


@dataclass(frozen=True)
class StudyReport:
    """Refinement study across an increasing ladder of particle numbers.

    dbl_cauchy[k][p] is the flat distance between the spatial marginals of
    runs n_list[k] and n_list[k + 1] at probe p; energy_cauchy likewise
    for kinetic energies.  None entries mark pairs where a run failed.
    """

    n_list: tuple
    probe_times: tuple
    h: float
    h_ladder: tuple
    alpha: float
    horizon: float
    bound: float
    seed: int
    rows: tuple
    dbl_cauchy: tuple
    energy_cauchy: tuple

    def to_dict(self) -> dict:
        return {
            "n_list": list(self.n_list),
            "probe_times": list(self.probe_times),
            "h": self.h,
            "h_ladder": list(self.h_ladder),
            "alpha": self.alpha,
            "horizon": self.horizon,
            "bound": self.bound,
            "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows],
            "dbl_cauchy": [
                list(c) if c is not None else None for c in self.dbl_cauchy
            ],
            "energy_cauchy": [
                list(c) if c is not None else None for c in self.energy_cauchy
            ],
        }


def _study_single_n(
    spec,
    n,
    alpha,
    horizon,
    bound,
    h,
    probes,
    snap_times,
    tol,
    battery_size,
    battery_seed,
    kernel_floor,
):
    # deferred imports: weakform/diagnostics pull measures/dynamics, and a
    # module-level import here would close the cycle
    from .diagnostics import kinetic_energy
    from .dynamics import ModelParams, ParticleState, integrate
    from .weakform import (
        continuity_residual,
        dissipation_margin,
        macro_battery,
        momentum_residual,
        vector_battery,
    )

    d = spec.d
    x0, v0 = sample_initial(spec, n, bound)
    params = ModelParams(d=d, alpha=alpha, N=n, T=horizon, M=bound)
    traj = integrate(
        ParticleState(0.0, x0, v0),
        params,
        tol=tol,
        snapshot_times=snap_times,
        kernel_floor=kernel_floor,
    )

    h_ladder = (2.0 * h, h, h / 2.0)
    marginals = []
    energy = []
    mk = []
    maxcell = []
    for p in probes:
        mu = from_particles(traj.state_at(p))
        marginals.append(marginal_x(mu, d))
        energy.append(kinetic_energy(mu, d))
        mk.append(tuple(mk_index(mu, d, hh) for hh in h_ladder))
        maxcell.append(
            tuple(
                max(c.mass for c in local_fields(mu, d, hh).cells)
                for hh in h_ladder
            )
        )

    times = traj.times()
    grids = [from_particles(s) for s in traj.snapshots]
    grids = [local_fields(g, d, h) for g in grids]
    cont = max(
        continuity_residual(times, grids, phi)
        for phi in macro_battery(d, horizon, bound, battery_size, battery_seed)
    )
    w0 = np.full(n, 1.0 / n)
    mom = max(
        momentum_residual(times, grids, phi, alpha, initial_atoms=(x0, v0, w0))
        for phi in vector_battery(d, horizon, bound, battery_size, battery_seed)
    )
    all_margins = dissipation_margin(times, grids, alpha)
    probe_idx = [int(np.argmin(np.abs(times - p))) for p in probes]
    margins = tuple(float(all_margins[i]) for i in probe_idx)

    row = StudyRow(
        n=n,
        energy=tuple(energy),
        mk=tuple(mk),
        max_cell_mass=tuple(maxcell),
        continuity=float(cont),
        momentum=float(mom),
        margins=margins,
        error=None,
    )
    return row, marginals


def refinement_study(
    spec: InitialSpec,
    n_list,
    alpha: float,
    horizon: float,
    bound: float,
    h: float,
    probe_times,
    tol: float = 1e-7,
    quad_points: int = 33,
    battery_size: int = 24,
    battery_seed: int = 0,
    kernel_floor: float = 0.0,
    threads: int = 1,
    dbl_cap: int = 2000,
) -> StudyReport:
    """Run one initial recipe at every N in n_list and compare.

    Each N integrates the same recipe (prefix-stable sampling, so smaller
    ensembles are literal prefixes of larger ones), then reports kinetic
    energy, the binned monokineticity index and heaviest-cell mass across
    the ladder (2h, h, h/2), battery-maximal continuity and momentum
    residuals on width-h fields, and dissipation margins at the probe
    times.  Consecutive runs are compared in the flat metric on spatial
    marginals.  A failed run (collision, step collapse) is kept as its
    error record; the study continues.

    threads > 1 integrates different N concurrently; results merge keyed
    by N, so the report is identical for any thread count.
    """
    n_list = [int(n) for n in n_list]
    if len(set(n_list)) != len(n_list):
        raise ValueError("n_list entries must be distinct")
    probes = [float(p) for p in probe_times]
    if any(p < 0 or p > horizon for p in probes):
        raise ValueError("probe times must lie in [0, horizon]")
    snap_times = np.union1d(np.linspace(0.0, horizon, quad_points), probes)

    def job(n):
        try:
            return n, _study_single_n(
                spec, n, alpha, horizon, bound, h, probes, snap_times,
                tol, battery_size, battery_seed, kernel_floor,
            )
        except FlockLabError as exc:
            row = StudyRow(
                n=n, energy=None, mk=None, max_cell_mass=None,
                continuity=None, momentum=None, margins=None,
                error=exc.to_dict(),
            )
            return n, (row, None)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            merged = dict(pool.map(job, n_list))
    else:
        merged = dict(job(n) for n in n_list)

    rows = tuple(merged[n][0] for n in n_list)
    marg = {n: merged[n][1] for n in n_list}

    dbl_cauchy = []
    energy_cauchy = []
    for a, b in zip(n_list[:-1], n_list[1:]):
        if marg[a] is None or marg[b] is None:
            dbl_cauchy.append(None)
            energy_cauchy.append(None)
            continue
        dbl_cauchy.append(
            tuple(
                float(dbl(ma, mb, cap=dbl_cap))
                for ma, mb in zip(marg[a], marg[b])
            )
        )
        ea = merged[a][0].energy
        eb = merged[b][0].energy
        energy_cauchy.append(tuple(abs(x - y) for x, y in zip(ea, eb)))

    return StudyReport(
        n_list=tuple(n_list),
        probe_times=tuple(probes),
        h=float(h),
        h_ladder=(2.0 * float(h), float(h), float(h) / 2.0),
        alpha=float(alpha),
        horizon=float(horizon),
        bound=float(bound),
        seed=spec.seed,
        rows=rows,
        dbl_cauchy=tuple(dbl_cauchy),
        energy_cauchy=tuple(energy_cauchy),
    )


# ---- two-particle alignment study ----


@dataclass(frozen=True)
class PairRow:
    eps: float
    t_half: float | None
    kernel_integral: float | None
    d_integral: float | None
    min_distance: float | None
    error: dict | None

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "t_half": self.t_half,
            "kernel_integral": self.kernel_integral,
            "d_integral": self.d_integral,
            "min_distance": self.min_distance,
            "error": self.error,
        }


@dataclass(frozen=True)
class PairStudy:
    alpha: float
    horizon: float
    rows: tuple

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "horizon": self.horizon,
            "rows": [r.to_dict() for r in self.rows],
        }


def pair_alignment_study(
    eps_list,
    v1,
    v2,
    alpha: float,
    horizon: float = 8.0,
    grid_points: int = 4096,
    tol: float = 1e-10,
) -> PairStudy:
    """Two particles started a distance eps apart, for each eps.

    For the pair the relative velocity obeys w' = -psi(r) w, so the
    half-life t_half of |w| satisfies  int_0^t_half psi(r(s)) ds = ln 2.
    Reported per eps: t_half (bracketing plus log-linear interpolation on
    a dense snapshot grid; None if not reached by the horizon), the kernel
    integral up to t_half (a consistency check against ln 2), the
    trapezoid integral of the dissipation rate over the whole run, and the
    smallest pair distance observed at snapshots.
    """
    from .diagnostics import enstrophy
    from .dynamics import ModelParams, ParticleState, integrate

    v1 = np.asarray(v1, float)
    v2 = np.asarray(v2, float)
    d = v1.shape[0]
    w0 = float(np.linalg.norm(v1 - v2))
    bound = max(1.0, float(np.linalg.norm(v1)), float(np.linalg.norm(v2)))
    times = np.linspace(0.0, horizon, grid_points)

    rows = []
    for eps in eps_list:
        eps = float(eps)
        if w0 == 0.0:
            rows.append(PairRow(eps, 0.0, 0.0, 0.0, eps, None))
            continue
        x = np.zeros((2, d))
        x[0, 0] = -eps / 2
        x[1, 0] = eps / 2
        params = ModelParams(d=d, alpha=alpha, N=2, T=horizon, M=bound)
        try:
            traj = integrate(
                ParticleState(0.0, x, np.stack([v1, v2])),
                params,
                tol=tol,
                snapshot_times=times,
            )
        except FlockLabError as exc:
            rows.append(PairRow(eps, None, None, None, None, exc.to_dict()))
            continue

        rel = np.array(
            [float(np.linalg.norm(s.v[0] - s.v[1])) for s in traj.snapshots]
        )
        dist = np.array(
            [float(np.linalg.norm(s.x[0] - s.x[1])) for s in traj.snapshots]
        )
        psi = dist ** (-alpha)
        dee = np.array(
            [enstrophy(from_particles(s), d, alpha) for s in traj.snapshots]
        )
        d_int = float(np.trapezoid(dee, times))

        half = w0 / 2.0
        below = np.flatnonzero(rel <= half)
        if below.size == 0:
            rows.append(
                PairRow(eps, None, None, d_int, float(dist.min()), None)
            )
            continue
        k = int(below[0])
        if k == 0:
            t_half = 0.0
            frac = 0.0
        else:
            lo, hi = rel[k - 1], rel[k]
            # exponential decay: interpolate linearly in the log
            frac = (math.log(lo) - math.log(half)) / (
                math.log(lo) - math.log(hi)
            )
            t_half = float(times[k - 1] + frac * (times[k] - times[k - 1]))
        kint = np.concatenate(
            [[0.0], np.cumsum(0.5 * (psi[1:] + psi[:-1]) * np.diff(times))]
        )
        if k == 0:
            kernel_integral = 0.0
        else:
            step = 0.5 * (psi[k - 1] + psi[k]) * (times[k] - times[k - 1])
            kernel_integral = float(kint[k - 1] + frac * step)
        rows.append(
            PairRow(
                eps,
                t_half,
                kernel_integral,
                d_int,
                float(dist.min()),
                None,
            )
        )
    return PairStudy(alpha=float(alpha), horizon=float(horizon), rows=tuple(rows))
