"""Acceptance battery: every guarantee of the laboratory at its stated
tolerance, one test and one printed PASS line per guarantee (run with -s
to see the measured numbers on success).

The twenty-run ensemble and the field-residual study are module scoped;
the whole battery totals about a minute on a laptop.
"""

import json
import time

import numpy as np
import pytest
from scipy import stats

from flocklab import cli
from flocklab.diagnostics import (
    beta_eta,
    dalpha,
    energy_balance_residual,
    enstrophy,
    eta_monokineticity,
    mp_margin,
    sf_modulus,
)
from flocklab.dynamics import ModelParams, ParticleState, integrate
from flocklab.meanfield import (
    InitialSpec,
    local_fields,
    mk_index,
    pair_alignment_study,
    sample_initial,
)
from flocklab.measures import (
    EmpiricalMeasure,
    dbl,
    from_particles,
    marginal_x,
)
from flocklab.weakform import (
    continuity_residual,
    dissipation_margin,
    kinetic_battery,
    kinetic_weak_residual,
    macro_battery,
    momentum_residual,
    vector_battery,
)
from oracles import beta_quadrature

ENSEMBLE_TIMES = np.linspace(0.0, 0.8, 17)
ENSEMBLE_ALPHAS = (1.0, 1.5, 2.0)


def spearman(n_values, values):
    return float(stats.spearmanr(n_values, values).statistic)


@pytest.fixture(scope="module")
def ensemble():
    """Twenty seeded runs covering d in {1, 2} and alpha in {1, 1.5, 2},
    N = 12, T = 0.8, tol = 1e-9, snapshots every 0.05."""
    runs = []
    for i in range(20):
        d = 1 if i % 2 == 0 else 2
        alpha = ENSEMBLE_ALPHAS[i % 3]
        if d == 1:
            vel = {"amplitude": [0.4], "wavenumber": [2.0]}
        else:
            vel = {"amplitude": [0.4, 0.3], "wavenumber": [2.0, 3.0]}
        spec = InitialSpec(
            d=d,
            density="uniform-box",
            density_params={"center": [0.0] * d, "halfwidth": 0.8},
            velocity="sinusoid",
            velocity_params=vel,
            seed=100 + i,
        )
        x0, v0 = sample_initial(spec, 12, bound=2.0)
        params = ModelParams(d=d, alpha=alpha, N=12, T=0.8, M=2.0)
        runs.append(
            integrate(
                ParticleState(0.0, x0, v0),
                params,
                tol=1e-9,
                snapshot_times=ENSEMBLE_TIMES,
            )
        )
    return runs


def test_energy_balance_and_snapshot_refinement():
    # smooth ten-particle profile; trapezoid error dominates the 1e-9
    # integration tolerance, so halving the spacing divides the defect by 4
    start = time.perf_counter()
    x = np.linspace(-0.6, 0.6, 10)[:, None]
    v = 0.4 * np.sin(1.2 * x + 0.3)
    params = ModelParams(d=1, alpha=1.0, N=10, T=1.0, M=2.0)
    res = {}
    for count in (200, 399):
        traj = integrate(
            ParticleState(0.0, x, v),
            params,
            tol=1e-9,
            snapshot_times=np.linspace(0.0, 1.0, count),
        )
        res[count] = energy_balance_residual(traj)
    elapsed = time.perf_counter() - start
    ratio = res[200] / res[399]
    assert res[200] <= 1e-6
    assert ratio >= 3.0
    assert elapsed < 5.0
    print(
        f"PASS energy balance: residual {res[200]:.2e} <= 1e-06, "
        f"refinement ratio {ratio:.2f} >= 3, {elapsed:.2f}s"
    )


def test_speed_and_position_envelopes(ensemble):
    worst_speed = -np.inf
    worst_pos = -np.inf
    for traj in ensemble:
        v0 = traj.snapshots[0].v
        x0 = traj.snapshots[0].x
        smax0 = float(np.sqrt((v0**2).sum(axis=1)).max())
        xmax0 = float(np.sqrt((x0**2).sum(axis=1)).max())
        for s in traj.snapshots:
            speed = float(np.sqrt((s.v**2).sum(axis=1)).max())
            pos = float(np.sqrt((s.x**2).sum(axis=1)).max())
            worst_speed = max(worst_speed, speed - smax0)
            worst_pos = max(worst_pos, pos - (xmax0 + s.t * smax0))
    assert worst_speed <= 1e-8
    assert worst_pos <= 1e-8
    print(
        f"PASS propagation envelopes: speed excess {worst_speed:+.2e}, "
        f"position excess {worst_pos:+.2e} (<= 1e-08)"
    )


def test_collision_free_accepted_steps(ensemble):
    # the fixture itself fails the module if any run raises StepCollapse
    assert {t.params.alpha for t in ensemble} == set(ENSEMBLE_ALPHAS)
    worst = min(float(np.min(t.step_min_dist)) for t in ensemble)
    assert worst > 0.0
    print(
        f"PASS collision avoidance: min pair distance over all accepted "
        f"steps {worst:.2e} > 0, alphas {sorted(ENSEMBLE_ALPHAS)}"
    )


def test_momentum_conservation(ensemble):
    worst = -np.inf
    for traj in ensemble:
        p0 = traj.snapshots[0].v.sum(axis=0)
        n, m = traj.params.N, traj.params.M
        for s in traj.snapshots:
            drift = float(np.linalg.norm(s.v.sum(axis=0) - p0))
            worst = max(worst, drift / (n * m))
    assert worst <= 1e-10
    print(f"PASS momentum conservation: worst drift {worst:.2e} <= 1e-10 per N*M")


def test_flat_metric_closed_form_and_axioms():
    start = time.perf_counter()
    rng = np.random.default_rng(501)

    worst_atom = 0.0
    for _ in range(50):
        a = rng.uniform(-3.0, 3.0, 3)
        b = rng.uniform(-3.0, 3.0, 3)
        got = dbl(
            EmpiricalMeasure(a[None, :], [1.0]),
            EmpiricalMeasure(b[None, :], [1.0]),
        )
        want = min(float(np.linalg.norm(a - b)), 2.0)
        worst_atom = max(worst_atom, abs(got - want))
    assert worst_atom <= 1e-8

    def draw():
        k = int(rng.integers(1, 4))
        pts = rng.uniform(-2.0, 2.0, (k, 2))
        w = rng.uniform(0.2, 1.0, k)
        return EmpiricalMeasure(pts, w / w.sum())

    worst_sym = 0.0
    worst_tri = -np.inf
    worst_self = 0.0
    for _ in range(100):
        mu, nu, kappa = draw(), draw(), draw()
        d_mn = dbl(mu, nu)
        worst_sym = max(worst_sym, abs(d_mn - dbl(nu, mu)))
        worst_tri = max(worst_tri, d_mn - (dbl(mu, kappa) + dbl(kappa, nu)))
        worst_self = max(worst_self, dbl(mu, mu))
    elapsed = time.perf_counter() - start
    assert worst_sym <= 1e-9
    assert worst_tri <= 1e-9
    assert worst_self <= 1e-12
    assert elapsed < 10.0
    print(
        f"PASS flat metric: atom defect {worst_atom:.1e} <= 1e-08, "
        f"symmetry {worst_sym:.1e}, triangle excess {worst_tri:+.1e} "
        f"(<= 1e-09), self {worst_self:.1e} <= 1e-12, {elapsed:.1f}s"
    )


def test_density_time_lipschitz(ensemble):
    rng = np.random.default_rng(601)
    worst = -np.inf
    for traj in ensemble:
        d = traj.params.d
        m = traj.params.M
        margs = [marginal_x(from_particles(s), d) for s in traj.snapshots]
        times = [s.t for s in traj.snapshots]
        for _ in range(100):
            i, j = rng.choice(len(margs), 2, replace=False)
            gap = dbl(margs[i], margs[j]) - 2.0 * m * abs(times[i] - times[j])
            worst = max(worst, gap)
    assert worst <= 1e-6
    print(
        f"PASS density time-Lipschitz: worst excess over 2M|t1-t2| "
        f"{worst:+.2e} <= 1e-06 (2000 snapshot pairs)"
    )


def test_colocated_deviation_domination():
    rng = np.random.default_rng(701)
    worst = -np.inf
    for case in range(50):
        d = 1 if case % 2 == 0 else 2
        sites = rng.uniform(-1.0, 1.0, (int(rng.integers(2, 4)), d))
        k = int(rng.integers(4, 9))
        pos = sites[rng.integers(0, len(sites), k)]  # forced duplicates
        vel = rng.uniform(-1.0, 1.0, (k, d))
        w = rng.uniform(0.2, 1.0, k)
        mu = EmpiricalMeasure(np.hstack([pos, vel]), w / w.sum())
        for eta in (1.0, 0.1, 0.01):
            for alpha in (1.0, 2.0):
                e = eta_monokineticity(mu, d, alpha, eta)
                bound = 2.0 ** (alpha + 1.0) * dalpha(mu, d, alpha, eta)
                assert e <= bound * (1.0 + 1e-12) + 1e-300
                if bound > 0:
                    worst = max(worst, e / bound)
    print(
        f"PASS convexity chain: deviation moment <= 2^(alpha+1) "
        f"dissipation moment on 50 colocated measures, worst ratio "
        f"{worst:.3f} (rel tol 1e-12)"
    )


def test_kernel_normalization_closed_forms():
    cases = [(1, 1.5), (1, 2.0), (1, 3.0), (2, 3.0)]
    worst_oracle = 0.0
    worst_scale = 0.0
    for d, alpha in cases:
        scaled = []
        for eta in (0.1, 0.01, 0.001):
            got = beta_eta(eta, alpha, d)
            want = beta_quadrature(eta, alpha, d)
            worst_oracle = max(worst_oracle, abs(got - want) / want)
            scaled.append(eta**alpha * got / eta**d)
        spread = (max(scaled) - min(scaled)) / max(scaled)
        worst_scale = max(worst_scale, spread)
    assert worst_oracle <= 1e-8
    assert worst_scale <= 1e-9
    print(
        f"PASS kernel normalization: oracle defect {worst_oracle:.1e} "
        f"<= 1e-08, scaling spread {worst_scale:.1e} <= 1e-09"
    )


def test_monokineticity_index_refines_with_n():
    # sub-cell oscillation: the kernel's near field destroys it at a rate
    # that grows with N, so the binned index falls as the cloud refines
    start = time.perf_counter()
    spec = InitialSpec(
        d=1,
        density="uniform-box",
        density_params={"center": [0.0], "halfwidth": 1.0},
        velocity="sinusoid",
        velocity_params={"amplitude": [0.05], "wavenumber": [120.0]},
        seed=3,
    )
    n_list = (50, 100, 200, 400)
    mks = []
    for n in n_list:
        x0, v0 = sample_initial(spec, n, bound=2.0)
        params = ModelParams(d=1, alpha=1.0, N=n, T=0.5, M=2.0)
        traj = integrate(
            ParticleState(0.0, x0, v0),
            params,
            tol=1e-6,
            snapshot_times=[0.0, 0.5],
        )
        mks.append(mk_index(from_particles(traj.state_at(0.5)), 1, 0.125))
    elapsed = time.perf_counter() - start
    corr = spearman(n_list, mks)
    assert mks[-1] < mks[0]
    assert corr < 0.0
    assert elapsed < 120.0
    print(
        f"PASS monokineticity trend: mk {['%.2e' % m for m in mks]}, "
        f"rank corr {corr:+.2f} < 0, N=400 below N=50, {elapsed:.1f}s"
    )


def test_kinetic_residual_refinement_order():
    x = np.linspace(-0.5, 0.5, 10)[:, None]
    v = 0.4 * np.cos(3.0 * x)
    params = ModelParams(d=1, alpha=1.5, N=10, T=0.5, M=2.0)
    battery = kinetic_battery(1, 0.5, 2.0, size=24, seed=0)
    res = {}
    for count in (26, 51, 101):
        traj = integrate(
            ParticleState(0.0, x, v),
            params,
            tol=1e-11,
            snapshot_times=np.linspace(0.0, 0.5, count),
        )
        res[count] = max(kinetic_weak_residual(traj, phi) for phi in battery)
    order = float(np.log2(res[26] / res[101]) / 2.0)
    assert order >= 1.8
    print(
        f"PASS kinetic residual refinement: residuals "
        f"{['%.2e' % res[c] for c in (26, 51, 101)]}, order {order:.2f} >= 1.8"
    )


@pytest.fixture(scope="module")
def field_study():
    """One oscillatory recipe integrated at N in {50,...,400} on a dense
    snapshot grid, with binned fields, residuals, and margins per N."""
    spec = InitialSpec(
        d=1,
        density="uniform-box",
        density_params={"center": [0.0], "halfwidth": 1.0},
        velocity="sinusoid",
        velocity_params={"amplitude": [0.05], "wavenumber": [120.0]},
        seed=2,
    )
    h, horizon, alpha = 0.125, 0.5, 1.0
    grid_t = np.linspace(0.0, horizon, 1025)
    probe_idx = (256, 512, 768, 1024)
    mb = macro_battery(1, horizon, 2.0, size=24, seed=0)
    vb = vector_battery(1, horizon, 2.0, size=24, seed=0)
    out = {"n_list": (50, 100, 200, 400), "cont": [], "mom": [],
           "margin": [], "bound": [], "probe_idx": probe_idx}
    for n in out["n_list"]:
        x0, v0 = sample_initial(spec, n, bound=2.0)
        params = ModelParams(d=1, alpha=alpha, N=n, T=horizon, M=2.0)
        traj = integrate(
            ParticleState(0.0, x0, v0),
            params,
            tol=1e-6,
            snapshot_times=grid_t,
        )
        times = traj.times()
        measures = [from_particles(s) for s in traj.snapshots]
        grids = [local_fields(mu, 1, h) for mu in measures]
        out["cont"].append(
            max(continuity_residual(times, grids, phi) for phi in mb)
        )
        w0 = np.full(n, 1.0 / n)
        out["mom"].append(
            max(
                momentum_residual(times, grids, phi, alpha,
                                  initial_atoms=(x0, v0, w0))
                for phi in vb
            )
        )
        margins = dissipation_margin(times, grids, alpha)
        # quadrature estimate: binned-away kinetic energy at the two ends
        # plus a trapezoid curvature term for the dissipation integral
        cells = [
            EmpiricalMeasure(np.hstack([g_b, g_u]), g_m)
            for g_b, g_u, g_m in (
                (
                    np.array([c.barycenter for c in g.cells]),
                    np.array([c.velocity for c in g.cells]),
                    np.array([c.mass for c in g.cells]),
                )
                for g in grids
            )
        ]
        dee = np.array([enstrophy(mu, 1, alpha) for mu in cells])
        dt = times[1] - times[0]
        curv = np.zeros(len(times))
        curv[2:] = np.cumsum(np.abs(np.diff(dee, 2)))
        mk0 = mk_index(measures[0], 1, h)
        for k in probe_idx:
            mk_t = mk_index(measures[k], 1, h)
            out["margin"].append(float(margins[k]))
            out["bound"].append(mk0 + mk_t + dt / 12.0 * float(curv[k]))
    return out


def test_field_residual_trends(field_study):
    n_list = field_study["n_list"]
    cont = field_study["cont"]
    mom = field_study["mom"]
    c_corr = spearman(n_list, cont)
    m_corr = spearman(n_list, mom)
    assert cont[-1] < cont[0]
    assert mom[-1] < mom[0]
    assert c_corr < 0.0
    assert m_corr < 0.0
    worst = min(
        m + b for m, b in zip(field_study["margin"], field_study["bound"])
    )
    assert worst >= 0.0
    print(
        f"PASS field residual trends: continuity "
        f"{['%.1e' % c for c in cont]} (corr {c_corr:+.2f}), momentum "
        f"{['%.1e' % m for m in mom]} (corr {m_corr:+.2f}), worst margin "
        f"plus estimate {worst:+.2e} >= 0"
    )


def test_unwind_modulus_and_mass_propagation(ensemble):
    rng = np.random.default_rng(801)
    pairs = []
    for _ in range(10):
        traj = ensemble[int(rng.integers(0, len(ensemble)))]
        t0 = float(rng.choice([0.1, 0.2, 0.3, 0.4, 0.5]))
        c = rng.uniform(-0.5, 0.5, traj.params.d)
        s = float(rng.uniform(0.3, 1.0))

        def phi_v(vv, c=c, s=s):
            return np.exp(-((vv - c) ** 2).sum(axis=1) / (2.0 * s * s))

        probes = [t0 + 0.2, t0 + 0.1, t0 + 0.05]
        out = sf_modulus(traj, t0, phi_v, probes)
        assert out[-1] < out[0]
        pairs.append((out[0], out[-1]))

    worst = np.inf
    grid = [float(t) for t in ENSEMBLE_TIMES]
    for _ in range(50):
        traj = ensemble[int(rng.integers(0, len(ensemble)))]
        t0, t1 = sorted(rng.choice(grid, 2, replace=False))
        center = rng.uniform(-1.2, 1.2, traj.params.d)
        radius = float(rng.uniform(0.1, 1.0))
        worst = min(worst, mp_margin(traj, t0, t1, center, radius))
    assert worst >= -1e-12
    print(
        f"PASS transport probes: unwind modulus shrank on 10/10 triples "
        f"(median far/near {np.median([a / max(b, 1e-300) for a, b in pairs]):.1f}x), "
        f"worst mass-propagation margin {worst:+.2e} >= -1e-12"
    )


def test_pair_halflife_and_dissipation_budget():
    eps_list = (0.5, 0.25, 0.125, 0.0625)
    study = pair_alignment_study(
        eps_list, [0.5], [-0.5], alpha=1.0, horizon=2.0,
        grid_points=16384, tol=1e-10,
    )
    halves = [row.t_half for row in study.rows]
    budget = 0.25 + 1e-6  # initial kinetic energy of the pair
    assert all(h is not None for h in halves)
    assert all(a > b for a, b in zip(halves, halves[1:]))
    assert all(row.d_integral <= budget for row in study.rows)
    assert all(row.min_distance > 0.0 for row in study.rows)
    print(
        f"PASS pair alignment: t_half {['%.4f' % h for h in halves]} "
        f"strictly decreasing, dissipation integral <= {budget} at every eps"
    )


def _stripped(path):
    doc = json.loads(path.read_text())
    doc.pop("generated_at", None)
    return json.dumps(doc, sort_keys=True)


def test_cli_reports_reproducible(tmp_path):
    sim_cfg = tmp_path / "sim.json"
    sim_cfg.write_text(json.dumps({
        "d": 1, "alpha": 1.5, "N": 8, "T": 0.4, "M": 2.0,
        "seed": 17, "tol": 1e-8, "snapshots": 9,
        "initial": {
            "density": "uniform-box",
            "density_params": {"center": [0.0], "halfwidth": 0.8},
            "velocity": "sinusoid",
            "velocity_params": {"amplitude": [0.4], "wavenumber": [2.0]},
        },
    }))
    mf_cfg = tmp_path / "mf.json"
    mf_cfg.write_text(json.dumps({
        "d": 1, "alpha": 1.0, "horizon": 0.2, "bound": 2.0, "seed": 21,
        "n_list": [6, 12, 24], "probe_times": [0.1, 0.2], "tol": 1e-7,
        "quad_points": 9, "battery_size": 4,
        "initial": {
            "density": "uniform-box",
            "density_params": {"center": [0.0], "halfwidth": 0.8},
            "velocity": "sinusoid",
            "velocity_params": {"amplitude": [0.4], "wavenumber": [2.0]},
        },
    }))

    for args, out in (
        (["simulate", "--config", str(sim_cfg)], "s"),
        (["mfstudy", "--config", str(mf_cfg)], "m"),
    ):
        dirs = {
            "a": tmp_path / f"{out}_a",
            "b": tmp_path / f"{out}_b",
            "t1": tmp_path / f"{out}_t1",
            "t4": tmp_path / f"{out}_t4",
        }
        for key, extra in (
            ("a", []), ("b", []),
            ("t1", ["--threads", "1"]), ("t4", ["--threads", "4"]),
        ):
            code = cli.main(args + ["--out", str(dirs[key])] + extra)
            assert code == 0
        for left, right in (("a", "b"), ("t1", "t4")):
            left_files = sorted(p for p in dirs[left].rglob("*") if p.is_file())
            assert left_files
            for lf in left_files:
                rf = dirs[right] / lf.relative_to(dirs[left])
                if lf.suffix == ".json":
                    assert _stripped(lf) == _stripped(rf)
                else:
                    assert lf.read_bytes() == rf.read_bytes()
    print(
        "PASS reproducibility: simulate and study reports byte-identical "
        "across repeat runs and thread counts 1 vs 4 (timestamp excluded)"
    )
