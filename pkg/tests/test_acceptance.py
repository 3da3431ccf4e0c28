"""End-to-end acceptance gates for the benchmark configurations.

Each test is a single pass/fail criterion.  The benchmark rows run the whole
pipeline (wavefront direction learning, enriched interior-penalty assembly,
leapfrog marching, pseudospectral reference) at the published operating
points and compare the relative L2 errors, system sizes, conditioning, and
wall time against fixed targets.  The final test bundles the analytic
property suites (conservation laws, oracle agreement, pipeline equivalences)
that must hold with zero failures.
"""
from __future__ import annotations

import numpy as np
import pytest

from raydg.driver import ExperimentConfig, run_experiment

pytestmark = pytest.mark.filterwarnings("ignore:weight expansion residual")

_CACHE: dict = {}


def _run(**kw):
    key = tuple(sorted(kw.items()))
    if key not in _CACHE:
        _CACHE[key] = run_experiment(ExperimentConfig(**kw))
    return _CACHE[key]


def test_single_wave_lens_accuracy_and_size():
    # Example 1 rows (10 pi, N=10) and (20 pi, N=20): error within 5 points
    # of 16.856% / 14.339%, dofs within 15% of 456 / 1844, under 2 min each.
    r1 = _run(example=1, omega=10 * np.pi, n=10)
    r2 = _run(example=1, omega=20 * np.pi, n=20)
    for res, err_target, dof_target in ((r1, 16.856, 456), (r2, 14.339, 1844)):
        err = res.row.rel_l2_err_percent
        assert abs(err - err_target) <= 5.0, (
            f"error {err:.2f}% not within 5 points of {err_target}%"
        )
        assert abs(res.row.dof - dof_target) <= 0.15 * dof_target, (
            f"dof {res.row.dof} not within 15% of {dof_target}"
        )
        assert res.row.wall_seconds < 120.0


def test_pollution_contrast_baseline_vs_enriched():
    # Bilinear baseline at fixed omega h = pi/10: the error must grow
    # strictly from omega = 10 pi to 20 pi while the enriched error grows by
    # at most 3 points; the 10 pi baseline row is anchored at 20.11% +- 5.
    b1 = _run(example=1, omega=10 * np.pi, n=100, baseline=True)
    b2 = _run(example=1, omega=20 * np.pi, n=200, baseline=True)
    assert b1.row.wall_seconds + b2.row.wall_seconds < 1800.0

    e1 = _run(example=1, omega=10 * np.pi, n=10)
    e2 = _run(example=1, omega=20 * np.pi, n=20)

    base_lo, base_hi = b1.row.rel_l2_err_percent, b2.row.rel_l2_err_percent
    assert base_hi > base_lo, (
        f"baseline error must grow with frequency: {base_lo:.2f}% -> {base_hi:.2f}%"
    )
    enriched_growth = e2.row.rel_l2_err_percent - e1.row.rel_l2_err_percent
    assert enriched_growth <= 3.0, (
        f"enriched error grew by {enriched_growth:.2f} points over the doubling"
    )
    assert abs(base_lo - 20.11) <= 5.0, (
        f"baseline error {base_lo:.2f}% not within 5 points of 20.11%; the "
        "measured value sits on the consistent-mass dispersion prediction "
        "omega T (omega h)^2 / 24 for this discretisation, "
        "gamma-insensitive over [5, 50]"
    )


def test_pod_mesh_convergence_and_conditioning():
    # Example 2 (low-rank mass conditioning) at omega = 10 pi, N in
    # {10, 20, 40}: errors within 4 points of {17.07, 11.56, 5.56}%, first-
    # order decay (successive ratios >= 1.4), and the N=10 weighted-mass
    # condition number drops from above 1e7 to below 1e6.
    rows = [
        _run(example=2, omega=10 * np.pi, n=n).row for n in (10, 20, 40)
    ]
    errs = [r.rel_l2_err_percent for r in rows]
    for err, target in zip(errs, (17.07, 11.56, 5.56)):
        assert abs(err - target) <= 4.0, (
            f"error {err:.2f}% not within 4 points of {target}%"
        )
    assert errs[0] / errs[1] >= 1.4, f"ratio {errs[0] / errs[1]:.2f} below 1.4"
    assert errs[1] / errs[2] >= 1.4, f"ratio {errs[1] / errs[2]:.2f} below 1.4"
    assert rows[0].cond_mc > 1e7, f"pre-conditioning cond {rows[0].cond_mc:.2e}"
    assert rows[0].cond_mc_pod < 1e6, f"conditioned cond {rows[0].cond_mc_pod:.2e}"


def test_crossing_waves_accuracy_and_phase_bound():
    # Example 3 (two orthogonal wave trains) at (10 pi, N=10) and
    # (20 pi, N=20): errors within 5 points of 15.09% / 11.54%, and no cell
    # learns more than 4 phases.
    r1 = _run(example=3, omega=10 * np.pi, n=10)
    r2 = _run(example=3, omega=20 * np.pi, n=20)
    for res, target in ((r1, 15.09), (r2, 11.54)):
        err = res.row.rel_l2_err_percent
        assert abs(err - target) <= 5.0, (
            f"error {err:.2f}% not within 5 points of {target}%"
        )
        assert res.phase_counts.max() <= 4, (
            f"cell phase count {res.phase_counts.max()} exceeds 4"
        )


def test_layered_medium_accuracy():
    # Example 4 (sinusoidally layered speed) at (10 pi, N=10): error within
    # 4 points of 8.58%.
    res = _run(example=4, omega=10 * np.pi, n=10)
    err = res.row.rel_l2_err_percent
    assert abs(err - 8.58) <= 4.0, f"error {err:.2f}% not within 4 points of 8.58%"


def _prop_hamiltonian_conservation():
    from raydg.medium import make_medium
    from raydg.wavefront import hamiltonian, propagate, seed_level_lines

    for name in ("c1", "c2"):
        medium = make_medium(name)
        rays = seed_level_lines(medium, 0, [0.3], n_points=60)[0].rays
        for _ in range(1000):
            rays = propagate(rays, medium, 1e-3)
        drift = np.max(np.abs(hamiltonian(medium, rays) - 1.0))
        assert drift <= 1e-8, f"{name}: Hamiltonian drift {drift:.3e}"


def _prop_separation_guarantees():
    from raydg.separation import check_separable, deviation, separate

    e1 = np.array([[1.0, 0.0]])
    e12 = np.array([[1.0, 0.0], [0.0, 1.0]])
    rng = np.random.default_rng(42)
    for trial in range(10_000):
        n = int(rng.integers(0, 14))
        raw = rng.normal(scale=rng.uniform(0.3, 2.0), size=(n, 2))
        eps = float(rng.uniform(0.05, 0.6))
        defaults = (np.zeros((0, 2)), e1, e12)[int(rng.integers(0, 3))]
        variant = ("centroid", "representative")[trial % 2]
        out = separate(raw, defaults, eps, variant=variant)
        assert check_separable(out, eps / 2.0), f"trial {trial}: not eps/2-separable"
        if variant == "representative":
            assert check_separable(out[defaults.shape[0] :], eps)
            if n:
                assert deviation(out, raw) <= eps + 1e-12, f"trial {trial}: coverage"


def _prop_quadrature_oracle():
    from oracles import quad_legendre_moment
    from raydg.oscquad import legendre_osc_all

    rng = np.random.default_rng(7)
    for _ in range(1000):
        k = int(rng.integers(0, 13))
        w = float(rng.uniform(0.0, 500.0))
        got = legendre_osc_all(k, w)[k]
        want = quad_legendre_moment(k, w)
        assert abs(got - want) <= 1e-10, f"k={k}, omega={w}: {abs(got - want):.3e}"


def _prop_assembly_oracle():
    from oracles import oracle_stiffness
    from raydg.assembly import EntryKernels, assemble_stiffness, build_basis
    from raydg.medium import Mesh

    rng = np.random.default_rng(1)
    mesh = Mesh(3)
    dirsets = []
    for _ in range(mesh.n_cells):
        ang = rng.uniform(0, 2 * np.pi, size=int(rng.integers(0, 3)))
        dirsets.append(np.vstack([[0.0, 0.0], np.column_stack([np.cos(ang), np.sin(ang)])]))
    space = build_basis(mesh, dirsets)
    a = assemble_stiffness(space, EntryKernels(mesh, 7.3, 10.0)).toarray()
    want = oracle_stiffness(space, 7.3, 10.0)
    scale = np.abs(want).max()
    assert np.abs(a - want).max() <= 1e-9 * scale, "stiffness vs quadrature oracle"
    assert np.abs(a - a.conj().T).max() <= 1e-12 * scale, "Hermitian deviation"


def _prop_energy_and_reversal():
    from raydg.assembly import assemble_system, build_basis
    from raydg.marching import PlaneWaveData, leapfrog_energy, march, project_initial
    from raydg.medium import Mesh, make_medium

    mesh = Mesh(5)
    space = build_basis(mesh, [np.array([[0.0, 0.0], [1.0, 0.0]])] * mesh.n_cells)
    system = assemble_system(space, make_medium("c1"), omega=10.0)
    dt, steps = 5e-4, 1000
    u0, u1 = project_initial(system, [PlaneWaveData(1.0, -1.0, (1.0, 0.0))], dt)
    res = march(system, u0, u1, dt, steps * dt, snapshot_steps=(0, 1, steps - 1, steps))
    e0 = leapfrog_energy(system, res.snapshots[0], res.snapshots[1], dt)
    e1 = leapfrog_energy(system, res.snapshots[steps - 1], res.snapshots[steps], dt)
    assert abs(e1 - e0) <= 1e-10 * abs(e0), f"energy drift {abs(e1 - e0) / abs(e0):.3e}"

    back = march(system, res.final, res.previous, dt, steps * dt)
    scale = np.abs(u0).max()
    assert np.abs(back.final - u0).max() <= 1e-8 * scale, "time reversal"


def _prop_reference_solver():
    from raydg.marching import PlaneWaveData
    from raydg.medium import make_medium
    from raydg.reference import reference_run, self_convergence

    omega = 2 * np.pi
    data = [PlaneWaveData(1.0, -1.0, (1.0, 0.0), 0.0)]
    ref = reference_run(make_medium("constant"), omega, data, 0.5, n=16, dt=1e-4)
    g = np.arange(16) / 16.0
    want = np.exp(1j * omega * (g[:, None] - 0.5)) * np.ones((1, 16))
    assert np.abs(ref.values - want).max() <= 1e-6, "plane-wave closed form"

    change = self_convergence(make_medium("c1"), omega, data, 1.0, n=64, dt=1.0 / 512.0)
    assert change < 0.1, f"self-convergence {change:.3f}%"


def _prop_offline_online_equivalence():
    from raydg.assembly import assemble_system, build_basis, evaluate_on_grid
    from raydg.marching import PlaneWaveData, march, project_initial
    from raydg.medium import Mesh, make_medium
    from raydg.offline import offline_build, online_assemble, online_snap, polar_grid

    mesh = Mesh(3)
    medium = make_medium("c2")
    eps, delta = 0.5, 0.25
    pre = polar_grid(1.0 / 1.2, 1.0 / 0.8, delta)
    defaults = np.zeros((1, 2))
    store = offline_build(mesh, medium, omega=6.0, gamma=10.0, pre=pre, defaults=defaults)

    rng = np.random.default_rng(2)
    raw = []
    for _ in range(mesh.n_cells):
        k = int(rng.integers(0, 4))
        ang = rng.uniform(0, 2 * np.pi, size=k)
        mag = rng.uniform(1.0 / 1.2, 1.0 / 0.8, size=k)
        raw.append(np.column_stack([mag * np.cos(ang), mag * np.sin(ang)]))
    report = online_snap(raw, defaults, eps, store, mesh)
    assert not report.violations
    assert report.max_deviation < eps + 3.0 * delta, "snap deviation bound"

    space = build_basis(mesh, report.dirsets)
    fast, fresh = online_assemble(space, medium, store)
    assert fresh == 0, f"{fresh} entries missed the precomputed tables"
    slow = assemble_system(space, medium, store.omega, store.gamma)

    dt, t_final = 1e-3, 0.2
    data = [PlaneWaveData(1.0, -1.0, (1.0, 0.0))]
    fa = march(fast, *project_initial(fast, data, dt), dt, t_final)
    sl = march(slow, *project_initial(slow, data, dt), dt, t_final)
    ua = evaluate_on_grid(fast, fa.final, 24)
    ub = evaluate_on_grid(slow, sl.final, 24)
    assert np.abs(ua - ub).max() <= 1e-12 * np.abs(ub).max(), "final-field difference"


def _prop_parallel_split_equivalence():
    from raydg.medium import Mesh, make_medium
    from raydg.wavefront import construct_rays, seed_level_lines

    def sorted_rows(arr):
        arr = np.asarray(arr).reshape(-1, 2)
        return arr[np.lexsort((arr[:, 1], arr[:, 0]))]

    for name in ("c1", "c2"):
        medium = make_medium(name)
        mesh = Mesh(5)
        base = construct_rays(
            seed_level_lines(medium, 0, [0.3, 0.6], n_points=40), medium, mesh, 0.05, 1e-3
        )
        split = construct_rays(
            seed_level_lines(medium, 0, [0.3, 0.6], n_points=40),
            medium, mesh, 0.05, 1e-3, n_parts=4, threads=2,
        )
        for j in range(mesh.n):
            for i in range(mesh.n):
                a, b = base.raw(i, j), split.raw(i, j)
                assert a.shape == b.shape, f"{name} cell ({i},{j})"
                assert np.array_equal(sorted_rows(a), sorted_rows(b)), f"{name} cell ({i},{j})"


def test_property_suites():
    # Conservation laws, closed-form-vs-oracle agreement, and pipeline
    # equivalences; every sub-suite must hold with zero failures.
    checks = [
        ("hamiltonian_conservation", _prop_hamiltonian_conservation),
        ("separation_guarantees", _prop_separation_guarantees),
        ("quadrature_oracle", _prop_quadrature_oracle),
        ("assembly_oracle", _prop_assembly_oracle),
        ("energy_and_reversal", _prop_energy_and_reversal),
        ("reference_solver", _prop_reference_solver),
        ("offline_online_equivalence", _prop_offline_online_equivalence),
        ("parallel_split_equivalence", _prop_parallel_split_equivalence),
    ]
    failures = []
    for name, fn in checks:
        try:
            fn()
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")
    assert not failures, "property failures:\n" + "\n".join(failures)
