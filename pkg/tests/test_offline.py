from __future__ import annotations

import numpy as np
import pytest

from raydg.assembly import assemble_system, build_basis
from raydg.errors import StoreIntegrityError
from raydg.iofmt import read_coeffs, read_field, write_coeffs, write_field
from raydg.medium import Mesh, make_medium
from raydg.offline import (
    covering_gap,
    load_store,
    medium_digest,
    offline_build,
    online_assemble,
    online_snap,
    polar_grid,
    save_store,
)

pytestmark = pytest.mark.filterwarnings("ignore:weight expansion residual")

DELTA = 0.25
EPS = 0.5


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    """Small offline store shared by the round-trip and assembly tests."""
    mesh = Mesh(3)
    medium = make_medium("c2")
    pre = polar_grid(1.0 / 1.2, 1.0 / 0.8, DELTA)
    defaults = np.zeros((1, 2))
    store = offline_build(mesh, medium, omega=6.0, gamma=10.0, pre=pre, defaults=defaults)
    return mesh, medium, pre, defaults, store


def test_polar_grid_covers_annulus():
    pre = polar_grid(0.8, 1.25, 0.1)
    mags = np.linalg.norm(pre.dirs, axis=1)
    assert mags.min() >= 0.8 - 1e-12
    assert mags.max() <= 1.25 + 1e-12
    assert covering_gap(pre, n_samples=20000) <= 0.05


def test_medium_digest_distinguishes_media():
    a = medium_digest(make_medium("c1"))
    b = medium_digest(make_medium("c2"))
    assert a != b
    assert a == medium_digest(make_medium("c1"))


def test_online_assembly_bit_identical(built):
    mesh, medium, pre, defaults, store = built
    rng = np.random.default_rng(11)
    raw = []
    for _ in range(mesh.n_cells):
        k = rng.integers(0, 4)
        ang = rng.uniform(0, 2 * np.pi, size=k)
        mag = rng.uniform(1.0 / 1.2, 1.0 / 0.8, size=k)
        raw.append(np.column_stack([mag * np.cos(ang), mag * np.sin(ang)]))
    report = online_snap(raw, defaults, EPS, store, mesh)
    assert not report.violations
    assert report.max_deviation < EPS + 3.0 * DELTA

    space = build_basis(mesh, report.dirsets)
    fast, fresh = online_assemble(space, medium, store)
    assert fresh == 0  # every snapped direction came from the catalog
    slow = assemble_system(space, medium, store.omega, store.gamma)
    assert np.array_equal(fast.a.toarray(), slow.a.toarray())
    for b_fast, b_slow in zip(fast.mc_blocks, slow.mc_blocks):
        assert np.array_equal(b_fast, b_slow)
    for b_fast, b_slow in zip(fast.m_blocks, slow.m_blocks):
        assert np.array_equal(b_fast, b_slow)


def test_store_roundtrip_bit_exact(built, tmp_path):
    _, _, _, _, store = built
    path = tmp_path / "store.bin"
    save_store(path, store)
    back = load_store(path)
    assert back.omega == store.omega
    assert back.gamma == store.gamma
    assert back.medium_hash == store.medium_hash
    assert np.array_equal(back.directions, store.directions)
    for name in ("mass", "avol", "face", "mc"):
        tb, ts = getattr(back, name), getattr(store, name)
        assert set(tb) == set(ts)
        for key in ts:
            assert np.array_equal(tb[key], ts[key]), (name, key)


def test_store_rejects_truncation(built, tmp_path):
    _, _, _, _, store = built
    path = tmp_path / "store.bin"
    save_store(path, store)
    blob = path.read_bytes()
    short = tmp_path / "short.bin"
    short.write_bytes(blob[: len(blob) - 7])
    with pytest.raises(StoreIntegrityError):
        load_store(short)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTASTORE" + blob[9:])
    with pytest.raises(StoreIntegrityError):
        load_store(bad)


def test_online_assemble_rejects_wrong_medium(built):
    mesh, _, _, defaults, store = built
    space = build_basis(mesh, [defaults] * mesh.n_cells)
    with pytest.raises(StoreIntegrityError):
        online_assemble(space, make_medium("c1"), store)


def test_online_snap_flags_annulus_violation():
    mesh = Mesh(1)
    pre = polar_grid(0.8, 1.25, DELTA)
    defaults = np.zeros((1, 2))
    raw = [np.array([[3.0, 0.0]])]  # far outside the annulus
    report = online_snap(raw, defaults, EPS, pre, mesh)
    assert len(report.violations) == 1
    flat, cand = report.violations[0]
    assert flat == 0
    assert np.linalg.norm(cand) > 1.25


def test_online_snap_deterministic(built):
    mesh, _, pre, defaults, _ = built
    rng = np.random.default_rng(5)
    raw = [rng.uniform(-1.1, 1.1, size=(6, 2)) for _ in range(mesh.n_cells)]
    a = online_snap(raw, defaults, EPS, pre, mesh)
    b = online_snap([r.copy() for r in raw], defaults, EPS, pre, mesh)
    for da, db in zip(a.dirsets, b.dirsets):
        assert np.array_equal(da, db)


def test_field_file_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    vals = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    path = tmp_path / "f.bin"
    write_field(path, vals, omega=31.4, t=1.0)
    back, omega, t = read_field(path)
    assert omega == 31.4 and t == 1.0
    assert np.array_equal(back, vals)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(StoreIntegrityError):
        read_field(path)


def test_coeff_file_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    coeffs = rng.normal(size=40) + 1j * rng.normal(size=40)
    path = tmp_path / "c.bin"
    write_coeffs(path, n_mesh=5, omega=6.0, t=0.5, coeffs=coeffs)
    back, n_mesh, omega, t = read_coeffs(path)
    assert (n_mesh, omega, t) == (5, 6.0, 0.5)
    assert np.array_equal(back, coeffs)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\x00" * 16)
    with pytest.raises(StoreIntegrityError):
        read_coeffs(bad)
