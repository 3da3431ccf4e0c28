"""Wavefront construction: geometric-optics rays that learn local directions.

A discrete wavefront is an ordered list of rays r = (x, p), position and
direction, advanced through the ray equations

    dx/dt = c(x)^2 p,      dp/dt = -|p| grad c(x),

by classical RK4.  Seeding with the eikonal normalization |p| = 1/c(x) keeps
the Hamiltonian c(x)|p| pinned at 1, where this flow coincides with the unit
bicharacteristic flow dx/dt = c p/|p|.  After each step, neighbor pairs that
drifted apart are refilled with equidistant interpolated rays, consecutive
fronts are triangulated into ray cells, and each mesh-cell centroid covered
by a ray cell records the barycentric interpolation of the vertex directions.
The accumulated per-cell direction lists are the raw input of the separation
stage.

Trajectories are kept unwrapped in the plane; periodicity enters only when a
ray cell is matched against centroids, by testing translated centroid images.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PropagationError
from .medium import Medium, Mesh

DEGENERATE_AREA = 1e-14
BARYCENTRIC_TOL = -1e-12
HAMILTONIAN_SEED_TOL = 1e-6


@dataclass
class ToleranceFn:
    """Insertion tolerance tol(dx, dp) = alpha1 |dx| + alpha2 |dp|."""

    alpha1: float = 10.0
    alpha2: float = 100.0

    def __call__(self, d_pos: np.ndarray, d_dir: np.ndarray) -> np.ndarray:
        return self.alpha1 * np.linalg.norm(d_pos, axis=-1) + self.alpha2 * np.linalg.norm(
            d_dir, axis=-1
        )


@dataclass
class DiscreteWavefront:
    """Ordered rays of one front; parent_index maps rays to the previous front.

    ``rays`` has shape (n, 4) as columns (x1, x2, p1, p2).  ``closed`` joins
    the last ray back to the first (a closed plane curve); the benchmark
    level lines are open segments whose endpoints track congruent periodic
    trajectories, so they stay seam-free without closing.
    """

    rays: np.ndarray
    parent_index: np.ndarray | None = None
    closed: bool = False

    @property
    def size(self) -> int:
        return self.rays.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.rays[:, :2]

    @property
    def directions(self) -> np.ndarray:
        return self.rays[:, 2:]


def _ray_rhs(medium: Medium, state: np.ndarray) -> np.ndarray:
    x, p = state[:, :2], state[:, 2:]
    c = np.asarray(medium.speed(x[:, 0], x[:, 1]), dtype=float)
    g1, g2 = medium.grad_speed(x[:, 0], x[:, 1])
    pn = np.linalg.norm(p, axis=1)
    out = np.empty_like(state)
    out[:, :2] = (c * c)[:, None] * p
    out[:, 2] = -pn * g1
    out[:, 3] = -pn * g2
    return out


def propagate(rays: np.ndarray, medium: Medium, dt: float) -> np.ndarray:
    """One classical RK4 step of every ray; returns the stepped (n, 4) array."""
    if dt <= 0.0:
        raise ConfigurationError(f"ray step must be positive, got {dt}")
    rays = np.asarray(rays, dtype=float).reshape(-1, 4)
    if np.any(np.linalg.norm(rays[:, 2:], axis=1) == 0.0):
        raise PropagationError("ray with zero direction cannot be propagated")
    k1 = _ray_rhs(medium, rays)
    k2 = _ray_rhs(medium, rays + 0.5 * dt * k1)
    k3 = _ray_rhs(medium, rays + 0.5 * dt * k2)
    k4 = _ray_rhs(medium, rays + dt * k3)
    stepped = rays + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(stepped)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(stepped), axis=1))[0])
        raise PropagationError(f"non-finite ray state at index {bad}")
    return stepped


def hamiltonian(medium: Medium, rays: np.ndarray) -> np.ndarray:
    """c(x) |p| for each ray; conserved along the flow on the unit level set."""
    rays = np.asarray(rays, dtype=float).reshape(-1, 4)
    c = np.asarray(medium.speed(rays[:, 0], rays[:, 1]), dtype=float)
    return c * np.linalg.norm(rays[:, 2:], axis=1)


def reconstruct(stepped: np.ndarray, tol: ToleranceFn, closed: bool = False) -> DiscreteWavefront:
    """Insert equidistant rays wherever neighbor separation exceeds tolerance.

    Between rays r_k, r_{k+1} with n = floor(tol(r_k - r_{k+1})) >= 1, n
    interpolants (1 - l/(n+1)) r_k + l/(n+1) r_{k+1} are inserted.  Each ray
    keeps the (0-based) index of the old ray it follows, so parent_index is
    nondecreasing and the final original ray carries its own old index.
    """
    stepped = np.asarray(stepped, dtype=float).reshape(-1, 4)
    n_rays = stepped.shape[0]
    if n_rays == 0:
        return DiscreteWavefront(stepped.copy(), np.zeros(0, dtype=int), closed)
    pair_hi = np.arange(1, n_rays)
    if closed and n_rays > 1:
        pair_hi = np.concatenate([pair_hi, [0]])
    pair_lo = (pair_hi - 1) % n_rays

    diff = stepped[pair_lo] - stepped[pair_hi]
    n_ins = np.floor(tol(diff[:, :2], diff[:, 2:])).astype(int)
    n_ins = np.maximum(n_ins, 0)

    out = []
    parents = []
    for g, k in enumerate(pair_lo):
        out.append(stepped[k])
        parents.append(k)
        n = n_ins[g]
        if n > 0:
            w = np.arange(1, n + 1) / (n + 1.0)
            out.extend((1.0 - w)[:, None] * stepped[k] + w[:, None] * stepped[pair_hi[g]])
            parents.extend([k] * n)
    if not closed:
        out.append(stepped[-1])
        parents.append(n_rays - 1)
    return DiscreteWavefront(np.array(out).reshape(-1, 4), np.array(parents, dtype=int), closed)


def form_ray_cells(old: DiscreteWavefront, new: DiscreteWavefront):
    """Triangulate the band swept between two consecutive fronts.

    For old-ray gap i with new-front span [i*, (i+1)*] this yields the fan
    triangles (o_i, n_j, n_{j+1}), j = i*..(i+1)*-1, plus the closing
    triangle (o_i, o_{i+1}, n_{(i+1)*}); together they tile the band.
    Returns (positions, directions), both shaped (n_tri, 3, 2).
    """
    n_old = old.size
    if new.parent_index is None:
        raise ConfigurationError("new front lacks parent indices; run reconstruct first")
    if n_old < 2 or new.size < 2:
        return np.zeros((0, 3, 2)), np.zeros((0, 3, 2))
    first = np.searchsorted(new.parent_index, np.arange(n_old))

    o_pos, o_dir = old.positions, old.directions
    n_pos, n_dir = new.positions, new.directions

    if old.closed and new.closed:
        starts = first
        ends = np.concatenate([first[1:], [new.size]])
        gap_lo = np.arange(n_old)
        gap_hi = (gap_lo + 1) % n_old
        close_j = np.concatenate([first[1:], [0]])
        wrap = True
    else:
        starts, ends = first[:-1], first[1:]
        gap_lo = np.arange(n_old - 1)
        gap_hi = gap_lo + 1
        close_j = first[1:]
        wrap = False

    counts = ends - starts
    total = int(np.sum(counts))
    gap_of = np.repeat(gap_lo, counts)
    offs = np.concatenate([[0], np.cumsum(counts)])[:-1]
    js = np.arange(total) - np.repeat(offs, counts) + np.repeat(starts, counts)
    js_next = js + 1
    if wrap:
        js_next %= new.size

    fan_pos = np.stack([o_pos[gap_of], n_pos[js], n_pos[js_next]], axis=1)
    fan_dir = np.stack([o_dir[gap_of], n_dir[js], n_dir[js_next]], axis=1)
    clo_pos = np.stack([o_pos[gap_lo], o_pos[gap_hi], n_pos[close_j]], axis=1)
    clo_dir = np.stack([o_dir[gap_lo], o_dir[gap_hi], n_dir[close_j]], axis=1)

    # interleave per gap: fan triangles first, then the closing triangle
    order_key = np.concatenate([gap_of * 2, gap_lo * 2 + 1])
    pos = np.concatenate([fan_pos, clo_pos], axis=0)
    dirs = np.concatenate([fan_dir, clo_dir], axis=0)
    perm = np.argsort(order_key, kind="stable")
    return pos[perm], dirs[perm]


@dataclass
class DirectionCapture:
    """Raw directions observed at cell centroids, in capture order."""

    mesh: Mesh
    cells: dict = field(default_factory=dict)  # flat id -> list[(p1, p2)]
    degenerate_count: int = 0

    def add_batch(self, flat_ids: np.ndarray, dirs: np.ndarray) -> None:
        for fid, d in zip(flat_ids.tolist(), dirs.tolist()):
            self.cells.setdefault(fid, []).append((d[0], d[1]))

    def merge(self, other: "DirectionCapture") -> None:
        for fid, lst in other.cells.items():
            self.cells.setdefault(fid, []).extend(lst)
        self.degenerate_count += other.degenerate_count

    def raw(self, i: int, j: int) -> np.ndarray:
        return np.array(self.cells.get(self.mesh.flat_id(i, j), []), dtype=float).reshape(-1, 2)

    def counts(self) -> np.ndarray:
        out = np.zeros((self.mesh.n, self.mesh.n), dtype=int)
        for fid, lst in self.cells.items():
            out[fid % self.mesh.n, fid // self.mesh.n] = len(lst)
        return out

    def dump(self, stream) -> None:
        """Rows 'i j count p1 p2 p1 p2 ...' for every nonempty cell."""
        n = self.mesh.n
        for fid in sorted(self.cells):
            lst = self.cells[fid]
            flat = " ".join(f"{a:.17g} {b:.17g}" for a, b in lst)
            stream.write(f"{fid % n} {fid // n} {len(lst)} {flat}\n")


def determine_rays(tri_pos: np.ndarray, tri_dir: np.ndarray, mesh: Mesh, capture: DirectionCapture) -> None:
    """Record interpolated directions at every centroid covered by a ray cell.

    Containment is boundary inclusive (barycentric coordinates >= -1e-12) and
    periodic: candidate centroids are taken from the integer translates of
    the mesh overlapping each triangle's bounding box, so cells straddling
    the unit-square seam are handled by construction.  Triangles with area
    below 1e-14 are skipped and counted.
    """
    m = tri_pos.shape[0]
    if m == 0:
        return
    a, b, c = tri_pos[:, 0], tri_pos[:, 1], tri_pos[:, 2]
    e1, e2 = b - a, c - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    good = np.abs(0.5 * det) >= DEGENERATE_AREA
    capture.degenerate_count += int(m - np.count_nonzero(good))
    if not np.any(good):
        return
    idx = np.flatnonzero(good)
    a, b, c = a[idx], b[idx], c[idx]
    e1, e2, det = e1[idx], e2[idx], det[idx]
    pa, pb, pc = tri_dir[idx, 0], tri_dir[idx, 1], tri_dir[idx, 2]

    h, n = mesh.h, mesh.n
    lo = np.minimum(np.minimum(a, b), c)
    hi = np.maximum(np.maximum(a, b), c)
    i_lo = np.ceil(lo / h - 0.5 - 1e-12).astype(int)
    i_hi = np.floor(hi / h - 0.5 + 1e-12).astype(int)
    spans = i_hi - i_lo + 1
    if np.any(spans > 64):
        raise PropagationError("ray cell spans more than 64 mesh cells; step size too large")

    found_tri, found_fid, found_dir = [], [], []
    max_sx = int(np.max(spans[:, 0])) if spans.size else 0
    max_sy = int(np.max(spans[:, 1])) if spans.size else 0
    for dx in range(max(max_sx, 0)):
        for dy in range(max(max_sy, 0)):
            sel = (dx < spans[:, 0]) & (dy < spans[:, 1])
            if not np.any(sel):
                continue
            s = np.flatnonzero(sel)
            ci = i_lo[s, 0] + dx
            cj = i_lo[s, 1] + dy
            px = (ci + 0.5) * h - a[s, 0]
            py = (cj + 0.5) * h - a[s, 1]
            inv = 1.0 / det[s]
            l2 = (px * e2[s, 1] - py * e2[s, 0]) * inv
            l3 = (e1[s, 0] * py - e1[s, 1] * px) * inv
            l1 = 1.0 - l2 - l3
            inside = (l1 >= BARYCENTRIC_TOL) & (l2 >= BARYCENTRIC_TOL) & (l3 >= BARYCENTRIC_TOL)
            if not np.any(inside):
                continue
            t = s[inside]
            w1, w2, w3 = l1[inside, None], l2[inside, None], l3[inside, None]
            found_tri.append(t)
            found_fid.append((cj[inside] % n) * n + (ci[inside] % n))
            found_dir.append(w1 * pa[t] + w2 * pb[t] + w3 * pc[t])
    if not found_tri:
        return
    tri = np.concatenate(found_tri)
    fid = np.concatenate(found_fid)
    dirs = np.concatenate(found_dir, axis=0)
    order = np.argsort(tri, kind="stable")
    capture.add_batch(fid[order], dirs[order])


def split_front(front: DiscreteWavefront, n_parts: int) -> list[DiscreteWavefront]:
    """Split an open front into sub-fronts sharing their endpoint rays.

    Each neighbor gap lands in exactly one part, so the parts can be
    propagated and processed independently and their merged captures equal
    the serial result as per-cell multisets.
    """
    if front.closed:
        raise ConfigurationError("closed fronts cannot be split")
    n_parts = max(1, min(n_parts, front.size - 1))
    bounds = np.linspace(0, front.size - 1, n_parts + 1).round().astype(int)
    return [
        DiscreteWavefront(front.rays[bounds[k] : bounds[k + 1] + 1].copy(), None, False)
        for k in range(n_parts)
    ]


def _track_one(front: DiscreteWavefront, medium: Medium, mesh: Mesh, n_steps: int, dt: float, tol: ToleranceFn) -> DirectionCapture:
    capture = DirectionCapture(mesh)
    current = front
    for _ in range(n_steps):
        stepped = propagate(current.rays, medium, dt)
        new = reconstruct(stepped, tol, current.closed)
        tri_pos, tri_dir = form_ray_cells(current, new)
        determine_rays(tri_pos, tri_dir, mesh, capture)
        current = new
    return capture


def construct_rays(
    fronts: list[DiscreteWavefront],
    medium: Medium,
    mesh: Mesh,
    t_final: float,
    dt: float,
    tol: ToleranceFn | None = None,
    n_parts: int = 1,
    threads: int = 1,
) -> DirectionCapture:
    """Track every front over [0, t_final] and collect per-cell directions.

    Fronts are processed in order; with n_parts > 1 each open front is first
    split into independent sub-fronts (shared endpoints) whose captures merge
    in sub-front order.  ``threads`` runs whole tracks concurrently, with the
    merge still performed in deterministic track order.
    """
    if tol is None:
        tol = ToleranceFn()
    if dt <= 0.0 or t_final <= 0.0:
        raise ConfigurationError(f"need positive dt and t_final, got {dt}, {t_final}")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigurationError(f"dt = {dt} does not divide t_final = {t_final}")

    tracks = []
    for front in fronts:
        if front.size == 0:
            continue
        if n_parts > 1 and not front.closed:
            tracks.extend(split_front(front, n_parts))
        else:
            tracks.append(front)

    capture = DirectionCapture(mesh)
    if threads > 1 and len(tracks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda f: _track_one(f, medium, mesh, n_steps, dt, tol), tracks))
        for part in results:
            capture.merge(part)
    else:
        for front in tracks:
            capture.merge(_track_one(front, medium, mesh, n_steps, dt, tol))
    return capture


def seed_level_lines(
    medium: Medium,
    axis: int,
    offsets,
    n_points: int = 200,
) -> list[DiscreteWavefront]:
    """Initial fronts on the level lines {x_axis = beta} of an affine phase.

    Each line is sampled at n_points equispaced parameter values spanning the
    full transverse period [0, 1]; directions point along the axis with the
    eikonal normalization |p| = 1/c(x), which pins the Hamiltonian at 1
    (asserted to 1e-6).
    """
    if axis not in (0, 1):
        raise ConfigurationError(f"axis must be 0 or 1, got {axis}")
    s = np.linspace(0.0, 1.0, n_points)
    fronts = []
    for beta in offsets:
        rays = np.zeros((n_points, 4))
        rays[:, axis] = beta
        rays[:, 1 - axis] = s
        c = np.asarray(medium.speed(rays[:, 0], rays[:, 1]), dtype=float)
        rays[:, 2 + axis] = 1.0 / c
        ham = hamiltonian(medium, rays)
        if np.any(np.abs(ham - 1.0) > HAMILTONIAN_SEED_TOL):
            raise ConfigurationError("eikonal seeding failed the unit Hamiltonian check")
        fronts.append(DiscreteWavefront(rays, None, False))
    return fronts


def dump_wavefront(stream, t: float, front: DiscreteWavefront) -> None:
    """Rows 't j x1 x2 p1 p2 parent' for offline inspection."""
    par = front.parent_index
    for j in range(front.size):
        x1, x2, p1, p2 = front.rays[j]
        pj = -1 if par is None else int(par[j])
        stream.write(f"{t:.17g} {j} {x1:.17g} {x2:.17g} {p1:.17g} {p2:.17g} {pj}\n")
