"""Interior penalty DG assembly on plane-wave-enriched bilinear elements.

Each mesh cell K carries the local space span{phi_j exp(i w p.(x - x_K))}
over its learned directions p and the four bilinear vertex functions phi_j.
The bilinear form is the standard symmetric interior penalty discretization
of the Laplacian on the periodic mesh,

    a(u, v) = sum_K int grad u . grad conj(v)
            - sum_F int ( {grad u} . [conj(v)] + [u] . {grad conj(v)} )
            + (gamma / h) sum_F int [u] . [conj(v)],

with vector-valued scalar jumps [u] = u+ n+ + u- n-.  Because cells are
axis-aligned squares, hats factor per axis, and plane-wave phases separate,
every volume, face, and load entry reduces to closed-form 1D Legendre
moments from :mod:`raydg.oscquad`; no numerical quadrature is involved
beyond the per-cell Legendre expansion of the weight 1/c^2.

Matrix conventions: rows are test functions (conjugated), columns trial;
dofs are ordered cells row-major, directions in insertion order, vertices
counterclockwise from the lower-left corner.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyIntegrityError, ConfigurationError
from .medium import Medium, Mesh
from .oscquad import expand_legendre_2d, legendre_osc_all

# vertex v -> which hat (0 = lower, 1 = upper) along each axis
AX = np.array([0, 1, 1, 0])
AY = np.array([0, 0, 1, 1])
_SIGN = np.array([-1.0, 1.0])  # d(hat_a)/dt = sign/2
RHO_DEGREE = 8
RHO_RESIDUAL_TOL = 1e-8
HERMITIAN_TOL = 1e-12


def _static_tables(rho_degree: int):
    """Legendre-coefficient tables of hat products on [-1, 1]."""
    from numpy.polynomial import legendre as L

    hat = [np.array([0.5, -0.5]), np.array([0.5, 0.5])]  # monomial coeffs
    h1 = np.zeros((2, 2))
    for a in range(2):
        h1[a, :] = L.poly2leg(hat[a])
    h2 = np.zeros((2, 2, 3))
    for a in range(2):
        for b in range(2):
            h2[a, b, :] = L.poly2leg(np.polynomial.polynomial.polymul(hat[a], hat[b]))
    hp = np.zeros((rho_degree + 1, 2, 2, rho_degree + 3))
    for r in range(rho_degree + 1):
        pr = np.zeros(r + 1)
        pr[r] = 1.0
        for a in range(2):
            for b in range(2):
                prod = L.legmul(pr, h2[a, b, :])
                hp[r, a, b, : len(prod)] = prod
    return h1, h2, hp


@dataclass
class CellBasis:
    """Basis bookkeeping for one cell: directions and global dof offset."""

    i: int
    j: int
    flat: int
    dirs: np.ndarray  # (m, 2)
    offset: int

    @property
    def n_dirs(self) -> int:
        return self.dirs.shape[0]

    @property
    def size(self) -> int:
        return 4 * self.dirs.shape[0]


@dataclass
class DgSpace:
    """Enriched DG space over the whole mesh, cells in flat-id order."""

    mesh: Mesh
    cells: list
    ndof: int


def build_basis(mesh: Mesh, dirsets) -> DgSpace:
    """Lay out dofs for per-cell direction sets.

    ``dirsets`` maps flat cell id -> (m, 2) array (or is a sequence in
    flat-id order).  Every cell needs at least one direction; duplicate
    directions are legal (separation is responsible for removing them).
    """
    cells = []
    offset = 0
    for flat in range(mesh.n_cells):
        dirs = dirsets[flat]
        dirs = np.asarray(dirs, dtype=float).reshape(-1, 2)
        if dirs.shape[0] == 0:
            raise ConfigurationError(f"cell {flat} has no basis directions")
        i, j = flat % mesh.n, flat // mesh.n
        cells.append(CellBasis(i, j, flat, dirs, offset))
        offset += 4 * dirs.shape[0]
    return DgSpace(mesh, cells, offset)


class EntryKernels:
    """Closed-form 4x4 entry blocks for one (mesh, omega, gamma) setting.

    All blocks are exact integrals; the only approximation anywhere is the
    per-cell Legendre expansion of the weight 1/c^2, whose residual is
    reported.  Legendre moment vectors are cached by effective frequency, so
    repeated direction pairs cost almost nothing.
    """

    def __init__(self, mesh: Mesh, omega: float, gamma: float, rho_degree: int = RHO_DEGREE):
        if omega < 0.0:
            raise ConfigurationError(f"omega must be nonnegative, got {omega}")
        self.mesh = mesh
        self.h = mesh.h
        self.omega = float(omega)
        self.gamma = float(gamma)
        self.rho_degree = rho_degree
        self._h1, self._h2, self._hp = _static_tables(rho_degree)
        self._kmax = rho_degree + 2
        self._moments: dict[float, np.ndarray] = {}
        self.moment_misses = 0

    def moments(self, eff: float) -> np.ndarray:
        """int P_k(t) e^{i eff t} dt for k = 0..rho_degree + 2, cached."""
        f = self._moments.get(eff)
        if f is None:
            f = legendre_osc_all(self._kmax, eff)
            self._moments[eff] = f
            self.moment_misses += 1
        return f

    # -- 1D building blocks -------------------------------------------------
    def _pair_moments(self, p, q):
        w, h = self.omega, self.h
        fx = self.moments(w * (q[0] - p[0]) * 0.5 * h)
        fy = self.moments(w * (q[1] - p[1]) * 0.5 * h)
        return fx, fy

    def _s2(self, f):
        return self._h2 @ f[:3]

    def _s1(self, f):
        return self._h1 @ f[:2]

    # -- volume blocks ------------------------------------------------------
    def mass_block(self, p, q) -> np.ndarray:
        """int_K psi_(q,j) conj(psi_(p,i)) dx as a 4x4 (i row, j col) block."""
        fx, fy = self._pair_moments(p, q)
        sx, sy = self._s2(fx), self._s2(fy)
        quarter = (0.5 * self.h) ** 2
        return quarter * sx[AX[:, None], AX[None, :]] * sy[AY[:, None], AY[None, :]]

    def weighted_mass_block(self, p, q, rho: np.ndarray) -> np.ndarray:
        """Same as mass_block with the cell's Legendre-expanded 1/c^2 weight."""
        fx, fy = self._pair_moments(p, q)
        wx = self._hp @ fx  # (R+1, 2, 2)
        wy = self._hp @ fy
        t = np.einsum("rs,rab,scd->abcd", rho, wx, wy)
        quarter = (0.5 * self.h) ** 2
        return quarter * t[AX[:, None], AX[None, :], AY[:, None], AY[None, :]]

    def stiffness_volume_block(self, p, q) -> np.ndarray:
        """int_K grad psi_(q,j) . conj(grad psi_(p,i)) dx."""
        w, h = self.omega, self.h
        fx, fy = self._pair_moments(p, q)
        sx, sy = self._s2(fx), self._s2(fy)
        s1x, s1y = self._s1(fx), self._s1(fy)
        si = _SIGN[:, None]
        sj = _SIGN[None, :]

        def combo(f0, s1, s2, pn, qn):
            return (
                si * sj * f0 / (2.0 * h)
                + 1j * w * qn * si * 0.5 * s1[None, :]
                - 1j * w * pn * sj * 0.5 * s1[:, None]
                + w * w * pn * qn * 0.5 * h * s2
            )

        cx = combo(fx[0], s1x, sx, p[0], q[0])
        cy = combo(fy[0], s1y, sy, p[1], q[1])
        ix, jx = AX[:, None], AX[None, :]
        iy, jy = AY[:, None], AY[None, :]
        half_h = 0.5 * self.h
        return cx[ix, jx] * (half_h * sy[iy, jy]) + (half_h * sx[ix, jx]) * cy[iy, jy]

    # -- face blocks ----------------------------------------------------------
    def face_block(self, axis: int, side_u: int, side_v: int, p, q) -> np.ndarray:
        """Flux and penalty coupling across one face of the periodic mesh.

        ``axis`` is the face normal direction (0: vertical face, 1:
        horizontal); ``side_u``/``side_v`` say which side of the face the
        trial/test cell sits on (0: lower coordinate, 1: higher).  Returns
        the 4x4 block adding into rows of the test cell (direction p) and
        columns of the trial cell (direction q).
        """
        w, h, gamma = self.omega, self.h, self.gamma
        vert_u = AX if axis == 0 else AY
        vert_t = AY if axis == 0 else AX
        pn, qn = p[axis], q[axis]
        pt, qt = p[1 - axis], q[1 - axis]

        ft = self.moments(w * (qt - pt) * 0.5 * h)
        st = self._s2(ft)
        tmom = 0.5 * h * st[vert_t[:, None], vert_t[None, :]]

        # trace of the normal hat at the face: 1 on face-adjacent vertices
        def trace(side):
            t_face = 1.0 if side == 0 else -1.0
            vals = np.array([0.5 * (1.0 - t_face), 0.5 * (1.0 + t_face)])  # hat_L, hat_R
            return vals

        xu = trace(side_u)[vert_u]
        xv = trace(side_v)[vert_u]
        dxu = _SIGN[vert_u] / h
        dxv = _SIGN[vert_u] / h
        nu_u = 1.0 if side_u == 0 else -1.0
        nu_v = 1.0 if side_v == 0 else -1.0
        sig_u = 0.5 * h if side_u == 0 else -0.5 * h
        sig_v = 0.5 * h if side_v == 0 else -0.5 * h
        phase = np.exp(1j * w * (qn * sig_u - pn * sig_v))

        t1 = -0.5 * nu_v * (dxu + 1j * w * qn * xu)[None, :] * xv[:, None]
        t2 = -0.5 * nu_u * xu[None, :] * (dxv - 1j * w * pn * xv)[:, None]
        t3 = (gamma / h) * nu_u * nu_v * xu[None, :] * xv[:, None]
        return (t1 + t2 + t3) * phase * tmom

    def load_vector(self, p, g) -> np.ndarray:
        """int_K e^{i w g.(x - x_K)} conj(psi_(p,i)) dx for the 4 vertices."""
        w, h = self.omega, self.h
        fx = self.moments(w * (g[0] - p[0]) * 0.5 * h)
        fy = self.moments(w * (g[1] - p[1]) * 0.5 * h)
        vx, vy = self._s1(fx), self._s1(fy)
        return (0.5 * h) ** 2 * vx[AX] * vy[AY]


def expand_weight(medium: Medium, mesh: Mesh, rho_degree: int = RHO_DEGREE):
    """Per-cell Legendre expansions of 1/c^2, flat-id order."""
    h = mesh.h

    def rho(x, y):
        c = medium.speed(x, y)
        return 1.0 / (c * c)

    out = []
    worst = 0.0
    for flat in range(mesh.n_cells):
        i, j = flat % mesh.n, flat // mesh.n
        exp = expand_legendre_2d(rho, i * h, j * h, h, max_degree=rho_degree)
        worst = max(worst, exp.residual)
        out.append(exp.coeffs)
    if worst > RHO_RESIDUAL_TOL:
        warnings.warn(
            f"weight expansion residual {worst:.3e} above {RHO_RESIDUAL_TOL:.0e}; "
            "entries remain usable but carry that quadrature error",
            stacklevel=2,
        )
    return out, worst


@dataclass
class AssembledSystem:
    """Matrices of the semi-discrete system Mc u_tt + A u = 0.

    ``m_blocks``/``mc_blocks`` are the per-cell diagonal blocks of the unit
    and weighted mass matrices (both block diagonal); ``a`` is the sparse
    stiffness.  When ``pod`` is set the matrices live in the reduced
    coordinates and ``pod.expand`` maps back to the enriched basis.
    """

    space: DgSpace
    omega: float
    gamma: float
    m_blocks: list
    mc_blocks: list
    a: sp.csr_matrix
    medium_name: str = ""
    rho_residual: float = 0.0
    pod: "PodTransform | None" = None

    @property
    def offsets(self) -> np.ndarray:
        if self.pod is not None:
            return self.pod.offsets
        return np.array([c.offset for c in self.space.cells], dtype=int)

    @property
    def block_sizes(self) -> np.ndarray:
        return np.array([b.shape[0] for b in self.m_blocks], dtype=int)

    @property
    def ndof(self) -> int:
        return int(np.sum(self.block_sizes))


def _cell_pairs_block(kernels, cell: CellBasis, entry_fn) -> np.ndarray:
    m = cell.n_dirs
    block = np.zeros((4 * m, 4 * m), dtype=complex)
    for a in range(m):
        for b in range(m):
            block[4 * a : 4 * a + 4, 4 * b : 4 * b + 4] = entry_fn(cell.dirs[a], cell.dirs[b])
    return block


def assemble_mass(space: DgSpace, kernels: EntryKernels) -> list:
    """Unit-weight mass blocks, one per cell."""
    return [_cell_pairs_block(kernels, c, kernels.mass_block) for c in space.cells]


def assemble_weighted_mass(space: DgSpace, kernels: EntryKernels, rho_coeffs: list) -> list:
    """Weighted (1/c^2) mass blocks from per-cell Legendre weight expansions."""
    out = []
    for c in space.cells:
        rho = rho_coeffs[c.flat]
        out.append(
            _cell_pairs_block(kernels, c, lambda p, q: kernels.weighted_mass_block(p, q, rho))
        )
    return out


def assemble_stiffness(space: DgSpace, kernels: EntryKernels) -> sp.csr_matrix:
    """Sparse SIPG stiffness over the periodic mesh (volume + face terms)."""
    mesh = space.mesh
    if mesh.n < 2:
        raise ConfigurationError("periodic stiffness needs N >= 2 (self-coupling faces)")
    rows, cols, vals = [], [], []

    def add_block(row0, col0, block):
        n_r, n_c = block.shape
        r = np.repeat(np.arange(row0, row0 + n_r), n_c)
        c = np.tile(np.arange(col0, col0 + n_c), n_r)
        rows.append(r)
        cols.append(c)
        vals.append(block.ravel())

    for cell in space.cells:
        add_block(cell.offset, cell.offset, _cell_pairs_block(kernels, cell, kernels.stiffness_volume_block))

    n = mesh.n
    for axis in (0, 1):
        for flat in range(mesh.n_cells):
            i, j = flat % n, flat // n
            if axis == 0:
                nb = mesh.flat_id((i + 1) % n, j)
            else:
                nb = mesh.flat_id(i, (j + 1) % n)
            lo, hi = space.cells[flat], space.cells[nb]
            pair_cells = (lo, hi)
            for side_v in (0, 1):
                cv = pair_cells[side_v]
                for side_u in (0, 1):
                    cu = pair_cells[side_u]
                    block = np.zeros((cv.size, cu.size), dtype=complex)
                    for a in range(cv.n_dirs):
                        for b in range(cu.n_dirs):
                            block[4 * a : 4 * a + 4, 4 * b : 4 * b + 4] = kernels.face_block(
                                axis, side_u, side_v, cv.dirs[a], cu.dirs[b]
                            )
                    add_block(cv.offset, cu.offset, block)

    a = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.ndof, space.ndof),
    ).tocsr()
    check_hermitian(a)
    return a


def check_hermitian(a: sp.spmatrix, tol: float = HERMITIAN_TOL) -> None:
    scale = max(1.0, abs(a).max())
    dev = abs(a - a.getH()).max()
    if dev > tol * scale:
        raise AssemblyIntegrityError(f"stiffness deviates from Hermitian by {dev / scale:.3e}")


def assemble_system(
    space: DgSpace,
    medium: Medium,
    omega: float,
    gamma: float = 10.0,
    rho_degree: int = RHO_DEGREE,
    kernels: EntryKernels | None = None,
) -> AssembledSystem:
    """Assemble M, Mc, and A for the given space and medium."""
    if kernels is None:
        kernels = EntryKernels(space.mesh, omega, gamma, rho_degree)
    rho_coeffs, residual = expand_weight(medium, space.mesh, rho_degree)
    m_blocks = assemble_mass(space, kernels)
    mc_blocks = assemble_weighted_mass(space, kernels, rho_coeffs)
    a = assemble_stiffness(space, kernels)
    return AssembledSystem(
        space=space,
        omega=kernels.omega,
        gamma=kernels.gamma,
        m_blocks=m_blocks,
        mc_blocks=mc_blocks,
        a=a,
        medium_name=medium.name,
        rho_residual=residual,
    )


# ---------------------------------------------------------------------------
# per-cell proper orthogonal decomposition of the weighted mass matrix
# ---------------------------------------------------------------------------


@dataclass
class PodTransform:
    """Per-cell orthonormal reduction maps and retained spectra."""

    maps: list  # V_K, shape (4 m_K, r_K), orthonormal columns
    eigenvalues: list  # retained eigenvalues, descending
    offsets: np.ndarray
    ndof: int

    def expand(self, coeffs: np.ndarray, space: DgSpace) -> np.ndarray:
        """Map reduced coefficients back to the enriched basis."""
        out = np.zeros(space.ndof, dtype=complex)
        for cell, v, off in zip(space.cells, self.maps, self.offsets):
            r = v.shape[1]
            out[cell.offset : cell.offset + cell.size] = v @ coeffs[off : off + r]
        return out

    def reduce(self, vec: np.ndarray, space: DgSpace) -> np.ndarray:
        """Project an enriched-basis vector into the reduced coordinates."""
        out = np.zeros(self.ndof, dtype=complex)
        for cell, v, off in zip(space.cells, self.maps, self.offsets):
            r = v.shape[1]
            out[off : off + r] = v.conj().T @ vec[cell.offset : cell.offset + cell.size]
        return out


def pod_truncate(system: AssembledSystem, eta: float) -> AssembledSystem:
    """Drop the per-cell Mc eigendirections carrying under eta of the trace.

    For each cell the Hermitian eigendecomposition of the Mc block is sorted
    descending and the minimal leading count with cumulative eigenvalue sum
    >= (1 - eta) * trace is retained.  M, Mc, and A are conjugated by the
    per-cell orthonormal maps; the transformed Mc blocks are the retained
    eigenvalue diagonals up to round-off.
    """
    if system.pod is not None:
        raise ConfigurationError("system is already POD-reduced")
    if not 0.0 < eta < 1.0:
        raise ConfigurationError(f"POD threshold must be in (0, 1), got {eta}")
    maps, spectra, offsets = [], [], []
    offset = 0
    for blk in system.mc_blocks:
        lam, vec = np.linalg.eigh(blk)
        lam, vec = lam[::-1], vec[:, ::-1]
        total = float(np.sum(lam))
        if lam[-1] < -1e-12 * max(lam[0], 0.0):
            raise AssemblyIntegrityError(
                f"weighted mass block is not positive semidefinite (min eig {lam[-1]:.3e})"
            )
        csum = np.cumsum(lam)
        keep = int(np.searchsorted(csum, (1.0 - eta) * total) + 1)
        keep = min(keep, len(lam))
        maps.append(vec[:, :keep])
        spectra.append(lam[:keep])
        offsets.append(offset)
        offset += keep
    pod = PodTransform(maps, spectra, np.array(offsets, dtype=int), offset)

    m_blocks = [v.conj().T @ m @ v for v, m in zip(maps, system.m_blocks)]
    mc_blocks = [v.conj().T @ m @ v for v, m in zip(maps, system.mc_blocks)]
    p = sp.block_diag([sp.csr_matrix(v) for v in maps], format="csr")
    a = (p.getH() @ system.a @ p).tocsr()
    return AssembledSystem(
        space=system.space,
        omega=system.omega,
        gamma=system.gamma,
        m_blocks=m_blocks,
        mc_blocks=mc_blocks,
        a=a,
        medium_name=system.medium_name,
        rho_residual=system.rho_residual,
        pod=pod,
    )


@dataclass
class ConditionReport:
    lambda_min: float
    lambda_max: float

    @property
    def cond(self) -> float:
        if self.lambda_min <= 0.0:
            return float("inf")
        return self.lambda_max / self.lambda_min


def estimate_condition(system: AssembledSystem) -> ConditionReport:
    """Spectral condition of the block-diagonal Mc (exact per-block eigh)."""
    lo, hi = np.inf, -np.inf
    for blk in system.mc_blocks:
        lam = np.linalg.eigvalsh(blk)
        lo = min(lo, float(lam[0]))
        hi = max(hi, float(lam[-1]))
    return ConditionReport(lo, hi)


# ---------------------------------------------------------------------------
# field evaluation
# ---------------------------------------------------------------------------


def evaluate_on_grid(system: AssembledSystem, coeffs: np.ndarray, n_grid: int) -> np.ndarray:
    """Evaluate the DG field at the uniform grid x_g = g / n_grid.

    Returns an (n_grid, n_grid) complex array indexed [ix, iy].  Grid points
    on shared cell edges are evaluated in the lower-index cell.
    """
    space = system.space
    if system.pod is not None:
        coeffs = system.pod.expand(coeffs, space)
    mesh = space.mesh
    h, w = mesh.h, system.omega
    g = np.arange(n_grid) / n_grid
    cell_of = np.minimum((g // h).astype(int), mesh.n - 1)
    k = np.flatnonzero((cell_of > 0) & (cell_of * h == g))
    cell_of[k] -= 1
    out = np.empty((n_grid, n_grid), dtype=complex)
    for cell in space.cells:
        gx = np.flatnonzero(cell_of == cell.i)
        gy = np.flatnonzero(cell_of == cell.j)
        if gx.size == 0 or gy.size == 0:
            continue
        tx = 2.0 * (g[gx] - (cell.i + 0.5) * h) / h
        ty = 2.0 * (g[gy] - (cell.j + 0.5) * h) / h
        hx = np.stack([0.5 * (1.0 - tx), 0.5 * (1.0 + tx)])  # (2, nx)
        hy = np.stack([0.5 * (1.0 - ty), 0.5 * (1.0 + ty)])
        acc = np.zeros((gx.size, gy.size), dtype=complex)
        coefs = coeffs[cell.offset : cell.offset + cell.size].reshape(cell.n_dirs, 4)
        for d in range(cell.n_dirs):
            p = cell.dirs[d]
            ex = np.exp(1j * w * p[0] * (g[gx] - (cell.i + 0.5) * h))
            ey = np.exp(1j * w * p[1] * (g[gy] - (cell.j + 0.5) * h))
            vx = coefs[d][:, None] * hx[AX] * ex[None, :]  # (4, nx)
            vy = hy[AY] * ey[None, :]  # (4, ny)
            acc += np.einsum("vx,vy->xy", vx, vy)
        out[np.ix_(gx, gy)] = acc
    return out


def evaluate_at_points(system: AssembledSystem, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the DG field at arbitrary points (wrapped periodically)."""
    space = system.space
    if system.pod is not None:
        coeffs = system.pod.expand(coeffs, space)
    mesh = space.mesh
    h, w = mesh.h, system.omega
    pts = np.asarray(points, dtype=float).reshape(-1, 2) % 1.0
    idx = np.minimum((pts // h).astype(int), mesh.n - 1)
    flat = idx[:, 1] * mesh.n + idx[:, 0]
    out = np.zeros(pts.shape[0], dtype=complex)
    for fid in np.unique(flat):
        cell = space.cells[fid]
        sel = np.flatnonzero(flat == fid)
        loc = pts[sel] - np.array([(cell.i + 0.5) * h, (cell.j + 0.5) * h])
        tx, ty = 2.0 * loc[:, 0] / h, 2.0 * loc[:, 1] / h
        hx = np.stack([0.5 * (1.0 - tx), 0.5 * (1.0 + tx)])
        hy = np.stack([0.5 * (1.0 - ty), 0.5 * (1.0 + ty)])
        coefs = coeffs[cell.offset : cell.offset + cell.size].reshape(cell.n_dirs, 4)
        for d in range(cell.n_dirs):
            p = cell.dirs[d]
            ph = np.exp(1j * w * (loc[:, 0] * p[0] + loc[:, 1] * p[1]))
            out[sel] += (coefs[d][:, None] * hx[AX] * hy[AY]).sum(axis=0) * ph
    return out


def dump_matrix_coo(stream, a: sp.spmatrix) -> None:
    """Coordinate text dump 'i j re im' of the nonzero entries."""
    coo = a.tocoo()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")
