"""Leapfrog time marching of the semi-discrete system Mc u_tt + A u = 0.

The scheme is the standard second-order central difference

    Mc (u^{n+1} - 2 u^n + u^{n-1}) = -dt^2 A u^n,

started from the mass projections u^0 = M^{-1} b(u(.,0)) and the forward
Euler half start u^1 = u^0 + dt M^{-1} b(u_t(.,0)).  Both mass matrices are
block diagonal per cell, so solves are batched dense inversions.  Stability
is checked two ways before marching: the sharp leapfrog bound
dt^2 lambda_max(Mc^{-1} A) <= 4 (power iteration) gates the run, and the
cruder spectral-norm bound dt ||A||_2 < 1 is reported alongside it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InstabilityError
from .assembly import AssembledSystem, EntryKernels

POWER_TOL = 1e-4
POWER_MAXIT = 500


class BlockDiagonal:
    """Block-diagonal operator with grouped batched matvec/solve."""

    def __init__(self, blocks, offsets):
        self.blocks = blocks
        self.offsets = np.asarray(offsets, dtype=int)
        sizes = np.array([b.shape[0] for b in blocks], dtype=int)
        self.ndof = int(np.sum(sizes))
        self._groups = []
        for s in np.unique(sizes):
            which = np.flatnonzero(sizes == s)
            idx = self.offsets[which][:, None] + np.arange(s)[None, :]
            stack = np.stack([blocks[k] for k in which])
            self._groups.append((idx, stack))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        for idx, stack in self._groups:
            out[idx] = np.einsum("kij,kj->ki", stack, v[idx])
        return out

    def inverse(self) -> "BlockDiagonal":
        inv_blocks = []
        k = 0
        for b in self.blocks:
            try:
                inv_blocks.append(np.linalg.inv(b))
            except np.linalg.LinAlgError as exc:
                raise InstabilityError(f"singular mass block at cell {k}") from exc
            k += 1
        return BlockDiagonal(inv_blocks, self.offsets)


def _block_op(system: AssembledSystem, which: str) -> BlockDiagonal:
    blocks = system.m_blocks if which == "m" else system.mc_blocks
    return BlockDiagonal(blocks, system.offsets)


@dataclass
class PlaneWaveData:
    """One WKB component A e^{i w (g . x + c0)} of the initial data.

    ``b_amp`` is the matching coefficient of the velocity trace: the full
    initial condition reads u(x, 0) = sum A_l e^{i w phi_l} and
    u_t(x, 0) = sum i w B_l e^{i w phi_l} with affine phases phi = g . x + c0.
    """

    amplitude: complex = 1.0
    b_amp: complex = 0.0
    grad: tuple = (1.0, 0.0)
    offset: float = 0.0


def _plane_wave_load(system: AssembledSystem, kernels: EntryKernels, comps, velocity: bool) -> np.ndarray:
    """Exact load vector of the initial trace against the enriched basis."""
    w = system.omega
    space = system.space
    b = np.zeros(space.ndof, dtype=complex)
    for comp in comps:
        g = np.asarray(comp.grad, dtype=float)
        amp = 1j * w * comp.b_amp if velocity else comp.amplitude
        if amp == 0.0:
            continue
        for cell in space.cells:
            xk = np.array([(cell.i + 0.5) * space.mesh.h, (cell.j + 0.5) * space.mesh.h])
            phase = amp * np.exp(1j * w * (g @ xk + comp.offset))
            for d in range(cell.n_dirs):
                o = cell.offset + 4 * d
                b[o : o + 4] += phase * kernels.load_vector(cell.dirs[d], g)
    return b


def _quadrature_load(system: AssembledSystem, func, order: int = 32) -> np.ndarray:
    """Gauss-quadrature load for general callable initial data f(x1, x2)."""
    from .assembly import AX, AY

    space = system.space
    h, w = space.mesh.h, system.omega
    t, wq = np.polynomial.legendre.leggauss(order)
    b = np.zeros(space.ndof, dtype=complex)
    ww = (np.outer(wq, wq) * (0.5 * h) ** 2).ravel()
    hx = np.stack([0.5 * (1.0 - t), 0.5 * (1.0 + t)])
    for cell in space.cells:
        cx, cy = (cell.i + 0.5) * h, (cell.j + 0.5) * h
        x = cx + 0.5 * h * t
        y = cy + 0.5 * h * t
        fv = np.asarray(func(x[:, None], y[None, :]), dtype=complex)
        fv = np.broadcast_to(fv, (order, order)).ravel()
        for d in range(cell.n_dirs):
            p = cell.dirs[d]
            ex = np.exp(-1j * w * p[0] * (x - cx))
            ey = np.exp(-1j * w * p[1] * (y - cy))
            psi = (hx[AX][:, :, None] * ex[None, :, None]) * (hx[AY][:, None, :] * ey[None, None, :])
            o = cell.offset + 4 * d
            b[o : o + 4] += (psi.reshape(4, -1) * (fv * ww)[None, :]).sum(axis=1)
    return b


def project_initial(system: AssembledSystem, data, dt: float, kernels: EntryKernels | None = None):
    """Mass-project the initial traces; returns the start pair (u^0, u^1).

    ``data`` is either a list of PlaneWaveData (exact oscillatory loads) or a
    pair of callables (u0(x1, x2), ut0(x1, x2)) integrated by dense Gauss
    quadrature.
    """
    if kernels is None:
        kernels = EntryKernels(system.space.mesh, system.omega, system.gamma)
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], PlaneWaveData):
        b0 = _plane_wave_load(system, kernels, data, velocity=False)
        b1 = _plane_wave_load(system, kernels, data, velocity=True)
    else:
        f0, f1 = data
        b0 = _quadrature_load(system, f0)
        b1 = _quadrature_load(system, f1)
    if system.pod is not None:
        b0 = system.pod.reduce(b0, system.space)
        b1 = system.pod.reduce(b1, system.space)
    m_inv = _block_op(system, "m").inverse()
    u0 = m_inv.matvec(b0)
    u1 = u0 + dt * m_inv.matvec(b1)
    return u0, u1


@dataclass
class StabilityReport:
    lambda_max: float
    a_norm: float
    dt: float

    @property
    def sharp_ok(self) -> bool:
        return self.dt * self.dt * self.lambda_max <= 4.0

    @property
    def classical_ok(self) -> bool:
        return self.dt * self.a_norm < 1.0


def _power_iteration(apply_op, inner, ndof: int, tol: float = POWER_TOL, maxit: int = POWER_MAXIT) -> float:
    rng = np.random.default_rng(0)
    v = rng.normal(size=ndof) + 1j * rng.normal(size=ndof)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxit):
        av = apply_op(v)
        new = inner(v, av)
        nrm = np.linalg.norm(av)
        if nrm == 0.0:
            return 0.0
        v = av / nrm
        if abs(new - lam) <= tol * max(abs(new), 1e-30):
            return abs(new)
        lam = new
    return abs(lam)


def check_stability(system: AssembledSystem, dt: float) -> StabilityReport:
    """Estimate the leapfrog stability quantities by power iteration."""
    mc_inv = _block_op(system, "mc").inverse()
    a = system.a
    mc = _block_op(system, "mc")

    def gen_apply(v):
        return mc_inv.matvec(a @ v)

    def gen_inner(v, av):
        # Rayleigh quotient of the Mc-symmetric pencil (A, Mc): av = Mc^-1 A v
        return float(np.real(np.vdot(v, a @ v) / np.vdot(v, mc.matvec(v))))

    lam = _power_iteration(gen_apply, gen_inner, system.ndof)
    a_norm = _power_iteration(lambda v: a @ v, lambda v, av: float(np.real(np.vdot(v, av))), system.ndof)
    return StabilityReport(lambda_max=lam, a_norm=a_norm, dt=dt)


@dataclass
class MarchResult:
    final: np.ndarray
    previous: np.ndarray
    snapshots: dict = field(default_factory=dict)
    stability: StabilityReport | None = None
    n_steps: int = 0


def march(
    system: AssembledSystem,
    u0: np.ndarray,
    u1: np.ndarray,
    dt: float,
    t_final: float,
    snapshot_steps=(),
    verify_stability: bool = True,
) -> MarchResult:
    """Run leapfrog to t_final; snapshots record coefficients at step indices.

    Raises InstabilityError when the sharp bound dt^2 lambda_max <= 4 fails
    or the state turns non-finite or grows without bound mid-run.  Unbounded
    growth indicates an indefinite stiffness matrix (lost interior-penalty
    coercivity), which the spectral bound alone cannot see.
    """
    if dt <= 0.0:
        raise ConfigurationError(f"time step must be positive, got {dt}")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigurationError(f"dt = {dt} does not divide t_final = {t_final}")
    report = None
    if verify_stability:
        report = check_stability(system, dt)
        if not report.sharp_ok:
            raise InstabilityError(
                f"dt^2 lambda_max = {dt * dt * report.lambda_max:.3e} exceeds the leapfrog bound 4"
            )
    mc_inv = _block_op(system, "mc").inverse()
    a = system.a
    snapshot_steps = set(int(s) for s in snapshot_steps)
    snaps = {}
    u_prev = u0.astype(complex)
    u_curr = u1.astype(complex)
    scale0 = max(float(np.linalg.norm(u_prev)), float(np.linalg.norm(u_curr)), 1e-300)
    if 0 in snapshot_steps:
        snaps[0] = u_prev.copy()
    if 1 in snapshot_steps:
        snaps[1] = u_curr.copy()
    for step in range(2, n_steps + 1):
        u_next = 2.0 * u_curr - u_prev - dt * dt * mc_inv.matvec(a @ u_curr)
        u_prev, u_curr = u_curr, u_next
        if step in snapshot_steps:
            snaps[step] = u_curr.copy()
        if step % 100 == 0 or step == n_steps:
            if not np.all(np.isfinite(u_curr)):
                raise InstabilityError(f"non-finite field at step {step}")
            if float(np.linalg.norm(u_curr)) > 1e6 * scale0:
                raise InstabilityError(
                    f"field grew by more than 1e6 at step {step}; the stiffness "
                    "matrix is likely indefinite (penalty too small for this basis)"
                )
    return MarchResult(final=u_curr, previous=u_prev, snapshots=snaps, stability=report, n_steps=n_steps)


def leapfrog_energy(system: AssembledSystem, u_prev: np.ndarray, u_curr: np.ndarray, dt: float) -> float:
    """Discrete energy ||(u^{n+1}-u^n)/dt||_Mc^2 + Re<A u^{n+1}, u^n>.

    Exactly conserved by the leapfrog recurrence in exact arithmetic.
    """
    mc = _block_op(system, "mc")
    v = (u_curr - u_prev) / dt
    kinetic = float(np.real(np.vdot(v, mc.matvec(v))))
    potential = float(np.real(np.vdot(u_curr, system.a @ u_prev)))
    return kinetic + potential
