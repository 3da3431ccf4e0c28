"""Independent slow-path oracles used by the test suite.

Everything here recomputes quantities the library obtains through closed
forms or factorized kernels, using generic tools instead: dense tensor
Gauss-Legendre quadrature for matrix entries, adaptive quadrature for
oscillatory moments, and a high-order adaptive ODE integrator for rays.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate

from raydg.assembly import AX, AY


def gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def quad_legendre_moment(k: int, omega: float) -> complex:
    """Adaptive-quadrature value of int_{-1}^{1} P_k(x) e^{i omega x} dx."""
    pk = np.polynomial.legendre.Legendre.basis(k)
    if abs(omega) < 1e-12:
        return complex(integrate.quad(pk, -1.0, 1.0, epsabs=1e-14)[0])
    re = integrate.quad(pk, -1.0, 1.0, weight="cos", wvar=omega,
                        epsabs=1e-13, limit=400)[0]
    im = integrate.quad(pk, -1.0, 1.0, weight="sin", wvar=omega,
                        epsabs=1e-13, limit=400)[0]
    return re + 1j * im


def quad_poly_moment(coeffs, a: float, b: float, omega: float, x0: float | None = None) -> complex:
    """Adaptive-quadrature value of int_a^b poly(x) e^{i omega (x - x0)} dx."""
    if x0 is None:
        x0 = 0.5 * (a + b)
    poly = np.polynomial.Polynomial(coeffs)
    if abs(omega) < 1e-12:
        return complex(integrate.quad(poly, a, b, epsabs=1e-14)[0])
    f = lambda x: poly(x)  # noqa: E731
    re = integrate.quad(f, a, b, weight="cos", wvar=omega, epsabs=1e-13, limit=400)[0]
    im = integrate.quad(f, a, b, weight="sin", wvar=omega, epsabs=1e-13, limit=400)[0]
    return (re + 1j * im) * np.exp(-1j * omega * x0)


def basis_vals(cell, omega, xs, ys, h, shift=(0.0, 0.0)):
    """Values and gradients of every basis function of a cell at points.

    ``shift`` evaluates the basis of a periodic image of the cell
    (centroid translated by the shift), needed on wrap-around faces.
    """
    cx = (cell.i + 0.5) * h + shift[0]
    cy = (cell.j + 0.5) * h + shift[1]
    tx, ty = 2.0 * (xs - cx) / h, 2.0 * (ys - cy) / h
    hx = np.stack([0.5 * (1 - tx), 0.5 * (1 + tx)])
    hy = np.stack([0.5 * (1 - ty), 0.5 * (1 + ty)])
    dhx = np.stack([np.full_like(tx, -1.0 / h), np.full_like(tx, 1.0 / h)])
    dhy = np.stack([np.full_like(ty, -1.0 / h), np.full_like(ty, 1.0 / h)])
    vals, gradx, grady = [], [], []
    for d in range(cell.n_dirs):
        p = cell.dirs[d]
        ph = np.exp(1j * omega * (p[0] * (xs - cx) + p[1] * (ys - cy)))
        for v in range(4):
            f = hx[AX[v]] * hy[AY[v]]
            vals.append(f * ph)
            gradx.append((dhx[AX[v]] * hy[AY[v]] + 1j * omega * p[0] * f) * ph)
            grady.append((hx[AX[v]] * dhy[AY[v]] + 1j * omega * p[1] * f) * ph)
    return np.array(vals), np.array(gradx), np.array(grady)


def oracle_mass(space, omega, weight=None, order: int = 50) -> np.ndarray:
    """Dense block-diagonal (weighted) mass matrix by tensor quadrature."""
    mesh = space.mesh
    h = mesh.h
    out = np.zeros((space.ndof, space.ndof), complex)
    t, w = gauss(order)
    for cell in space.cells:
        x = (cell.i + 0.5) * h + 0.5 * h * t
        y = (cell.j + 0.5) * h + 0.5 * h * t
        X, Y = np.meshgrid(x, y, indexing="ij")
        W = (np.outer(w, w) * (h / 2.0) ** 2).ravel()
        if weight is not None:
            W = W * np.asarray(weight(X, Y), dtype=float).ravel()
        V, _, _ = basis_vals(cell, omega, X.ravel(), Y.ravel(), h)
        blk = np.einsum("ip,jp,p->ij", np.conj(V), V, W)
        o = cell.offset
        out[o : o + cell.size, o : o + cell.size] = blk
    return out


def oracle_load(space, omega, comps, order: int = 50) -> np.ndarray:
    """Dense load vector int f conj(v) for f = sum amp e^{i w (g.x + c0)}."""
    mesh = space.mesh
    h = mesh.h
    out = np.zeros(space.ndof, complex)
    t, w = gauss(order)
    for cell in space.cells:
        x = (cell.i + 0.5) * h + 0.5 * h * t
        y = (cell.j + 0.5) * h + 0.5 * h * t
        X, Y = np.meshgrid(x, y, indexing="ij")
        W = (np.outer(w, w) * (h / 2.0) ** 2).ravel()
        f = np.zeros(X.size, complex)
        for amp, g, c0 in comps:
            f += amp * np.exp(1j * omega * (g[0] * X.ravel() + g[1] * Y.ravel() + c0))
        V, _, _ = basis_vals(cell, omega, X.ravel(), Y.ravel(), h)
        out[cell.offset : cell.offset + cell.size] = np.einsum(
            "ip,p,p->i", np.conj(V), f, W
        )
    return out


def oracle_stiffness(space, omega, gamma, order: int = 50) -> np.ndarray:
    """Dense interior-penalty stiffness by quadrature on the periodic mesh."""
    mesh = space.mesh
    h, n = mesh.h, mesh.n
    A = np.zeros((space.ndof, space.ndof), complex)
    t, w = gauss(order)

    for cell in space.cells:
        x = (cell.i + 0.5) * h + 0.5 * h * t
        y = (cell.j + 0.5) * h + 0.5 * h * t
        X, Y = np.meshgrid(x, y, indexing="ij")
        W = (np.outer(w, w) * (h / 2.0) ** 2).ravel()
        _, gx, gy = basis_vals(cell, omega, X.ravel(), Y.ravel(), h)
        blk = np.einsum("ip,jp,p->ij", np.conj(gx), gx, W)
        blk += np.einsum("ip,jp,p->ij", np.conj(gy), gy, W)
        o = cell.offset
        A[o : o + cell.size, o : o + cell.size] += blk

    for axis in (0, 1):
        for flat in range(mesh.n_cells):
            i, j = flat % n, flat // n
            ni, nj = ((i + 1) % n, j) if axis == 0 else (i, (j + 1) % n)
            cl = space.cells[flat]
            cr = space.cells[nj * n + ni]
            if axis == 0:
                ys_ = j * h + 0.5 * h * (t + 1.0)
                xs_ = np.full_like(ys_, (i + 1) * h)
                shift = ((i + 1) // n * 1.0, 0.0)
                nl = np.array([1.0, 0.0])
            else:
                xs_ = i * h + 0.5 * h * (t + 1.0)
                ys_ = np.full_like(xs_, (j + 1) * h)
                shift = (0.0, (j + 1) // n * 1.0)
                nl = np.array([0.0, 1.0])
            wl = w * (h / 2.0)
            Vl, GlX, GlY = basis_vals(cl, omega, xs_, ys_, h)
            Vr, GrX, GrY = basis_vals(cr, omega, xs_, ys_, h, shift=shift)
            Gl = GlX * nl[0] + GlY * nl[1]
            Gr = GrX * nl[0] + GrY * nl[1]
            cells_ = (cl, cr)
            V = (Vl, Vr)
            G = (Gl, Gr)
            sgn = (1.0, -1.0)  # outward normal of each side against nl
            for a_ in range(2):
                for b_ in range(2):
                    cv, cu = cells_[a_], cells_[b_]
                    blk = np.einsum("ip,jp,p->ij", np.conj(V[a_]), -0.5 * sgn[a_] * G[b_], wl)
                    blk += np.einsum("ip,jp,p->ij", np.conj(-0.5 * sgn[b_] * G[a_]), V[b_], wl)
                    blk += (gamma / h) * sgn[a_] * sgn[b_] * np.einsum(
                        "ip,jp,p->ij", np.conj(V[a_]), V[b_], wl
                    )
                    A[cv.offset : cv.offset + cv.size, cu.offset : cu.offset + cu.size] += blk
    return A


def ray_rhs(medium):
    def rhs(_t, state):
        x1, x2, p1, p2 = state
        c = float(medium.speed(x1, x2))
        g1, g2 = medium.grad_speed(x1, x2)
        mag = float(np.hypot(p1, p2))
        return [c * c * p1, c * c * p2, -mag * float(g1), -mag * float(g2)]

    return rhs


def integrate_ray(medium, state0, t_final: float) -> np.ndarray:
    """High-order adaptive integration of one ray as an independent check."""
    sol = integrate.solve_ivp(
        ray_rhs(medium),
        (0.0, t_final),
        np.asarray(state0, dtype=float),
        method="DOP853",
        rtol=1e-12,
        atol=1e-13,
        dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"oracle ray integration failed: {sol.message}")
    return sol.y[:, -1]
