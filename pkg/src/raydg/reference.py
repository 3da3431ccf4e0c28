"""Pseudospectral reference solution and the relative L2 error measure.

The reference integrates u_tt = c(x)^2 Lap u on the periodic unit square
with an FFT Laplacian (exact for band-limited fields) and leapfrog in time,
started with a second-order Taylor step.  The default grid resolves the
highest benchmark frequency with dozens of points per wavelength and the
default step sits well inside the stability limit; halving the step and
doubling the grid is the standard self-convergence check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InstabilityError
from .assembly import AssembledSystem, evaluate_on_grid
from .marching import PlaneWaveData
from .medium import Medium


def default_resolution(omega: float) -> int:
    """Power-of-two grid with >= 16 points per wavelength, at least 256."""
    need = int(np.ceil(16.0 * omega / (2.0 * np.pi)))
    n = 256
    while n < need:
        n *= 2
    return n


def spectral_laplacian(u: np.ndarray) -> np.ndarray:
    """FFT Laplacian on the periodic unit square; exact for trig polynomials."""
    n = u.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    return np.fft.ifft2(-k2 * np.fft.fft2(u))


def _grid(n: int):
    g = np.arange(n) / n
    return np.meshgrid(g, g, indexing="ij")


def _initial_traces(omega: float, data, n: int):
    x, y = _grid(n)
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], PlaneWaveData):
        u0 = np.zeros((n, n), dtype=complex)
        ut0 = np.zeros((n, n), dtype=complex)
        for comp in data:
            phase = np.exp(1j * omega * (comp.grad[0] * x + comp.grad[1] * y + comp.offset))
            u0 += comp.amplitude * phase
            ut0 += 1j * omega * comp.b_amp * phase
        return u0, ut0
    f0, f1 = data
    return (
        np.asarray(f0(x, y), dtype=complex),
        np.asarray(f1(x, y), dtype=complex),
    )


@dataclass
class ReferenceField:
    """Reference solution samples on the uniform grid x_g = g / n."""

    n: int
    omega: float
    t: float
    values: np.ndarray  # (n, n) complex, indexed [ix, iy]


def reference_run(
    medium: Medium,
    omega: float,
    data,
    t_final: float,
    n: int | None = None,
    dt: float | None = None,
) -> ReferenceField:
    """Integrate the wave equation to t_final on an n x n spectral grid."""
    if n is None:
        n = default_resolution(omega)
    if dt is None:
        dt = 1.0 / (8.0 * n)
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ConfigurationError(f"reference dt = {dt} does not divide t_final = {t_final}")
    x, y = _grid(n)
    c2 = np.asarray(medium.speed(x, y), dtype=float) ** 2
    c2 = np.broadcast_to(c2, (n, n))
    cmax = float(np.sqrt(c2.max()))
    # sharp leapfrog limit for the spectral operator: dt^2 c^2 2 pi^2 n^2 <= 4
    if dt * dt * cmax * cmax * 2.0 * np.pi * np.pi * n * n > 4.0:
        raise InstabilityError(f"reference step {dt} unstable on grid {n}")

    u0, ut0 = _initial_traces(omega, data, n)
    u_prev = u0
    u_curr = u0 + dt * ut0 + 0.5 * dt * dt * c2 * spectral_laplacian(u0)
    for step in range(2, n_steps + 1):
        u_next = 2.0 * u_curr - u_prev + dt * dt * c2 * spectral_laplacian(u_curr)
        u_prev, u_curr = u_curr, u_next
        if step % 256 == 0 and not np.all(np.isfinite(u_curr)):
            raise InstabilityError(f"reference run blew up at step {step}")
    if not np.all(np.isfinite(u_curr)):
        raise InstabilityError("reference run produced non-finite values")
    return ReferenceField(n=n, omega=omega, t=t_final, values=u_curr)


def self_convergence(medium: Medium, omega: float, data, t_final: float, n: int, dt: float) -> float:
    """Relative percent change when doubling the grid and halving the step."""
    coarse = reference_run(medium, omega, data, t_final, n, dt)
    fine = reference_run(medium, omega, data, t_final, 2 * n, 0.5 * dt)
    sub = fine.values[::2, ::2]
    return 100.0 * float(np.linalg.norm(sub - coarse.values) / np.linalg.norm(sub))


def relative_l2_error(system: AssembledSystem, coeffs: np.ndarray, ref: ReferenceField) -> float:
    """Percent discrete L2 distance between the DG field and the reference."""
    uh = evaluate_on_grid(system, coeffs, ref.n)
    denom = np.linalg.norm(ref.values)
    if denom == 0.0:
        raise ConfigurationError("reference field is identically zero")
    return 100.0 * float(np.linalg.norm(uh - ref.values) / denom)
