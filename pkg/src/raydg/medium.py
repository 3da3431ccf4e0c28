"""Wave-speed fields on the periodic unit square and the uniform mesh.

The solver works on Omega = (0,1)^2 with periodic boundary conditions.  A
medium supplies the smooth speed c(x) > 0 and its gradient; both are assumed
1-periodic in each coordinate.  Two smooth benchmark media are built in: a
Gaussian-type lens bump and a horizontally layered sinusoidal profile, plus
constant media for calibration runs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError


@dataclass
class Medium:
    """Smooth periodic wave speed c(x1, x2) with analytic gradient.

    ``speed`` and ``grad_speed`` accept scalars or broadcastable arrays and
    evaluate elementwise; ``grad_speed`` returns the pair (dc/dx1, dc/dx2).
    """

    name: str
    speed: Callable
    grad_speed: Callable
    params: dict = field(default_factory=dict)

    def speed_range(self, n: int = 512) -> tuple[float, float]:
        """Min/max of c sampled on an n x n periodic grid."""
        t = np.arange(n) / n
        x, y = np.meshgrid(t, t, indexing="ij")
        c = self.speed(x, y)
        return float(np.min(c)), float(np.max(c))


def _lens_exponent(x1, x2):
    return -150.0 + 300.0 * (x1 + x2) - 240.0 * x1 * x2 - 180.0 * (x1**2 + x2**2)


def _make_lens() -> Medium:
    # Bump is centered at (0.5, 0.5) where the exponent vanishes; it decays to
    # ~e^-150 at the boundary, so the field is periodic to machine precision.
    def speed(x1, x2):
        return 1.0 + 0.2 * np.exp(_lens_exponent(x1, x2))

    def grad_speed(x1, x2):
        e = 0.2 * np.exp(_lens_exponent(x1, x2))
        g1 = e * (300.0 - 240.0 * x2 - 360.0 * x1)
        g2 = e * (300.0 - 240.0 * x1 - 360.0 * x2)
        return g1, g2

    return Medium("c1", speed, grad_speed)


def _make_layered() -> Medium:
    def speed(x1, x2):
        return 0.2 * np.sin(4.0 * np.pi * x2) + 1.0

    def grad_speed(x1, x2):
        g2 = 0.8 * np.pi * np.cos(4.0 * np.pi * x2)
        return np.zeros_like(np.asarray(x1, dtype=float)), g2 * np.ones_like(np.asarray(x1, dtype=float))

    return Medium("c2", speed, grad_speed)


def make_constant(value: float) -> Medium:
    if not value > 0.0:
        raise ConfigurationError(f"constant medium needs positive speed, got {value}")

    def speed(x1, x2):
        return np.full_like(np.asarray(x1, dtype=float), value)

    def grad_speed(x1, x2):
        z = np.zeros_like(np.asarray(x1, dtype=float))
        return z, z.copy()

    return Medium(f"constant({value:g})", speed, grad_speed, params={"value": value})


def make_medium(name: str) -> Medium:
    """Build a medium from its config name: c1, c2, or constant(<value>)."""
    key = name.strip().lower()
    if key == "c1":
        return _make_lens()
    if key == "c2":
        return _make_layered()
    if key == "constant":
        return make_constant(1.0)
    if key.startswith("constant(") and key.endswith(")"):
        try:
            value = float(key[len("constant(") : -1])
        except ValueError as exc:
            raise ConfigurationError(f"bad constant medium spec: {name!r}") from exc
        return make_constant(value)
    raise ConfigurationError(f"unknown medium: {name!r}")


@dataclass(frozen=True)
class Mesh:
    """Uniform N x N Cartesian mesh of the periodic unit square.

    Cell (i, j), 0-based, covers [i*h, (i+1)*h] x [j*h, (j+1)*h] with
    h = 1/N.  Flat cell ids scan x fastest: flat = j*N + i.
    """

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"mesh size must be >= 1, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    def flat_id(self, i: int, j: int) -> int:
        return j * self.n + i

    def centroid(self, i: int, j: int) -> np.ndarray:
        return np.array([(i + 0.5) * self.h, (j + 0.5) * self.h])

    def centroids(self) -> np.ndarray:
        """All cell centroids, shape (n_cells, 2), in flat-id order."""
        t = (np.arange(self.n) + 0.5) * self.h
        x, y = np.meshgrid(t, t, indexing="xy")
        return np.column_stack([x.ravel(), y.ravel()])


def wrap_point(x) -> np.ndarray:
    """Map coordinates into the fundamental domain [0, 1)."""
    return np.asarray(x, dtype=float) % 1.0


def locate_cell(mesh: Mesh, x) -> tuple[int, int]:
    """Cell (i, j) containing point x after periodic wrapping.

    Points on a shared edge belong to the cell having that edge on its
    upper side, i.e. the lower-index cell.
    """
    xw = wrap_point(x)
    idx = []
    for coord in xw:
        k = int(np.floor(coord * mesh.n))
        if k > 0 and k * mesh.h == coord:
            k -= 1
        idx.append(min(k, mesh.n - 1))
    return idx[0], idx[1]
