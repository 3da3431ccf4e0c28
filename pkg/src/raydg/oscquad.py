"""Closed-form oscillatory moments of polynomials against plane waves.

Every matrix entry of the enriched scheme reduces to 1D integrals of the form
int_a^b poly(x) e^{i w (x - x0)} dx.  After an affine map to [-1, 1] and
re-expansion of the polynomial in Legendre polynomials these follow from

    int_{-1}^{1} P_k(x) e^{i w x} dx = i^k sqrt(2 pi / w) J_{k+1/2}(w)
                                     = 2 i^k j_k(w),

with j_k the spherical Bessel function of the first kind.  The j_k are
generated by Miller's backward recurrence (forward recurrence is unstable for
k > w) and by a Maclaurin series for small |w|, so the moments are accurate
to near machine precision uniformly in w, including w = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

MAX_ORDER = 64
OMEGA_SWITCH = 0.5
_IPOW = np.array([1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j])


def _jn_series(kmax: int, w: float) -> np.ndarray:
    """Maclaurin series for j_0..j_kmax, accurate for |w| < ~1."""
    out = np.empty(kmax + 1)
    half_w2 = 0.5 * w * w
    for k in range(kmax + 1):
        # leading factor w^k / (2k+1)!!, built iteratively to avoid overflow
        term = 1.0
        for i in range(1, k + 1):
            term *= w / (2 * i + 1)
        total = term
        m = 0
        while term != 0.0 and abs(term) > 1e-18 * abs(total):
            m += 1
            term *= -half_w2 / (m * (2 * k + 2 * m + 1))
            total += term
        out[k] = total
    return out


def _jn_miller(kmax: int, w: float) -> np.ndarray:
    """Backward (Miller) recurrence for j_0..j_kmax at w >= OMEGA_SWITCH.

    Starts the three-term recurrence well above the turning point n ~ w with
    an arbitrary tail and rescales against the closed forms for j_0 and j_1,
    picking the better conditioned of the two (j_0 vanishes near w = m*pi).
    The start offset grows like w^(1/3) because the unwanted solution decays
    only at the Airy rate through the transition zone n - w = O(w^(1/3)).
    """
    start = kmax + 20 + int(math.ceil(w + 10.0 * w ** (1.0 / 3.0)))
    f_hi = 0.0
    f_lo = 1e-300
    raw = np.zeros(kmax + 1)
    for n in range(start, 0, -1):
        f_prev = (2 * n + 1) / w * f_lo - f_hi
        f_hi, f_lo = f_lo, f_prev
        if n - 1 <= kmax:
            raw[n - 1] = f_prev
        if abs(f_lo) > 1e250:
            f_hi *= 1e-250
            f_lo *= 1e-250
            raw *= 1e-250
    j0 = math.sin(w) / w
    j1 = math.sin(w) / (w * w) - math.cos(w) / w
    if abs(f_lo) >= abs(f_hi):
        scale = j0 / f_lo
    else:
        scale = j1 / f_hi
    return raw * scale


def spherical_jn_seq(kmax: int, w: float) -> np.ndarray:
    """j_0(w)..j_kmax(w) for w >= 0."""
    if w < OMEGA_SWITCH:
        return _jn_series(kmax, w)
    return _jn_miller(kmax, w)


def legendre_osc_all(kmax: int, omega: float) -> np.ndarray:
    """Moments int_{-1}^{1} P_k(x) e^{i omega x} dx for k = 0..kmax.

    Valid for 0 <= kmax <= MAX_ORDER and any real omega; obeys
    value(-omega) = conj(value(omega)).
    """
    if not 0 <= kmax <= MAX_ORDER:
        raise ConfigurationError(f"Legendre moment order out of range: {kmax}")
    if not np.isfinite(omega):
        raise ConfigurationError(f"non-finite oscillation frequency: {omega}")
    jn = spherical_jn_seq(kmax, abs(omega))
    vals = 2.0 * _IPOW[np.arange(kmax + 1) % 4] * jn
    if omega < 0.0:
        vals = np.conj(vals)
    return vals


def legendre_osc(k: int, omega: float) -> complex:
    """Single moment int_{-1}^{1} P_k(x) e^{i omega x} dx."""
    return complex(legendre_osc_all(k, omega)[k])


def osc_moment_1d(coeffs, a: float, b: float, omega: float, x0: float | None = None) -> complex:
    """int_a^b poly(x) e^{i omega (x - x0)} dx for a monomial-coefficient poly.

    ``coeffs`` are ascending monomial coefficients in the original variable x.
    The phase reference x0 defaults to the interval midpoint.
    """
    if not b > a:
        raise ConfigurationError(f"empty moment interval [{a}, {b}]")
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    if x0 is None:
        x0 = mid
    shifted = np.polynomial.Polynomial(np.atleast_1d(np.asarray(coeffs, dtype=complex)))(
        np.polynomial.Polynomial([mid, half])
    )
    leg = np.polynomial.legendre.poly2leg(shifted.coef)
    f = legendre_osc_all(len(leg) - 1, omega * half)
    return complex(half * np.exp(1j * omega * (mid - x0)) * np.dot(leg, f))


@dataclass
class LegendreExpansion:
    """Tensor Legendre coefficients of a scalar field on one mesh cell.

    ``coeffs[r, s]`` multiplies P_r(t1) P_s(t2) in the cell's local [-1, 1]^2
    coordinates.  ``residual`` estimates the L1 truncation error on the cell.
    """

    coeffs: np.ndarray
    residual: float


def expand_legendre_2d(
    func,
    x_lo: float,
    y_lo: float,
    h: float,
    max_degree: int = 8,
    quad_order: int | None = None,
) -> LegendreExpansion:
    """Project func(x1, x2) onto tensor Legendre polynomials on one cell.

    Uses tensor Gauss-Legendre quadrature of order >= 2*max_degree + 2 so all
    retained coefficients are exact for polynomial data.  The residual is an
    L1 estimate |f - expansion| integrated over the cell, sampled on an
    independent uniform grid.
    """
    if max_degree < 0:
        raise ConfigurationError(f"negative expansion degree: {max_degree}")
    if quad_order is None:
        quad_order = 2 * max_degree + 2
    t, w = np.polynomial.legendre.leggauss(quad_order)
    x = x_lo + 0.5 * h * (t + 1.0)
    y = y_lo + 0.5 * h * (t + 1.0)
    fvals = np.broadcast_to(
        np.asarray(func(x[:, None], y[None, :]), dtype=float), (quad_order, quad_order)
    )
    vander = np.polynomial.legendre.legvander(t, max_degree)  # (q, deg+1)
    norms = (2.0 * np.arange(max_degree + 1) + 1.0) / 2.0
    wc = w[:, None] * vander
    coeffs = norms[:, None] * norms[None, :] * (wc.T @ fvals @ wc)

    ts = np.linspace(-1.0, 1.0, 33)
    xs = x_lo + 0.5 * h * (ts + 1.0)
    ys = y_lo + 0.5 * h * (ts + 1.0)
    fs = np.broadcast_to(np.asarray(func(xs[:, None], ys[None, :]), dtype=float), (33, 33))
    approx = np.polynomial.legendre.legval2d(*np.meshgrid(ts, ts, indexing="ij"), coeffs)
    residual = float(np.mean(np.abs(fs - approx)) * h * h)
    return LegendreExpansion(coeffs=coeffs, residual=residual)
