"""Binary formats for sampled fields and solution-coefficient snapshots.

Both formats are versioned, little-endian, and dense:

* field file    -- magic ``RAYDGF1\\0``, ``<u4`` grid size n, ``<f8`` omega,
  ``<f8`` time, then ``n*n`` complex values (``<c16``: re, im float64 pairs)
  in row-major order, rows indexed by x1.
* coefficient file -- magic ``RAYDGC1\\0``, ``<u4`` mesh size N, ``<f8``
  omega, ``<f8`` time, ``<u4`` dof count, then the coefficient vector as
  ``<c16``.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import StoreIntegrityError

FIELD_MAGIC = b"RAYDGF1\x00"
COEFF_MAGIC = b"RAYDGC1\x00"


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise StoreIntegrityError("binary file truncated")
    return data


def write_field(path, values: np.ndarray, omega: float, t: float) -> None:
    values = np.asarray(values, dtype=complex)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"field must be square, got shape {values.shape}")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<Idd", values.shape[0], float(omega), float(t)))
        fh.write(np.ascontiguousarray(values, dtype="<c16").tobytes())


def read_field(path):
    """Returns (values, omega, t)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 8) != FIELD_MAGIC:
            raise StoreIntegrityError("bad magic; not a sampled-field file")
        n, omega, t = struct.unpack("<Idd", _read_exact(fh, 20))
        flat = np.frombuffer(_read_exact(fh, 16 * n * n), dtype="<c16")
        return flat.reshape(n, n).copy(), omega, t


def write_coeffs(path, n_mesh: int, omega: float, t: float, coeffs: np.ndarray) -> None:
    coeffs = np.asarray(coeffs, dtype=complex).ravel()
    with open(path, "wb") as fh:
        fh.write(COEFF_MAGIC)
        fh.write(struct.pack("<IddI", int(n_mesh), float(omega), float(t), coeffs.size))
        fh.write(np.ascontiguousarray(coeffs, dtype="<c16").tobytes())


def read_coeffs(path):
    """Returns (coeffs, n_mesh, omega, t)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 8) != COEFF_MAGIC:
            raise StoreIntegrityError("bad magic; not a coefficient snapshot")
        n_mesh, omega, t, ndof = struct.unpack("<IddI", _read_exact(fh, 24))
        coeffs = np.frombuffer(_read_exact(fh, 16 * ndof), dtype="<c16").copy()
        return coeffs, n_mesh, omega, t
