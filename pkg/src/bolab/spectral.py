"""Periodic Fourier-collocation toolkit: grids, fields, spectral multipliers,
quadrature, Sobolev norms and field file I/O.

Every operator accepts either a :class:`Field` (grid travels with the data)
or a bare ``ndarray`` plus ``grid=``; bare arrays may carry leading batch
axes, the transform always acts on the last axis.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L, L) with n collocation points."""

    L: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 8 and self.n % 2 == 0):
            raise ValueError(f"point count must be an even integer >= 8, got {self.n!r}")
        if not (math.isfinite(self.L) and self.L > 0):
            raise ValueError(f"half length must be finite and positive, got {self.L!r}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def nyquist(self) -> float:
        return math.pi * self.n / (2.0 * self.L)

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.h * np.arange(self.n)
        x.setflags(write=False)
        return x

    @cached_property
    def xi(self) -> np.ndarray:
        """Wavenumbers in FFT order; the Nyquist entry is stored as +pi*n/(2L)."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        k[self.n // 2] = self.n // 2
        xi = (math.pi / self.L) * k
        xi.setflags(write=False)
        return xi

    @cached_property
    def rxi(self) -> np.ndarray:
        """Wavenumbers in rfft order (0 .. Nyquist)."""
        xi = (math.pi / self.L) * np.arange(self.n // 2 + 1)
        xi.setflags(write=False)
        return xi

    def spectrum_axes(self, real: bool) -> tuple[np.ndarray, np.ndarray]:
        """(xi, sgn) for the transform in use; sgn is 0 at the zero and Nyquist modes."""
        xi = self.rxi if real else self.xi
        sgn = np.sign(xi)
        if real:
            sgn[-1] = 0.0
        else:
            sgn[self.n // 2] = 0.0
        return xi, sgn

    def reflect_index(self) -> np.ndarray:
        """Index map i -> j with x_j = -x_i (mod the period)."""
        return (-np.arange(self.n)) % self.n


def make_grid(L: float, n: int) -> Grid:
    return Grid(L, n)


def default_grid(speeds, points_per_width: float = 8.0, L: float | None = None) -> Grid:
    """Grid with L = 256*max(1, 1/min c) and a power-of-two n fine enough that
    the narrowest soliton (width ~ 1/max c) gets `points_per_width` samples."""
    speeds = np.atleast_1d(np.asarray(speeds, dtype=float))
    if L is None:
        L = 256.0 * max(1.0, 1.0 / speeds.min())
    h_max = 1.0 / (points_per_width * speeds.max())
    n = 2 ** math.ceil(math.log2(2 * L / h_max))
    return Grid(L, max(n, 8))


# ----------------------------------------------------------------------------
# Fields


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    _dtype = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=self._dtype or np.result_type(self.values, float))
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field samples must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.grid.n

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return wrap(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return wrap(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return wrap(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return wrap(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return wrap(self.grid, self.values / self._other(other))

    def __neg__(self):
        return wrap(self.grid, -self.values)

    @property
    def real(self) -> "RealField":
        return RealField(self.grid, self.values.real)

    @property
    def imag(self) -> "RealField":
        return RealField(self.grid, self.values.imag)


class RealField(Field):
    _dtype = np.float64


class ComplexField(Field):
    _dtype = np.complex128


def wrap(grid: Grid, values) -> Field:
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return ComplexField(grid, values)
    return RealField(grid, values)


def sample(grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> Field:
    return wrap(grid, fn(grid.x))


def _unpack(u, grid: Grid | None):
    if isinstance(u, Field):
        if grid is not None and grid != u.grid:
            raise GridMismatchError("field grid differs from the grid argument")
        return u.values, u.grid, True
    if grid is None:
        raise TypeError("bare arrays need an explicit grid")
    values = np.asarray(u)
    if values.shape[-1] != grid.n:
        raise ValueError(f"last axis has {values.shape[-1]} samples, grid has {grid.n}")
    return values, grid, False


# ----------------------------------------------------------------------------
# Fourier multipliers


def apply_symbol(values: np.ndarray, grid: Grid, symbol, real_preserving: bool = True) -> np.ndarray:
    """Multiply the spectrum of `values` (last axis) by symbol(xi, sgn).

    Real input with a real-preserving symbol takes the rfft path and returns a
    real array; everything else goes through the complex FFT.
    """
    if real_preserving and not np.iscomplexobj(values):
        xi, sgn = grid.spectrum_axes(real=True)
        return np.fft.irfft(symbol(xi, sgn) * np.fft.rfft(values, axis=-1), n=grid.n, axis=-1)
    xi, sgn = grid.spectrum_axes(real=False)
    return np.fft.ifft(symbol(xi, sgn) * np.fft.fft(values, axis=-1), axis=-1)


def _hilbert_symbol(xi, sgn):
    return 1j * sgn


def _derivative_symbol(order: int):
    def symbol(xi, sgn):
        s = (1j * xi) ** order
        if order % 2:
            s = s * (sgn != 0)  # odd orders drop the Nyquist mode
        return s

    return symbol


def _plus_symbol(xi, sgn):
    return 0.5 * (1.0 + sgn)


def _minus_symbol(xi, sgn):
    return -0.5 * (1.0 - sgn)


def _dispatch(u, grid, symbol, real_preserving=True):
    values, grid, is_field = _unpack(u, grid)
    out = apply_symbol(values, grid, symbol, real_preserving)
    return wrap(grid, out) if is_field else out


def hilbert(u, grid: Grid | None = None):
    """Hilbert transform, symbol i*sgn(xi); zero and Nyquist modes are annihilated."""
    return _dispatch(u, grid, _hilbert_symbol)


def derivative(u, order: int = 1, grid: Grid | None = None):
    if order < 1:
        raise ValueError("derivative order must be >= 1")
    return _dispatch(u, grid, _derivative_symbol(order))


def project_plus(u, grid: Grid | None = None):
    """P+ = (1 - iH)/2: keeps xi > 0, half of the zero mode."""
    values, grid, is_field = _unpack(u, grid)
    out = apply_symbol(values.astype(complex), grid, _plus_symbol, real_preserving=False)
    return ComplexField(grid, out) if is_field else out


def project_minus(u, grid: Grid | None = None):
    """P- = -(1 + iH)/2, so that P+ - P- is the identity."""
    values, grid, is_field = _unpack(u, grid)
    out = apply_symbol(values.astype(complex), grid, _minus_symbol, real_preserving=False)
    return ComplexField(grid, out) if is_field else out


# ----------------------------------------------------------------------------
# Quadrature and norms


def integrate(u, grid: Grid | None = None):
    values, grid, _ = _unpack(u, grid)
    return grid.h * values.sum(axis=-1)


def _pair(u, v, grid):
    a, ga, _ = _unpack(u, grid)
    b, gb, _ = _unpack(v, grid or ga)
    if ga != gb:
        raise GridMismatchError("fields live on different grids")
    return a, b, ga


def inner(u, v, grid: Grid | None = None):
    """L2 pairing h*sum(u*conj(v)); real for real inputs."""
    a, b, grid = _pair(u, v, grid)
    return grid.h * np.sum(a * np.conj(b), axis=-1)


def l2_norm(u, grid: Grid | None = None) -> float:
    values, grid, _ = _unpack(u, grid)
    return float(np.sqrt(grid.h * np.sum(np.abs(values) ** 2, axis=-1)))


def sobolev_norm(u, s: float, grid: Grid | None = None):
    """H^s norm, ||(1+xi^2)^{s/2} u_hat|| scaled so that s=0 is the L2 norm."""
    if s < 0:
        raise ValueError("Sobolev index must be non-negative")
    values, grid, _ = _unpack(u, grid)
    spec = np.fft.fft(values, axis=-1)
    weight = (1.0 + grid.xi**2) ** s
    return np.sqrt(grid.h / grid.n * np.sum(weight * np.abs(spec) ** 2, axis=-1))


# ----------------------------------------------------------------------------
# Serialization
#
# Binary layout (all little-endian):
#   bytes 0-3   magic b"BOF1"
#   byte  4     kind: 0 = real float64 samples, 1 = complex128 (re, im interleaved)
#   bytes 5-7   zero padding
#   bytes 8-15  L as float64
#   bytes 16-23 n as int64
#   payload     n samples

_MAGIC = b"BOF1"
_HEADER = struct.Struct("<4sB3xdq")


def save_field_text(path, u: Field) -> None:
    cols = [u.grid.x]
    if isinstance(u, ComplexField):
        cols += [u.values.real, u.values.imag]
        header = f"L={u.grid.L!r} n={u.grid.n} columns: x re im"
    else:
        cols.append(u.values)
        header = f"L={u.grid.L!r} n={u.grid.n} columns: x value"
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", header=header)


def load_field_text(path) -> Field:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: line 1: missing '# L=... n=...' header")
    meta = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    try:
        grid = Grid(float(meta["L"]), int(meta["n"]))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: line 1: bad header ({exc})") from None
    data = np.loadtxt(path, ndmin=2)
    if data.shape[0] != grid.n:
        raise ValueError(f"{path}: expected {grid.n} rows, found {data.shape[0]}")
    if data.shape[1] == 2:
        return RealField(grid, data[:, 1])
    if data.shape[1] == 3:
        return ComplexField(grid, data[:, 1] + 1j * data[:, 2])
    raise ValueError(f"{path}: expected 2 or 3 columns, found {data.shape[1]}")


def field_to_bytes(u: Field) -> bytes:
    kind = 1 if isinstance(u, ComplexField) else 0
    dtype = "<c16" if kind else "<f8"
    return _HEADER.pack(_MAGIC, kind, u.grid.L, u.grid.n) + u.values.astype(dtype).tobytes()


def field_from_bytes(blob: bytes) -> Field:
    if len(blob) < _HEADER.size:
        raise ValueError("truncated field header")
    magic, kind, L, n = _HEADER.unpack_from(blob)
    if magic != _MAGIC or kind not in (0, 1):
        raise ValueError("not a field block")
    grid = Grid(L, n)
    dtype = "<c16" if kind else "<f8"
    payload = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size)
    if payload.size != n:
        raise ValueError(f"payload holds {payload.size} samples, header says {n}")
    return (ComplexField if kind else RealField)(grid, payload.astype(dtype[1:]))


def save_field_binary(path, u: Field) -> None:
    Path(path).write_bytes(field_to_bytes(u))


def load_field_binary(path) -> Field:
    return field_from_bytes(Path(path).read_bytes())
