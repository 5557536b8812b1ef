"""Conserved functionals H_0, H_1, ... of the Benjamin-Ono hierarchy.

Orders 0-3 have explicit integrands. Every order is also available from the
Jost-density recursion

    Nbar_1 = 1,  Nbar_{m+1} = i d/dx Nbar_m + P+(u Nbar_m),
    I_m = (-1)^m int u Nbar_m,   H_n = 2^{n-1}/n * I_{n+1},

whose exact discrete gradient is obtained by transposing the recursion
(:func:`recursion_gradient`). :func:`fd_gradient` is the brute-force oracle.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .solitons import SolitonParams, nsoliton_scattering
from .spectral import Grid, RealField, _unpack, derivative, hilbert

log = logging.getLogger(__name__)

RESIDUE_RTOL = 1e-8


@dataclass(frozen=True)
class ConservedTower:
    values: np.ndarray  # H_0 .. H_M
    residues: np.ndarray  # |Im I_{n+1}| scaled like H_n; 0 for H_0

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, n: int) -> float:
        return float(self.values[n])

    @property
    def flagged(self) -> tuple[int, ...]:
        """Orders whose imaginary residue signals under-resolution."""
        bad = self.residues > RESIDUE_RTOL * (1.0 + np.abs(self.values))
        return tuple(int(i) for i in np.flatnonzero(bad))

    def rows(self):
        return [(n, float(v), float(r)) for n, (v, r) in enumerate(zip(self.values, self.residues))]


# ----------------------------------------------------------------------------
# Recursion


def _fft(a):
    return np.fft.fft(a, axis=-1)


def _ifft(a):
    return np.fft.ifft(a, axis=-1)


class _Symbols:
    """Complex-FFT symbols used by the recursion and its transpose."""

    def __init__(self, grid: Grid):
        xi, sgn = grid.spectrum_axes(real=False)
        odd = sgn != 0
        self.i_dx = -xi * odd  # i d/dx
        self.minus_i_dx = xi * odd  # -i d/dx, transpose of i d/dx
        self.plus = 0.5 * (1.0 + sgn)  # P+
        self.plus_t = 0.5 * (1.0 - sgn)  # transpose of P+


def _densities(u: np.ndarray, grid: Grid, count: int, sym: _Symbols | None = None) -> list[np.ndarray]:
    """Nbar_1 .. Nbar_count for (possibly batched) real samples u."""
    sym = sym or _Symbols(grid)
    nbar = [np.ones(u.shape, dtype=complex)]
    for _ in range(count - 1):
        prev = nbar[-1]
        nbar.append(_ifft(sym.i_dx * _fft(prev) + sym.plus * _fft(u * prev)))
    return nbar


def recursion_integrals(u, M: int, grid: Grid | None = None) -> np.ndarray:
    """Complex I_1 .. I_{M+1} along the last axis of u."""
    values, grid, _ = _unpack(u, grid)
    values = np.asarray(values, dtype=float)
    nbar = _densities(values, grid, M + 1)
    return np.stack([(-1) ** m * grid.h * np.sum(values * nb, axis=-1) for m, nb in enumerate(nbar, 1)], axis=-1)


def _scale(n: int) -> float:
    return 2.0 ** (n - 1) / n


def conserved_tower(u, M: int = 8, grid: Grid | None = None) -> ConservedTower:
    if M < 1:
        raise ValueError("tower order must be >= 1")
    values, grid, _ = _unpack(u, grid)
    if values.ndim != 1:
        raise ValueError("conserved_tower takes a single field; use recursion_integrals for batches")
    I = recursion_integrals(values, M, grid)[1:]
    scales = np.array([_scale(n) for n in range(1, M + 1)])
    H = np.concatenate([[0.5 * grid.h * values.sum()], scales * I.real])
    res = np.concatenate([[0.0], scales * np.abs(I.imag)])
    tower = ConservedTower(H, res)
    if tower.flagged:
        log.warning("imaginary residue above threshold at orders %s (under-resolved field?)", tower.flagged)
    return tower


def tower_component(u, n: int, grid: Grid | None = None) -> np.ndarray:
    """H_n from the recursion, vectorized over leading axes of u."""
    values, grid, _ = _unpack(u, grid)
    if n == 0:
        return 0.5 * grid.h * values.sum(axis=-1)
    return _scale(n) * recursion_integrals(values, n, grid)[..., n].real


def recursion_gradient(u, n: int, grid: Grid | None = None):
    """Exact gradient of the discrete recursion functional H_n.

    With A_0 = u and A_{p+1} = -i A_p' + u P+^T A_p the derivative of
    I_m = (-1)^m <u, Nbar_m> is (-1)^m [Nbar_m + sum_k Nbar_k P+^T A_{m-1-k}].
    Gradients are per unit length (divided by the quadrature weight).
    """
    values, grid, is_field = _unpack(u, grid)
    values = np.asarray(values, dtype=float)
    if n < 0:
        raise ValueError("order must be >= 0")
    if n == 0:
        out = np.full(values.shape, 0.5)
    else:
        m = n + 1
        sym = _Symbols(grid)
        nbar = _densities(values, grid, m, sym)
        adj = [values.astype(complex)]
        for _ in range(m - 2):
            a_hat = _fft(adj[-1])
            adj.append(_ifft(sym.minus_i_dx * a_hat) + values * _ifft(sym.plus_t * a_hat))
        g = nbar[m - 1].copy()
        for k in range(1, m):
            g += nbar[k - 1] * _ifft(sym.plus_t * _fft(adj[m - 1 - k]))
        out = (-1) ** m * _scale(n) * g.real
    return RealField(grid, out) if is_field else out


def fd_gradient(u, n: int, grid: Grid | None = None, chunk: int = 256):
    """Coordinate-wise central differences of the recursion functional H_n,
    step 1e-5*(1+max|u|), one Richardson level."""
    if n < 0:
        raise ValueError("order must be >= 0")
    values, grid, is_field = _unpack(u, grid)
    values = np.asarray(values, dtype=float)
    eps = 1e-5 * (1.0 + np.abs(values).max())
    out = np.empty(grid.n)
    for start in range(0, grid.n, chunk):
        idx = np.arange(start, min(start + chunk, grid.n))
        base = np.broadcast_to(values, (len(idx), grid.n)).copy()

        def diff(step):
            plus, minus = base.copy(), base.copy()
            plus[np.arange(len(idx)), idx] += step
            minus[np.arange(len(idx)), idx] -= step
            return (tower_component(plus, n, grid) - tower_component(minus, n, grid)) / (2.0 * step * grid.h)

        out[idx] = (4.0 * diff(eps) - diff(2.0 * eps)) / 3.0
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite finite-difference gradient")
    return RealField(grid, out) if is_field else out


# ----------------------------------------------------------------------------
# Explicit low orders


def explicit_H(u, n: int, grid: Grid | None = None) -> float:
    values, grid, _ = _unpack(u, grid)
    h = grid.h
    if n == 0:
        return 0.5 * h * values.sum(axis=-1)
    if n == 1:
        return 0.5 * h * np.sum(values**2, axis=-1)
    if n == 2:
        hux = hilbert(derivative(values, 1, grid), grid)
        return -0.5 * h * np.sum(values * hux + (2.0 / 3.0) * values**3, axis=-1)
    if n == 3:
        ux = derivative(values, 1, grid)
        hux = hilbert(ux, grid)
        return (2.0 / 3.0) * h * np.sum(ux**2 + 1.5 * values**2 * hux + 0.5 * values**4, axis=-1)
    raise ValueError("explicit formulas exist for n in {0, 1, 2, 3}")


def explicit_grad(u, n: int, grid: Grid | None = None):
    values, grid, is_field = _unpack(u, grid)
    if n == 1:
        out = np.array(values, dtype=float)
    elif n == 2:
        out = -hilbert(derivative(values, 1, grid), grid) - values**2
    elif n == 3:
        hux = hilbert(derivative(values, 1, grid), grid)
        h_u2x = hilbert(derivative(values**2, 1, grid), grid)
        out = -(4.0 / 3.0) * derivative(values, 2, grid) + 2.0 * values * hux + h_u2x + (4.0 / 3.0) * values**3
    else:
        raise ValueError("explicit gradients exist for n in {1, 2, 3}")
    return RealField(grid, out) if is_field else out


# ----------------------------------------------------------------------------
# N-soliton closed forms


def multisoliton_gradient(params: SolitonParams, n: int, grid: Grid, phi=None) -> RealField:
    """grad H_n at the N-soliton: (-1)^{n+1} 2 sum_j c_j^{n-2} |phi_j|^2."""
    if n < 1:
        raise ValueError("order must be >= 1")
    if phi is None:
        phi = nsoliton_scattering(params, grid).phi
    total = np.zeros(grid.n)
    for cj, ph in zip(params.speeds, phi):
        total += cj ** (n - 2) * np.abs(ph.values) ** 2
    return RealField(grid, (-1) ** (n + 1) * 2.0 * total)


def trace_identity(params: SolitonParams | tuple, n: int) -> float:
    """H_n at the N-soliton in closed form: pi (-1)^{n+1} sum c^n / n."""
    if n < 1:
        raise ValueError("order must be >= 1")
    c = np.asarray(params.speeds if isinstance(params, SolitonParams) else params, dtype=float)
    return float(np.pi * (-1) ** (n + 1) * np.sum(c**n) / n)


def soliton_value(c: float, n: int) -> float:
    """H_n(Q_c) for a single soliton."""
    return trace_identity((c,), n)


def write_tower_csv(path, tower: ConservedTower) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "H_n", "im_residue"])
        for n, v, r in tower.rows():
            w.writerow([n, repr(v), repr(r)])
