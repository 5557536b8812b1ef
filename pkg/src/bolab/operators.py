"""Dense discretizations of the second variations of the conserved
functionals, their eigendecomposition and inertia counts."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .functionals import explicit_grad, recursion_gradient
from .solitons import SolitonParams, dQ_dx, nsoliton_tau, nsoliton_translation_modes, one_soliton
from .spectral import Grid, RealField, apply_symbol, derivative, hilbert
from .variational import elementary_symmetric, vieta_multipliers


class AssemblyError(RuntimeError):
    pass


class CalibrationError(RuntimeError):
    pass


class InertiaMismatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Inertia:
    negative: int
    zero: int
    zero_tol: float
    gap: float  # smallest |eigenvalue| that was not counted as zero

    def as_tuple(self) -> tuple[int, int]:
        return (self.negative, self.zero)

    def __add__(self, other: "Inertia") -> tuple[int, int]:
        return (self.negative + other.negative, self.zero + other.zero)

    def to_dict(self) -> dict:
        return {"negative": self.negative, "zero": self.zero, "zero_tol": self.zero_tol, "gap": self.gap}


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Symmetric matrix M of a linearized operator; <v, L u> = v^T (h M) u."""

    matrix: np.ndarray
    grid: Grid
    label: str
    kernel: np.ndarray | None = None  # columns known to span the exact kernel
    asymmetry: float = 0.0  # relative, before symmetrization

    @property
    def weight(self) -> float:
        return self.grid.h

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v)

    def quadratic_form(self, v) -> float:
        v = np.asarray(v)
        return float(self.grid.h * v @ self.matrix @ v)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh[0]

    def kernel_error(self) -> float:
        """Largest |eigenvalue| of M compressed onto the known kernel, i.e. how
        far from zero the exact kernel sits on this grid."""
        if self.kernel is None:
            raise CalibrationError(f"{self.label}: no known kernel to calibrate against")
        basis, _ = np.linalg.qr(self.kernel)
        return float(np.abs(np.linalg.eigvalsh(basis.T @ self.matrix @ basis)).max())


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    inertia: Inertia


def _symmetrized(M: np.ndarray, grid: Grid, label: str, kernel=None, limit: float = 1e-6) -> OperatorMatrix:
    scale = np.abs(M).max()
    asym = float(np.abs(M - M.T).max() / scale) if scale > 0 else 0.0
    if asym > limit:
        raise AssemblyError(f"{label}: relative asymmetry {asym:.3g} before symmetrization")
    return OperatorMatrix(0.5 * (M + M.T), grid, label, kernel, asym)


def multiplier_matrix(grid: Grid, symbol) -> np.ndarray:
    """Dense matrix of a real-preserving Fourier multiplier."""
    return apply_symbol(np.eye(grid.n), grid, symbol).T


def _abs_xi(xi, sgn):
    return np.abs(xi) * (sgn != 0)  # symbol of -H d/dx


def _xi_sq(xi, sgn):
    return xi**2  # symbol of -d^2/dx^2


# ----------------------------------------------------------------------------
# Second variations


def second_variation(order: int, base: np.ndarray, grid: Grid) -> np.ndarray:
    """Analytic matrix of H_order'' at `base` for order in {1, 2, 3}."""
    n = grid.n
    if order == 1:
        return np.eye(n)
    minus_hd = multiplier_matrix(grid, _abs_xi)  # -H d/dx
    if order == 2:
        return minus_hd - 2.0 * np.diag(base)
    if order == 3:
        hd = -minus_hd
        hux = hilbert(derivative(base, 1, grid), grid)
        M = (4.0 / 3.0) * multiplier_matrix(grid, _xi_sq)
        M += np.diag(2.0 * hux + 4.0 * base**2)
        M += 2.0 * base[:, None] * hd + 2.0 * hd * base[None, :]
        return M
    raise ValueError("analytic second variations exist for orders 1-3")


def _combined_gradient(orders_coeffs, grid):
    def grad(u):
        return sum(a * recursion_gradient(u, m, grid) for m, a in orders_coeffs)

    return grad


def _fd_columns(grad, base: np.ndarray, grid: Grid, chunk: int = 128) -> np.ndarray:
    """Hessian columns by centred differences of `grad`, one Richardson level."""
    n = grid.n
    eps = np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.abs(base).max())
    out = np.empty((n, n))
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        rows = np.arange(len(idx))
        stack = np.broadcast_to(base, (len(idx), n))

        def diff(step):
            plus, minus = stack.copy(), stack.copy()
            plus[rows, idx] += step
            minus[rows, idx] -= step
            return (grad(plus) - grad(minus)) / (2.0 * step)

        out[:, idx] = ((4.0 * diff(eps) - diff(2.0 * eps)) / 3.0).T
    return out


def _smooth_probe(grid: Grid, rng: np.random.Generator, band: float = 0.25) -> np.ndarray:
    """Random band-limited, mean-free unit vector. The zero mode is left out
    because the recursion and the explicit integrands legitimately differ
    there (the periodic H squares to -1 only off the mean)."""
    xi = np.abs(grid.rxi)
    spec = (rng.standard_normal(xi.size) + 1j * rng.standard_normal(xi.size)) * (xi <= band * grid.nyquist)
    spec[0] = 0.0
    v = np.fft.irfft(spec, n=grid.n)
    return v / np.linalg.norm(v)


def directional_hessian(grad, base: np.ndarray, v: np.ndarray) -> np.ndarray:
    eps = np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.abs(base).max())

    def diff(step):
        return (grad(base + step * v) - grad(base - step * v)) / (2.0 * step)

    return (4.0 * diff(eps) - diff(2.0 * eps)) / 3.0


def assemble_hessian(coeffs, base, grid: Grid | None = None, label: str = "hessian", kernel=None,
                     method: str = "auto", probes: int = 5, probe_rtol: float = 1e-4,
                     seed: int = 0) -> OperatorMatrix:
    """Matrix of sum_m alpha_m H_m''(base); coeffs = (alpha_{N+1}, ..., alpha_1).

    method="analytic": closed forms for orders 1-3, each verified on random
    smooth probes against centred differences of the explicit gradient it was
    derived from; orders 4 and up column by column from differences of the
    recursion gradient.
    method="recursion": every order from differences of the recursion
    gradient, i.e. the Hessian of one discrete functional. The explicit and
    recursion integrands differ at the zero mode by O(1/L) terms; mixing them
    shifts the discrete kernel, so "auto" picks "recursion" whenever an order
    above 3 is present and "analytic" otherwise.
    """
    if isinstance(base, RealField):
        grid = base.grid if grid is None else grid
        base = base.values
    base = np.asarray(base, dtype=float)
    top = len(coeffs)
    terms = [(top - i, float(a)) for i, a in enumerate(coeffs) if a != 0.0]
    if method == "auto":
        method = "recursion" if any(m > 3 for m, _ in terms) else "analytic"
    if method not in ("analytic", "recursion"):
        raise ValueError("method must be 'auto', 'analytic' or 'recursion'")
    M = np.zeros((grid.n, grid.n))
    if method == "recursion":
        exact = [(m, a) for m, a in terms if m == 1]  # H_1'' is the identity for both integrands
        for _, a in exact:
            M += a * np.eye(grid.n)
        rest = [(m, a) for m, a in terms if m > 1]
        if rest:
            M += _fd_columns(_combined_gradient(rest, grid), base, grid)
        return _symmetrized(M, grid, label, kernel)
    rng = np.random.default_rng(seed)
    for order, a in terms:
        if order > 3:
            continue
        block = second_variation(order, base, grid)

        def grad(u, order=order):
            return explicit_grad(u, order, grid)

        for _ in range(probes):
            v = _smooth_probe(grid, rng)
            ref = directional_hessian(grad, base, v)
            err = np.linalg.norm(block @ v - ref) / np.linalg.norm(ref)
            if err > probe_rtol:
                raise AssemblyError(f"H_{order}'' closed form disagrees with the gradient oracle (rel {err:.3g})")
        M += a * block
    high = [(m, a) for m, a in terms if m > 3]
    if high:
        M += _fd_columns(_combined_gradient(high, grid), base, grid)
    return _symmetrized(M, grid, label, kernel)


# ----------------------------------------------------------------------------
# Named operators


def assemble_L1(c: float, grid: Grid) -> OperatorMatrix:
    """-H d/dx + c - 2 Q_c, applied to every basis vector."""
    Q = one_soliton(c, 0.0, 0.0, grid).values
    eye = np.eye(grid.n)
    cols = apply_symbol(eye, grid, _abs_xi).T + c * eye - 2.0 * Q[:, None] * eye
    return _symmetrized(cols, grid, f"L1(c={c:g})", kernel=dQ_dx(c, grid).values[:, None])


def partial_symmetric(c, j: int) -> np.ndarray:
    """sigma_{j,0..N-1}: elementary symmetric functions of the speeds other than c_j (1-based j)."""
    return elementary_symmetric(np.delete(np.asarray(c, dtype=float), j - 1))


def lnj_coefficients(c, j: int) -> tuple[float, ...]:
    """(alpha_{N+1}, ..., alpha_1) of sum_n sigma_{j,N-n} (H_{n+1}'' + c_j H_n'')."""
    c = np.asarray(c, dtype=float)
    N = len(c)
    s = partial_symmetric(c, j)
    alpha = np.zeros(N + 2)  # alpha[m] multiplies H_m''
    for n in range(1, N + 1):
        alpha[n + 1] += s[N - n]
        alpha[n] += c[j - 1] * s[N - n]
    return tuple(alpha[N + 1:0:-1])


def assemble_LNj(c, j: int, grid: Grid) -> OperatorMatrix:
    c = tuple(float(v) for v in c)
    if not 1 <= j <= len(c):
        raise ValueError(f"index j must lie in 1..{len(c)}")
    cj = c[j - 1]
    Q = one_soliton(cj, 0.0, 0.0, grid)
    return assemble_hessian(lnj_coefficients(c, j), Q, label=f"L_{len(c)},{j}{c}",
                            kernel=dQ_dx(cj, grid).values[:, None])


def assemble_Ln(n: int, c: float, grid: Grid) -> OperatorMatrix:
    """H_{n+1}''(Q_c) + c H_n''(Q_c)."""
    coeffs = (1.0, c) + (0.0,) * (n - 1)
    return assemble_hessian(coeffs, one_soliton(c, 0.0, 0.0, grid), label=f"L_{n}(c={c:g})",
                            kernel=dQ_dx(c, grid).values[:, None])


def assemble_LN(params: SolitonParams, grid: Grid) -> OperatorMatrix:
    """Second variation of S_N at the N-soliton."""
    U = nsoliton_tau(params, grid)
    return assemble_hessian(vieta_multipliers(params).coefficients(), U,
                            label=f"S_{params.N}''{params.speeds}@{params.phases}",
                            kernel=nsoliton_translation_modes(params, grid))


def printed_L2_apply(U: np.ndarray, c, v: np.ndarray, grid: Grid, corrected: bool = True) -> np.ndarray:
    """The two-soliton operator written out term by term.

    The transport term reads 2 H(U v_x) when ``corrected`` and 2 U v_x
    otherwise; only the former is the second variation of S_2.
    """
    c1, c2 = c
    vx = derivative(v, 1, grid)
    Ux = derivative(U, 1, grid)
    HUx = hilbert(Ux, grid)
    Hvx = hilbert(vx, grid)
    transport = 2.0 * hilbert(U * vx, grid) if corrected else 2.0 * U * vx
    return (-(4.0 / 3.0) * derivative(v, 2, grid) + 2.0 * HUx * v + 2.0 * U * Hvx + 2.0 * hilbert(Ux * v, grid)
            + transport + 4.0 * U**2 * v + (c1 + c2) * (-Hvx - 2.0 * U * v) + c1 * c2 * v)


# ----------------------------------------------------------------------------
# Spectra


def calibrated_zero_tol(M: OperatorMatrix) -> tuple[float, float]:
    """(zero_tol, expected grid error) from the known kernel."""
    err = M.kernel_error()
    return 10.0 * err, err


def inertia(M: OperatorMatrix, zero_tol: float | str = "auto") -> Inertia:
    ev = M.eigenvalues
    if zero_tol == "auto":
        zero_tol, err = calibrated_zero_tol(M)
        near = int(np.sum(np.abs(ev) <= 100.0 * err))
        if near < M.kernel.shape[1]:
            raise CalibrationError(f"{M.label}: {near} eigenvalues near zero, kernel has dimension {M.kernel.shape[1]}")
    zero_tol = float(zero_tol)
    neg = int(np.sum(ev < -zero_tol))
    zero = int(np.sum(np.abs(ev) <= zero_tol))
    rest = np.abs(ev[np.abs(ev) > zero_tol])
    gap = float(rest.min()) if rest.size else float("inf")
    return Inertia(neg, zero, zero_tol, gap)


def spectrum(M: OperatorMatrix, zero_tol: float | str = "auto") -> SpectralReport:
    ev, vecs = M.eigh
    return SpectralReport(ev, vecs, inertia(M, zero_tol))


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))


def kernel_vector(M: OperatorMatrix) -> np.ndarray:
    """Eigenvector of the eigenvalue closest to zero."""
    ev, vecs = M.eigh
    return vecs[:, np.argmin(np.abs(ev))]


# ----------------------------------------------------------------------------
# Scaling of the negative eigenvalues with the speeds


def scaling_denominator(c, k: int) -> float:
    """c_{2k-1} prod_{j != 2k-1} (c_j - c_{2k-1}), the predicted size of -nu_k."""
    c = np.asarray(c, dtype=float)
    i = 2 * k - 2
    return float(c[i] * np.prod(np.delete(c, i) - c[i]))


def separated_phases(N: int, half_width: float = 20.0) -> tuple[float, ...]:
    """Phases spread evenly over [-half_width, half_width]."""
    if N == 1:
        return (0.0,)
    return tuple(float(v) for v in np.linspace(-half_width, half_width, N))


@dataclass
class ScalingRow:
    speeds: tuple[float, ...]
    k: int
    nu: float  # k-th negative eigenvalue of S_N'' at separated phases
    denominator: float
    ratio: float
    nu_isolated: float  # lowest eigenvalue of L_{N,2k-1}
    ratio_isolated: float
    inertia: tuple[int, int]


@dataclass
class ScalingTable:
    rows: list[ScalingRow] = field(default_factory=list)
    base: list[ScalingRow] = field(default_factory=list)

    def ratios(self, k: int = 1, isolated: bool = False) -> np.ndarray:
        return np.array([r.ratio_isolated if isolated else r.ratio for r in self.rows if r.k == k])

    def spread(self, k: int = 1, isolated: bool = False) -> float:
        """(max - min) / mean of the sweep ratios for the k-th negative eigenvalue."""
        r = self.ratios(k, isolated)
        return float((r.max() - r.min()) / r.mean())

    def to_dict(self) -> dict:
        ks = sorted({r.k for r in self.rows})
        return {
            "base": [vars(r) for r in self.base],
            "rows": [vars(r) for r in self.rows],
            "spread": {str(k): self.spread(k) for k in ks},
            "spread_isolated": {str(k): self.spread(k, isolated=True) for k in ks},
        }


def _negative_eigenvalues(c, grid: Grid, half_width: float) -> tuple[list[float], Inertia]:
    c = tuple(c)
    N = len(c)
    if N == 1:
        M = assemble_L1(c[0], grid)
        pos = np.zeros(1)
    else:
        phases = separated_phases(N, half_width)
        M = assemble_LN(SolitonParams(c, phases), grid)
        pos = np.array(phases)
    inert = inertia(M)
    expected = (N + 1) // 2
    if inert.negative != expected:
        raise InertiaMismatchError(f"{M.label}: {inert.negative} negative eigenvalues, expected {expected}")
    ev, vecs = M.eigh
    neg = np.flatnonzero(ev < -inert.zero_tol)
    # attach each negative mode to the soliton carrying most of its weight
    reach = np.diff(pos).min() / 2 if N > 1 else grid.L
    owner = {}
    for i in neg:
        w = [np.sum(vecs[:, i] ** 2 * (np.abs(grid.x - p) < reach)) for p in pos]
        owner.setdefault(int(np.argmax(w)), []).append(ev[i])
    nus = []
    for k in range(1, expected + 1):
        cand = owner.get(2 * k - 2)
        nus.append(float(min(cand)) if cand else float(np.sort(ev[neg])[k - 1]))
    return nus, inert


def negative_eigenvalue_scaling(c_base, sweep, grid: Grid | None = None, half_width: float = 20.0) -> ScalingTable:
    """Negative eigenvalues of S_N'' at widely separated phases, and of the
    one-soliton operators L_{N,2k-1}, divided by the speed products
    c_{2k-1} prod_{j != 2k-1} (c_j - c_{2k-1})."""
    grid = grid or Grid(128.0, 2048)
    table = ScalingTable()
    for target, tuples in ((table.base, [c_base]), (table.rows, sweep)):
        for c in tuples:
            c = tuple(float(v) for v in c)
            nus, inert = _negative_eigenvalues(c, grid, half_width)
            for k, nu in enumerate(nus, start=1):
                den = scaling_denominator(c, k)
                iso = float(assemble_LNj(c, 2 * k - 1, grid).eigenvalues[0])
                target.append(ScalingRow(c, k, nu, den, -nu / den, iso, -iso / den, inert.as_tuple()))
    return table


# ----------------------------------------------------------------------------
# Export


def write_spectrum_csv(path, eigenvalues) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, v in enumerate(eigenvalues):
            w.writerow([i, repr(float(v))])


def write_inertia_json(path, label: str, inert: Inertia) -> None:
    with open(path, "w") as fh:
        json.dump({"operator": label, **inert.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
