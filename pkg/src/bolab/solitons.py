"""Exact one- and N-soliton profiles of the Benjamin-Ono equation, the
one-soliton eigenfunction catalog and speed derivatives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np

from . import textconfig
from .spectral import ComplexField, Grid, RealField

SQRT5 = math.sqrt(5.0)
LAMBDA_MINUS = -(1.0 + SQRT5) / 2.0
LAMBDA_PLUS = (SQRT5 - 1.0) / 2.0
NORM_MINUS = (1.0 - SQRT5) * math.sqrt(SQRT5 - 2.0) / (4.0 * math.sqrt(SQRT5 * math.pi))
NORM_PLUS = (1.0 + SQRT5) * math.sqrt(SQRT5 + 2.0) / (4.0 * math.sqrt(SQRT5 * math.pi))


@dataclass(frozen=True)
class ScatteringData:
    eigenvalues: np.ndarray  # lambda_j = -c_j / 2
    gamma: np.ndarray  # normalization constants at the params' time


@dataclass(frozen=True)
class SolitonParams:
    speeds: tuple[float, ...]
    phases: tuple[float, ...] = None
    t: float = 0.0

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.speeds))
        x = (0.0,) * len(c) if self.phases is None else tuple(float(v) for v in np.atleast_1d(self.phases))
        if not c:
            raise ValueError("at least one speed is required")
        if len(x) != len(c):
            raise ValueError(f"{len(c)} speeds but {len(x)} phases")
        if not all(math.isfinite(v) for v in c + x + (float(self.t),)):
            raise ValueError("speeds, phases and time must be finite")
        if c[0] <= 0:
            raise ValueError("speeds must be positive")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise ValueError("speeds must be strictly increasing")
        object.__setattr__(self, "speeds", c)
        object.__setattr__(self, "phases", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self) -> int:
        return len(self.speeds)

    @property
    def c(self) -> np.ndarray:
        return np.array(self.speeds)

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.phases)

    def at(self, t: float) -> "SolitonParams":
        return SolitonParams(self.speeds, self.phases, t)

    def positions(self) -> np.ndarray:
        """Soliton centres at time t."""
        return self.x0 + self.c * self.t

    def scattering_data(self) -> ScatteringData:
        c = self.c
        lam = -c / 2.0
        gamma = -self.positions() - 1j / (2.0 * lam)
        return ScatteringData(lam, gamma)


# ----------------------------------------------------------------------------
# One soliton


def _check_speed(c: float) -> float:
    c = float(c)
    if not (math.isfinite(c) and c > 0):
        raise ValueError(f"speed must be positive, got {c!r}")
    return c


def soliton_profile(s: np.ndarray, c: float) -> np.ndarray:
    return 2.0 * c / (c * c * s * s + 1.0)


def one_soliton(c: float, x0: float, t: float, grid: Grid) -> RealField:
    c = _check_speed(c)
    return RealField(grid, soliton_profile(grid.x - c * t - x0, c))


def dQ_dc(c: float, grid: Grid, x0: float = 0.0, t: float = 0.0) -> RealField:
    """Speed derivative of the soliton at fixed centre x0 + c*t."""
    c = _check_speed(c)
    s2 = (grid.x - c * t - x0) ** 2
    return RealField(grid, 2.0 * (1.0 - c * c * s2) / (c * c * s2 + 1.0) ** 2)


def dQ_dx(c: float, grid: Grid, x0: float = 0.0, t: float = 0.0) -> RealField:
    """Spatial derivative Q_c'(x - c t - x0), the translation mode."""
    c = _check_speed(c)
    s = grid.x - c * t - x0
    return RealField(grid, -4.0 * c**3 * s / (c * c * s * s + 1.0) ** 2)


# ----------------------------------------------------------------------------
# N solitons


def tau_matrix(params: SolitonParams, x: np.ndarray) -> np.ndarray:
    """Stack of N x N matrices F(x): diagonal x - c_j t - x_j + i/c_j,
    off-diagonal -2i/(c_j - c_k)."""
    c = params.c
    N = params.N
    diff = c[:, None] - c[None, :]
    np.fill_diagonal(diff, 1.0)
    off = -2j / diff
    np.fill_diagonal(off, 0.0)
    F = np.broadcast_to(off, x.shape + (N, N)).copy()
    diag = x[..., None] - params.positions() + 1j / c
    idx = np.arange(N)
    F[..., idx, idx] = diag
    return F


def tau_determinant(params: SolitonParams, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(phase, log|f|) of f = det F at every grid point, overflow-safe."""
    sign, logabs = np.linalg.slogdet(tau_matrix(params, grid.x))
    return sign, logabs


def nsoliton_tau(params: SolitonParams, grid: Grid, convention: str = "positive") -> RealField:
    """N-soliton from the tau function via Jacobi's formula.

    d/dx log f = tr(F^{-1}) because dF/dx is the identity, so
    i d/dx log(f*/f) = 2 Im tr(F^{-1}). ``convention="printed"`` returns that
    expression as is (a negative profile); ``"positive"`` flips its sign so
    that N = 1 gives +Q_c.
    """
    if convention not in ("positive", "printed"):
        raise ValueError("convention must be 'positive' or 'printed'")
    _, logabs = tau_determinant(params, grid)
    if not np.all(np.isfinite(logabs)):
        raise FloatingPointError("tau determinant is singular or non-finite")
    F = tau_matrix(params, grid.x)
    tr = np.trace(np.linalg.inv(F), axis1=-2, axis2=-1)
    u = 2.0 * tr.imag
    if convention == "positive":
        u = -u
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite N-soliton samples")
    return RealField(grid, u)


def tau_sign_report(params: SolitonParams, grid: Grid) -> dict:
    """Both sign conventions side by side; only the positive one is a soliton."""
    printed = nsoliton_tau(params, grid, convention="printed").values
    return {
        "printed_min": float(printed.min()),
        "printed_max": float(printed.max()),
        "printed_integral": float(grid.h * printed.sum()),
        "positive_min": float(-printed.max()),
        "positive_max": float(-printed.min()),
        "positive_integral": float(-grid.h * printed.sum()),
    }


class ScatteringSolution(NamedTuple):
    phi: list[ComplexField]
    U: RealField
    U_linear: RealField  # -2 Im sum(phi), the second closed form


def _solve_high_precision(F: np.ndarray, dps: int = 40) -> np.ndarray:
    with mpmath.workdps(dps):
        A = mpmath.matrix([[mpmath.mpc(complex(v)) for v in row] for row in F])
        sol = mpmath.lu_solve(A, mpmath.matrix([1] * F.shape[0]))
        return np.array([complex(v) for v in sol])


def nsoliton_scattering(params: SolitonParams, grid: Grid, cond_limit: float = 1e8) -> ScatteringSolution:
    """Solve the per-point linear system for the squared-eigenfunction
    amplitudes phi_j and assemble U two ways."""
    F = tau_matrix(params, grid.x)
    cond = np.linalg.cond(F)
    if not np.all(np.isfinite(cond)):
        raise np.linalg.LinAlgError("singular scattering system")
    ones = np.ones(F.shape[:-1], dtype=complex)
    phi = np.linalg.solve(F, ones[..., None])[..., 0]
    for i in np.flatnonzero(cond > cond_limit):
        phi[i] = _solve_high_precision(F[i])
    c = params.c
    U = np.sum(2.0 * np.abs(phi) ** 2 / c, axis=-1)
    U_linear = -2.0 * phi.sum(axis=-1).imag
    return ScatteringSolution(
        [ComplexField(grid, phi[:, j]) for j in range(params.N)],
        RealField(grid, U),
        RealField(grid, U_linear),
    )


def nsoliton_translation_modes(params: SolitonParams, grid: Grid) -> np.ndarray:
    """Columns dU/dx_j = -2 Im (F^{-2})_jj, the exact phase derivatives."""
    Finv = np.linalg.inv(tau_matrix(params, grid.x))
    sq = np.einsum("...ij,...ji->...i", Finv, Finv)
    return -2.0 * sq.imag


# ----------------------------------------------------------------------------
# Eigenfunctions of the one-soliton linearization at c = 1


@dataclass(frozen=True)
class EigenCatalog:
    grid: Grid
    eta0: RealField
    eta_minus: RealField
    eta_plus: RealField
    eta1: RealField
    lambda_minus: float = LAMBDA_MINUS
    lambda_plus: float = LAMBDA_PLUS
    norm_minus: float = NORM_MINUS
    norm_plus: float = NORM_PLUS

    def psi(self, lam: float, form: str = "printed") -> RealField:
        """Generalized eigenfunction for the spectral value 1 + lam (see
        :func:`generalized_eigenfunction` for the two forms)."""
        return RealField(self.grid, generalized_eigenfunction(self.grid.x, lam, form))

    def discrete(self) -> dict[str, RealField]:
        return {"eta_minus": self.eta_minus, "eta0": self.eta0, "eta_plus": self.eta_plus, "eta1": self.eta1}


def generalized_eigenfunction(x: np.ndarray, lam: float, form: str = "printed") -> np.ndarray:
    """"printed": sqrt(2/pi) Re[e^{i lam x} (x-i)/(x+i)], the commonly quoted
    formula. It does not satisfy L_1 psi = (1+lam) psi; the phase factor has to
    be squared, which is what "corrected" returns."""
    if form == "printed":
        return math.sqrt(2.0 / math.pi) * ((x * x - 1.0) * np.cos(lam * x) + 2.0 * x * np.sin(lam * x)) / (x * x + 1.0)
    if form == "corrected":
        x2 = x * x
        num = ((x2 - 1.0) ** 2 - 4.0 * x2) * np.cos(lam * x) + 4.0 * x * (x2 - 1.0) * np.sin(lam * x)
        return math.sqrt(2.0 / math.pi) * num / (x2 + 1.0) ** 2
    raise ValueError("form must be 'printed' or 'corrected'")


def eigen_catalog(grid: Grid) -> EigenCatalog:
    x = grid.x
    Q = soliton_profile(x, 1.0)
    dQ = -4.0 * x / (x * x + 1.0) ** 2
    sp = math.sqrt(math.pi)
    return EigenCatalog(
        grid=grid,
        eta0=RealField(grid, dQ / sp),
        eta_minus=RealField(grid, NORM_MINUS * (2.0 * Q + (1.0 + SQRT5) * Q * Q)),
        eta_plus=RealField(grid, NORM_PLUS * (2.0 * Q + (1.0 - SQRT5) * Q * Q)),
        eta1=RealField(grid, (dQ + x * Q) / sp),
    )


# ----------------------------------------------------------------------------
# Parameter files


_PARAM_SCHEMA = {
    "speeds": textconfig.float_list,
    "phases": textconfig.float_list,
    "t": textconfig.real,
}


def params_from_mapping(values: dict, source: str = "<params>") -> SolitonParams:
    try:
        return SolitonParams(values["speeds"], values.get("phases"), values.get("t", 0.0))
    except ValueError as exc:
        raise textconfig.ConfigError(source, None, str(exc)) from None


def parse_params_text(text: str, source: str = "<string>") -> SolitonParams:
    return params_from_mapping(textconfig.parse_text(text, _PARAM_SCHEMA, source, required=("speeds",)), source)


def load_params(path) -> SolitonParams:
    return params_from_mapping(textconfig.parse_file(path, _PARAM_SCHEMA, required=("speeds",)), str(path))


def format_params(params: SolitonParams) -> str:
    return (f"speeds = {list(params.speeds)!r}\n"
            f"phases = {list(params.phases)!r}\n"
            f"t = {params.t!r}\n")
