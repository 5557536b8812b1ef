"""Multi-soliton variational principle: Lagrange multipliers from the speeds,
Euler-Lagrange residuals, the multiplier Hessian D and the augmented
Lagrangian used as a Lyapunov functional."""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .functionals import conserved_tower, multisoliton_gradient, recursion_gradient, trace_identity
from .solitons import SolitonParams, nsoliton_scattering, nsoliton_tau
from .spectral import Grid, RealField, _unpack


def _speeds(c) -> np.ndarray:
    c = np.asarray(c.speeds if isinstance(c, SolitonParams) else c, dtype=float).ravel()
    if c.size == 0 or not np.all(np.isfinite(c)) or np.any(c <= 0):
        raise ValueError("speeds must be finite and positive")
    return c


def elementary_symmetric(c) -> np.ndarray:
    """sigma_0 .. sigma_N of the entries of c."""
    sigma = np.zeros(len(c) + 1)
    sigma[0] = 1.0
    for k, ck in enumerate(c, start=1):
        sigma[1:k + 1] = sigma[1:k + 1] + ck * sigma[0:k]
    return sigma


@dataclass(frozen=True)
class Multipliers:
    mu: tuple[float, ...]  # mu_1 .. mu_N

    def __getitem__(self, n: int) -> float:
        """1-based access, mu[1] is the coefficient of H_1."""
        if not 1 <= n <= len(self.mu):
            raise IndexError(n)
        return self.mu[n - 1]

    def as_array(self) -> np.ndarray:
        return np.array(self.mu)

    def coefficients(self) -> tuple[float, ...]:
        """(alpha_{N+1}, ..., alpha_1) of S_N = H_{N+1} + sum mu_n H_n."""
        return (1.0,) + tuple(reversed(self.mu))


def vieta_multipliers(c) -> Multipliers:
    """mu_n = sigma_{N-n+1}(c): mu_1 is the product of the speeds, mu_N their sum."""
    c = _speeds(c)
    sigma = elementary_symmetric(c)
    N = len(c)
    return Multipliers(tuple(float(sigma[N - n + 1]) for n in range(1, N + 1)))


# ----------------------------------------------------------------------------
# Euler-Lagrange equation


def el_gradients(params: SolitonParams, grid: Grid, source: str = "scattering") -> list[np.ndarray]:
    """grad H_1 .. grad H_{N+1} at the N-soliton.

    "scattering": closed form in the squared eigenfunctions (exact up to
    roundoff). "functional": exact gradient of the discrete recursion
    functional at the sampled profile (carries the periodic truncation error).
    """
    N = params.N
    if N > 4:
        raise ValueError("gradient orders above 5 are not supported here")
    if source == "scattering":
        phi = nsoliton_scattering(params, grid).phi
        return [multisoliton_gradient(params, n, grid, phi).values for n in range(1, N + 2)]
    if source == "functional":
        U = nsoliton_tau(params, grid).values
        return [recursion_gradient(U, n, grid) for n in range(1, N + 2)]
    raise ValueError("source must be 'scattering' or 'functional'")


def el_residual(params: SolitonParams, grid: Grid, mu=None, source: str = "scattering") -> float:
    """||grad H_{N+1} + sum mu_n grad H_n|| / (largest term norm)."""
    mu = vieta_multipliers(params) if mu is None else mu
    mu = np.asarray(mu.mu if isinstance(mu, Multipliers) else mu, dtype=float)
    grads = el_gradients(params, grid, source)
    if len(mu) != params.N:
        raise ValueError(f"need {params.N} multipliers, got {len(mu)}")
    terms = [grads[-1]] + [m * g for m, g in zip(mu, grads[:-1])]
    total = np.sum(terms, axis=0)
    scale = max(np.sqrt(grid.h * np.sum(t**2)) for t in terms)
    return float(np.sqrt(grid.h * np.sum(total**2)) / scale)


class RankDeficientError(np.linalg.LinAlgError):
    pass


def multiplier_oracle(params: SolitonParams, grid: Grid, source: str = "scattering",
                      cond_limit: float = 1e12) -> Multipliers:
    """Least-squares multipliers from the normal equations on grad H_1..H_N."""
    grads = el_gradients(params, grid, source)
    G = np.array([[grid.h * np.dot(a, b) for b in grads[:-1]] for a in grads[:-1]])
    rhs = -np.array([grid.h * np.dot(a, grads[-1]) for a in grads[:-1]])
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_limit:
        raise RankDeficientError(f"Gram matrix is numerically singular (cond {cond:.3g})")
    return Multipliers(tuple(float(v) for v in np.linalg.solve(G, rhs)))


# ----------------------------------------------------------------------------
# Hessian of the multiplier map


@dataclass(frozen=True)
class HessianD:
    speeds: tuple[float, ...]
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray

    @property
    def BtA(self) -> np.ndarray:
        return self.B.T @ self.A

    @property
    def BtA_normalized(self) -> np.ndarray:
        """B^T A with the overall factor pi removed."""
        return self.BtA / np.pi

    @property
    def asymmetry(self) -> float:
        return float(np.abs(self.D - self.D.T).max())

    def symmetric_part(self) -> np.ndarray:
        return 0.5 * (self.D + self.D.T)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.symmetric_part())

    def positive_count(self, rtol: float = 1e-10) -> int:
        ev = self.eigenvalues()
        return int(np.sum(ev > rtol * np.abs(self.D).max()))


def hessian_D(c) -> HessianD:
    """D = A B^{-1} with a_jk = pi (-1)^{j+1} c_k^{j-1} and b_jk = d sigma_{N-j+1} / d c_k."""
    c = _speeds(c)
    N = len(c)
    if len(np.unique(c)) != N:
        raise ValueError("speeds must be pairwise distinct")
    j = np.arange(1, N + 1)[:, None]
    A = np.pi * (-1.0) ** (j + 1) * c[None, :] ** (j - 1)
    B = np.empty((N, N))
    for k in range(N):
        others = elementary_symmetric(np.delete(c, k))
        for jj in range(1, N + 1):
            B[jj - 1, k] = others[N - jj]  # d sigma_m / d c_k = sigma_{m-1} of the others
    D = np.linalg.solve(B.T, A.T).T
    return HessianD(tuple(c), A, B, D)


def p_of_D(c) -> int:
    return hessian_D(c).positive_count()


def vandermonde_product(c) -> float:
    c = _speeds(c)
    return float(np.prod([c[k] - c[j] for j, k in combinations(range(len(c)), 2)])) if len(c) > 1 else 1.0


# ----------------------------------------------------------------------------
# Augmented Lagrangian


def lyapunov_value(u, params: SolitonParams, grid: Grid | None = None) -> float:
    """S_N(u) = H_{N+1}(u) + sum mu_n H_n(u)."""
    values, grid, _ = _unpack(u, grid)
    tower = conserved_tower(values, params.N + 1, grid)
    mu = vieta_multipliers(params).as_array()
    return float(tower[params.N + 1] + np.dot(mu, tower.values[1:params.N + 1]))


def augmented_lagrangian(u, params: SolitonParams, C: float, grid: Grid | None = None,
                         reference: str = "discrete") -> float:
    """S_N(u) + (C/2) sum_j (H_j(u) - H_j(U))^2.

    reference="discrete" takes H_j(U) from the tower of the sampled N-soliton on
    the same grid, so U is a critical point of the discrete functional.
    reference="trace" uses the continuum trace identities; on a truncated grid
    these differ by O(1/L) and leave a first-order term of size C.
    """
    if C <= 0:
        raise ValueError("penalty must be positive")
    values, grid, _ = _unpack(u, grid)
    N = params.N
    tower = conserved_tower(values, N + 1, grid)
    mu = vieta_multipliers(params).as_array()
    S = tower[N + 1] + np.dot(mu, tower.values[1:N + 1])
    if reference == "discrete":
        ref = conserved_tower(nsoliton_tau(params, grid).values, N, grid).values[1:N + 1]
    elif reference == "trace":
        ref = np.array([trace_identity(params, j) for j in range(1, N + 1)])
    else:
        raise ValueError("reference must be 'discrete' or 'trace'")
    return float(S + 0.5 * C * np.sum((tower.values[1:N + 1] - ref) ** 2))


def default_penalty(params: SolitonParams, grid: Grid, iters: int = 40, seed: int = 0) -> float:
    """10 x an estimate of the spectral norm of S_N'' at the N-soliton
    (power iteration on directional differences of the exact gradient)."""
    U = nsoliton_tau(params, grid).values
    coeffs = vieta_multipliers(params).coefficients()
    eps = np.finfo(float).eps ** (1 / 3) * (1.0 + np.abs(U).max())

    def grad(u):
        return sum(a * recursion_gradient(u, m, grid) for a, m in zip(coeffs, range(params.N + 1, 0, -1)))

    v = np.random.default_rng(seed).standard_normal(grid.n)
    lam = 0.0
    for _ in range(iters):
        v /= np.linalg.norm(v)
        w = (grad(U + eps * v) - grad(U - eps * v)) / (2 * eps)
        lam = float(np.dot(v, w))
        v = w
    return 10.0 * abs(lam)


# ----------------------------------------------------------------------------
# Reports


def variational_record(params: SolitonParams, grid: Grid) -> dict:
    hd = hessian_D(params.speeds)
    return {
        "speeds": list(params.speeds),
        "phases": list(params.phases),
        "mu": list(vieta_multipliers(params).mu),
        "mu_oracle": list(multiplier_oracle(params, grid).mu),
        "el_residual": el_residual(params, grid),
        "el_residual_functional": el_residual(params, grid, source="functional"),
        "D": hd.D.tolist(),
        "D_eigenvalues": hd.eigenvalues().tolist(),
        "BtA": hd.BtA.tolist(),
        "BtA_over_pi": hd.BtA_normalized.tolist(),
        "p_of_D": hd.positive_count(),
    }


def write_variational_json(path, records: list[dict]) -> None:
    keyed = {",".join(f"{c:g}" for c in r["speeds"]): r for r in records}
    with open(path, "w") as fh:
        json.dump(keyed, fh, indent=2, sort_keys=True)
        fh.write("\n")
