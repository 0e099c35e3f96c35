"""Matrix-valued diffusions whose spectra follow the particle systems.

Ground truth at small n: symmetric Brownian matrices, Wishart Gram
matrices and the sigma-diffusion dA = sigma(A) dW sigma(A).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import OrderedSpectrum
from .errors import DomainError, NumericalError

SYM_TOL = 1e-12


@dataclass
class SymMatrixPath:
    """Recorded symmetric matrices at increasing times."""

    n: int
    times: list
    matrices: list

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("times must be increasing")
        for M in self.matrices:
            if M.shape != (self.n, self.n) or np.max(np.abs(M - M.T)) > SYM_TOL:
                raise DomainError("path matrices must be symmetric n x n")

    def at(self, t):
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(t)
        return self.matrices[i]

    @property
    def final(self):
        return self.matrices[-1]

    def spectra(self):
        return [eigenvalues(M) for M in self.matrices]


@dataclass(frozen=True)
class WishartConfig:
    n: int
    m: int
    dt: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < self.n:
            raise DomainError("Wishart paths need m >= n >= 1")
        if not self.dt > 0:
            raise DomainError("dt must be positive")

    @property
    def c(self):
        return self.m / self.n


def _times(dt, t_end, record_times):
    if not (dt > 0 and t_end > 0):
        raise DomainError("dt and t_end must be positive")
    if record_times is None:
        k = int(round(t_end / dt))
        if abs(k * dt - t_end) > 1e-9 * t_end:
            raise DomainError("t_end must be a multiple of dt when record_times is omitted")
        return [i * dt for i in range(k + 1)]
    rec = sorted(float(t) for t in record_times)
    if rec[0] < 0 or rec[-1] > t_end * (1 + 1e-12):
        raise DomainError("record times must lie in [0, t_end]")
    return rec


def _sym_increment(rng, n, var):
    """Symmetric gaussian matrix, independent entries of variance var on and above the diagonal."""
    G = rng.standard_normal((n, n)) * np.sqrt(var)
    U = np.triu(G)
    return U + np.triu(U, 1).T


def simulate_symmetric_bm(n, dt, t_end, seed=0, scale=1.0, record_times=None,
                          A0=None) -> SymMatrixPath:
    """Symmetric Brownian matrix, entry increments of variance scale^2 dt / n.

    Exact increments between the recorded times; dt only sets the default record grid.
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    times = _times(dt, t_end, record_times)
    rng = np.random.default_rng(seed)
    A = np.zeros((n, n)) if A0 is None else np.array(A0, float)
    t, mats = 0.0, []
    for r in times:
        if r > t:
            A = A + _sym_increment(rng, n, scale**2 * (r - t) / n)
            t = r
        mats.append(A.copy())
    return SymMatrixPath(n, times, mats)


def simulate_wishart_path(cfg: WishartConfig, t_end, record_times=None) -> SymMatrixPath:
    """X_t = (1/n) A_t A_t^T for an n x m matrix of independent Brownian motions."""
    times = _times(cfg.dt, t_end, record_times)
    rng = np.random.default_rng(cfg.seed)
    A = np.zeros((cfg.n, cfg.m))
    t, mats = 0.0, []
    for r in times:
        if r > t:
            A = A + rng.standard_normal(A.shape) * np.sqrt(r - t)
            t = r
        X = A @ A.T / cfg.n
        mats.append(0.5 * (X + X.T))
    return SymMatrixPath(cfg.n, times, mats)


def matrix_function(A, fn):
    """fn(A) by eigendecomposition."""
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as e:  # pragma: no cover - LAPACK failure
        np.save("failed_matrix.npy", A)
        raise NumericalError(f"eigendecomposition failed ({e}); matrix saved to failed_matrix.npy")
    return (V * np.asarray(fn(w), float)) @ V.T


def simulate_sigma_diffusion(n, sigma: Callable, dt, t_end, seed=0, scale=1.0,
                             record_times=None, A0=None) -> SymMatrixPath:
    """Euler-Maruyama for dA = sigma(A) dW sigma(A).

    dW is the symmetric increment of simulate_symmetric_bm (variance scale^2 dt / n).
    Recorded times are rounded onto the step grid.
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    times = _times(dt, t_end, record_times)
    rng = np.random.default_rng(seed)
    A = np.zeros((n, n)) if A0 is None else np.array(A0, float)
    steps = [int(round(r / dt)) for r in times]
    mats, k = [], 0
    for s in steps:
        while k < s:
            S = matrix_function(A, sigma)
            dW = _sym_increment(rng, n, scale**2 * dt / n)
            A = A + S @ dW @ S
            A = 0.5 * (A + A.T)
            k += 1
        mats.append(A.copy())
    return SymMatrixPath(n, [s * dt for s in steps], mats)


def eigenvalues(M, tol=1e-10) -> OrderedSpectrum:
    """Sorted eigenvalues of a symmetric matrix."""
    M = np.asarray(M, float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError("matrix must be square")
    if np.max(np.abs(M - M.T), initial=0.0) > tol * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise DomainError("matrix is not symmetric")
    return OrderedSpectrum(np.linalg.eigvalsh(0.5 * (M + M.T)))


def eigenvalue_ensemble(paths: Sequence[SymMatrixPath], t) -> list:
    return [eigenvalues(p.at(t)) for p in paths]
