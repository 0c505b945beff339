"""Dense linear-algebra certificates for the follower Laplacian block.

All functions are pure and work on the small matrices that appear at desk
scale (tens of followers), so the Lyapunov equation is solved directly in
Kronecker (vectorized) form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GammaOutOfRange, NotHurwitz

HURWITZ_TOL = 1e-10
PD_RTOL = 1e-10


@dataclass(frozen=True)
class LyapunovCertificate:
    """Symmetric P with ``P @ L_FF + L_FF.T @ P = I``."""

    P: np.ndarray
    lambda_max_P: float
    lambda_min_P: float
    residual: float

    @property
    def size(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class DynamicLeaderCertificate:
    k: float
    gamma: float
    P_bar: np.ndarray
    Q: np.ndarray
    k_threshold: float
    P_bar_min_eig: float
    Q_min_eig: float
    P_bar_pd: bool
    Q_pd: bool

    @property
    def k_above_threshold(self) -> bool:
        return self.k > self.k_threshold


def hurwitz_check(M) -> bool:
    """True iff every eigenvalue of ``-M`` has real part below ``-1e-10``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return bool(np.all(np.linalg.eigvals(M).real > HURWITZ_TOL))


def is_positive_definite(S, rtol: float = PD_RTOL) -> tuple[bool, float]:
    """Positive-definiteness of a symmetric matrix; returns (verdict, min eigenvalue).

    Tries a Cholesky factorization of ``S - tol*I`` with ``tol`` relative to the
    trace and falls back to the eigenvalue spectrum for the reported minimum.
    """
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    min_eig = float(np.linalg.eigvalsh(S)[0])
    tol = rtol * max(abs(np.trace(S)), 1.0)
    try:
        np.linalg.cholesky(S - tol * np.eye(S.shape[0]))
        ok = True
    except np.linalg.LinAlgError:
        ok = False
    return ok, min_eig


def solve_lyapunov(L_FF) -> LyapunovCertificate:
    """Solve ``P L + L^T P = I`` by the vectorized linear system.

    With row-major vec, ``vec(P L) = (I kron L^T) vec(P)`` and
    ``vec(L^T P) = (L^T kron I) vec(P)``.
    """
    L = np.atleast_2d(np.asarray(L_FF, dtype=float))
    n = L.shape[0]
    if not hurwitz_check(L):
        eig = np.linalg.eigvals(L)
        raise NotHurwitz(f"-L_FF is not Hurwitz: min Re(eig(L_FF)) = {eig.real.min():.3g}")
    I = np.eye(n)
    K = np.kron(I, L.T) + np.kron(L.T, I)
    P = np.linalg.solve(K, I.ravel()).reshape(n, n)
    P = 0.5 * (P + P.T)
    residual = float(np.linalg.norm(P @ L + L.T @ P - I, "fro"))
    eig = np.linalg.eigvalsh(P)
    return LyapunovCertificate(P, float(eig[-1]), float(eig[0]), residual)


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise GammaOutOfRange(f"gamma must lie in (0, 1), got {gamma}")


def gain_threshold(cert: LyapunovCertificate, gamma: float) -> float:
    """Strict lower bound on the feedback gain ``k``: ``lambda_max(P) / (2 gamma (1 - gamma^2))``."""
    _check_gamma(gamma)
    return cert.lambda_max_P / (2.0 * gamma * (1.0 - gamma ** 2))


def build_dynamic_certificate(cert: LyapunovCertificate, k: float, gamma: float) -> DynamicLeaderCertificate:
    _check_gamma(gamma)
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    P = cert.P
    n = P.shape[0]
    I = np.eye(n)
    P_bar = np.block([[P, -gamma * P], [-gamma * P, P]])
    Q = np.block([[k * (1 - gamma ** 2) * I, -P], [-P, 2 * gamma * P]])
    pbar_pd, pbar_min = is_positive_definite(P_bar)
    q_pd, q_min = is_positive_definite(Q)
    return DynamicLeaderCertificate(
        k=float(k), gamma=float(gamma), P_bar=P_bar, Q=Q,
        k_threshold=gain_threshold(cert, gamma),
        P_bar_min_eig=pbar_min, Q_min_eig=q_min, P_bar_pd=pbar_pd, Q_pd=q_pd,
    )


def build_F_matrix(L_FF, k: float, gamma: float, N: int = 1) -> np.ndarray:
    """Drift matrix of the stacked (position, estimator) error system."""
    L = np.atleast_2d(np.asarray(L_FF, dtype=float))
    n = L.shape[0]
    F = np.block([[k * L, -np.eye(n)], [gamma * k * L, np.zeros((n, n))]])
    return np.kron(F, np.eye(N))


def build_upsilon(omega_f, k: float, gamma: float, N: int = 1) -> np.ndarray:
    """Diffusion matrix of the stacked error system, ``[[k Omega], [gamma k Omega]] kron I_N``."""
    Om = np.diag(np.asarray(omega_f, dtype=float))
    return np.kron(np.vstack([k * Om, gamma * k * Om]), np.eye(N))
