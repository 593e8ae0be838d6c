"""Direct-oblimin rotation by gradient projection (Jennrich 2002; Bernaards & Jennrich 2005)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RotationResult:
    pattern: np.ndarray
    phi: np.ndarray
    transform: np.ndarray
    iterations: int
    converged: bool


def oblimin_criterion(L: np.ndarray, gamma: float = 0.0) -> tuple[float, np.ndarray]:
    """Oblimin value ``1/4 <L², (I - γC) L² N>`` and its gradient with respect to ``L``."""
    p, k = L.shape
    L2 = L * L
    N = np.ones((k, k)) - np.eye(k)
    X = L2 @ N
    if gamma:
        X = X - gamma * X.mean(axis=0, keepdims=True)
    return float(np.sum(L2 * X) / 4.0), L * X


def rotate_oblimin(
    A: np.ndarray,
    gamma: float = 0.0,
    max_iter: int = 1000,
    tol: float = 1e-5,
) -> RotationResult:
    """Rotate unrotated loadings ``A`` (p x k) obliquely, starting from the identity.

    Returns pattern loadings ``A @ inv(T).T`` and factor correlations ``T.T @ T``.
    The iterate with the lowest criterion value is kept if the projected
    gradient never drops below ``tol``.
    """
    A = np.asarray(A, dtype=float)
    p, k = A.shape
    T = np.eye(k)
    if k == 1:
        return RotationResult(A.copy(), np.ones((1, 1)), T, 0, True)

    def evaluate(T: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        Ti = np.linalg.inv(T)
        L = A @ Ti.T
        f, Gq = oblimin_criterion(L, gamma)
        G = -(L.T @ Gq @ Ti).T
        return f, G, L

    f, G, _ = evaluate(T)
    best = (f, T)
    alpha = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Gp = G - T @ np.diag(np.sum(T * G, axis=0))
        s = np.linalg.norm(Gp)
        if s < tol:
            converged = True
            break
        alpha *= 2.0
        for _ in range(11):
            X = T - alpha * Gp
            Tt = X / np.sqrt(np.sum(X * X, axis=0))
            ft, Gt, _ = evaluate(Tt)
            if ft < f - 0.5 * s * s * alpha:
                break
            alpha /= 2.0
        T, f, G = Tt, ft, Gt
        if f < best[0]:
            best = (f, T)
    if not converged:
        T = best[1]
    pattern = A @ np.linalg.inv(T).T
    phi = T.T @ T
    phi = (phi + phi.T) / 2.0
    np.fill_diagonal(phi, 1.0)
    return RotationResult(pattern, phi, T, it, converged)
