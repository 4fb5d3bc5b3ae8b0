"""Symmetric eigendecomposition by cyclic Jacobi rotations, and PCA on top of it."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class ConvergenceWarning(UserWarning):
    pass


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive (first on ties)."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def jacobi_eigh(A, tol: float | None = None, max_sweeps: int = 50):
    """Eigenvalues and eigenvectors of a real symmetric matrix.

    Cyclic Jacobi: every off-diagonal pair (p, q) is annihilated in turn by a
    plane rotation until the off-diagonal Frobenius norm drops below ``tol``
    (default ``1e-12 * ||A||_F``).

    Returns
    -------
    eigenvalues : (d,) array, descending
    eigenvectors : (d, d) array whose columns are the eigenvectors
    """
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(A - A.T)) > 1e-10:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    d = A.shape[0]
    if tol is None:
        tol = 1e-12 * np.linalg.norm(A)
    V = np.eye(d)

    offdiag = ~np.eye(d, dtype=bool)

    def off_norm(M):
        return float(np.linalg.norm(M[offdiag]))

    converged = off_norm(A) <= tol
    sweeps = 0
    while not converged and sweeps < max_sweeps:
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(diff) + 100.0 * abs(apq) == abs(diff):
                    # theta**2 would overflow; t ~ 1 / (2 theta).
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation; rows then columns.
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        sweeps += 1
        converged = off_norm(A) <= tol
    if not converged:
        warnings.warn(f"Jacobi did not converge in {max_sweeps} sweeps "
                      f"(off-diagonal norm {off_norm(A):.3e} > {tol:.3e})", ConvergenceWarning)

    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], _canonical_signs(V[:, order])


@dataclass(frozen=True, eq=False)
class PCAModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (c, d), rows are principal directions
    eigenvalues: np.ndarray  # (c,)
    explained_ratio: np.ndarray  # (c,)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    def truncated(self, c: int) -> "PCAModel":
        if not 1 <= c <= self.n_components:
            raise ValueError(f"cannot keep {c} of {self.n_components} components")
        return PCAModel(self.mean, self.components[:c].copy(),
                        self.eigenvalues[:c].copy(), self.explained_ratio[:c].copy())

    def to_json(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.ravel().tolist(),
            "n_components": self.n_components,
            "eigenvalues": self.eigenvalues.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "PCAModel":
        mean = np.asarray(obj["mean"], dtype=np.float64)
        comps = np.asarray(obj["components"], dtype=np.float64).reshape(int(obj["n_components"]), -1)
        return cls(mean, comps, np.asarray(obj["eigenvalues"], dtype=np.float64),
                   np.asarray(obj["explained_ratio"], dtype=np.float64))


def fit_pca(X) -> PCAModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected a 2-D data matrix")
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {n}")
    if not np.isfinite(X).all():
        raise ValueError("data has non-finite entries")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    vals, vecs = jacobi_eigh(cov)
    vals = np.where(vals < 0.0, 0.0, vals)
    total = vals.sum()
    ratio = vals / total if total > 0 else np.zeros_like(vals)
    return PCAModel(mean, vecs.T.copy(), vals, ratio)


def transform_pca(model: PCAModel, X, c: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"expected {model.dim} columns, got shape {X.shape}")
    if c is None:
        c = model.n_components
    if not 0 <= c <= model.n_components:
        raise ValueError(f"cannot keep {c} of {model.n_components} components")
    return (X - model.mean) @ model.components[:c].T


def inverse_transform_pca(model: PCAModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    c = Z.shape[1]
    return Z @ model.components[:c] + model.mean
