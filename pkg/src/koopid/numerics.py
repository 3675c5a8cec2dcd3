"""Dense linear-algebra kernels: truncated-SVD least squares and POD bases.

Everything here is a pure function of its inputs; results are plain numpy
arrays / frozen dataclasses that are safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .validation import check_matrix

# Relative singular-value floor applied even at "full" rank.  Values below
# REL_TOL * s_max carry no usable information and would amplify noise through
# the pseudoinverse.
REL_TOL = 1e-12

FULL_RANK = "full"


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U @ diag(S) @ Vt`` with singular values descending."""

    U: np.ndarray
    S: np.ndarray
    Vt: np.ndarray

    def reconstruct(self, rank: int | None = None) -> np.ndarray:
        r = self.S.size if rank is None else min(rank, self.S.size)
        return (self.U[:, :r] * self.S[:r]) @ self.Vt[:r]


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal mode matrix with the eigenvalues of the data Gram matrix.

    ``Phi`` holds the leading eigenvectors of ``G @ G.T`` as columns;
    ``eigenvalues`` are all Gram eigenvalues in descending order (kept and
    discarded), and ``energy_fraction`` is the kept share of their sum.
    """

    Phi: np.ndarray
    eigenvalues: np.ndarray
    energy_fraction: float

    @property
    def rho(self) -> int:
        return self.Phi.shape[1]

    def project(self, gamma: np.ndarray) -> np.ndarray:
        return self.Phi.T @ gamma

    def reconstruct(self, omega: np.ndarray) -> np.ndarray:
        return self.Phi @ omega


def svd_factors(a) -> SvdFactors:
    """Thin SVD via LAPACK with a divide-and-conquer fallback."""
    arr = check_matrix(a, "a")
    try:
        u, s, vt = scipy.linalg.svd(arr, full_matrices=False)
    except scipy.linalg.LinAlgError:  # pragma: no cover - rare gesdd failure
        u, s, vt = scipy.linalg.svd(arr, full_matrices=False, lapack_driver="gesvd")
    return SvdFactors(U=u, S=s, Vt=vt)


def _effective_rank(s: np.ndarray, rank) -> int:
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("matrix is identically zero; pseudoinverse undefined")
    floor = int(np.sum(s > REL_TOL * s[0]))
    if rank == FULL_RANK or rank is None:
        return floor
    r = int(rank)
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if r > s.size:
        raise ValueError(f"rank {r} exceeds max possible rank {s.size}")
    return min(r, floor)


def truncated_pinv_solve(Y, Z, rank=FULL_RANK) -> np.ndarray:
    """Least-squares solve ``min_M ||Y - M Z||_F`` through a truncated SVD of Z.

    ``Y`` is p-by-d, ``Z`` is s-by-d; the result is p-by-s.  ``rank`` limits
    the number of singular values of ``Z`` retained for the pseudoinverse
    (``"full"`` keeps everything above the relative floor).
    """
    y = check_matrix(Y, "Y")
    z = check_matrix(Z, "Z")
    if y.shape[1] != z.shape[1]:
        raise ValueError(
            f"Y and Z must share snapshot columns: {y.shape[1]} != {z.shape[1]}"
        )
    f = svd_factors(z)
    r = _effective_rank(f.S, rank)
    # M = Y V_r S_r^{-1} U_r^T
    return (y @ f.Vt[:r].T / f.S[:r]) @ f.U[:, :r].T


def pod_basis(Gamma, rho: int) -> PodBasis:
    """Leading eigenvectors of ``Gamma @ Gamma.T`` ordered by eigenvalue.

    Computed through the SVD of ``Gamma`` (eigenvalues are squared singular
    values) to avoid squaring the condition number by forming the Gram
    matrix.  Each mode is signed so its largest-magnitude entry is positive.
    """
    g = check_matrix(Gamma, "Gamma")
    rho = int(rho)
    max_rho = min(g.shape)
    if not 1 <= rho <= max_rho:
        raise ValueError(f"rho must be in [1, {max_rho}], got {rho}")
    f = svd_factors(g)
    eigenvalues = f.S**2
    phi = f.U[:, :rho].copy()
    lead = np.abs(phi).argmax(axis=0)
    signs = np.sign(phi[lead, np.arange(rho)])
    signs[signs == 0] = 1.0
    phi *= signs
    total = float(eigenvalues.sum())
    kept = float(eigenvalues[:rho].sum())
    fraction = kept / total if total > 0 else 0.0
    return PodBasis(Phi=phi, eigenvalues=eigenvalues, energy_fraction=fraction)
