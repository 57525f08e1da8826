"""Non-adaptive (batch) sensing matrix constructions.

All designs return matrices with orthonormal rows, the row-orthogonality
condition the mixture model reduces the restricted-isometry objective to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import orthonormalize_rows, svd_descending_signed
from .model import GaussianComponent, GmmModel, _readonly

__all__ = [
    "SensingMatrix",
    "random_orthonormal",
    "eigen_sensing",
    "average_basis",
    "procrustes_rotation",
    "rip_ab",
]


@dataclass(frozen=True)
class SensingMatrix:
    """M x N sensing matrix with orthonormal rows.

    block_size groups the rows into blocks for the adaptive protocols; it
    does not affect the matrix itself.
    """

    rows: np.ndarray
    block_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "rows", _readonly(self.rows))
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-D array")
        m, n = self.rows.shape
        if m > n:
            raise ValueError(f"more rows than columns ({m} > {n})")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        resid = np.abs(self.rows @ self.rows.T - np.eye(m)).max()
        if resid > 1e-8:
            raise ValueError(f"rows are not orthonormal (residual {resid:.3e})")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def dimension(self) -> int:
        return self.rows.shape[1]


def random_orthonormal(m: int, n: int, seed=0, block_size: int = 1) -> SensingMatrix:
    """Orthonormalized rows of an M x N standard Gaussian draw.

    Row-space preserving and deterministic given the seed.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    rows = orthonormalize_rows(rng.standard_normal((m, n)))
    return SensingMatrix(rows=rows, block_size=block_size)


def eigen_sensing(component: GaussianComponent, m: int, block_size: int = 1) -> SensingMatrix:
    """Transposed first m eigenvectors of a component covariance.

    The minimum-MSE non-adaptive design for a signal known to come from
    this component: the measurement matrix times the basis is [I_m 0].
    """
    n = component.dimension
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    return SensingMatrix(rows=component.basis[:, :m].T, block_size=block_size)


def average_basis(model: GmmModel) -> np.ndarray:
    """Prior-weighted average of the component bases."""
    return np.einsum("g,gij->ij", model.priors, model.basis_stack)


def procrustes_rotation(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Orthogonal X minimizing ||A X - C||_F subject to X X^T = I.

    Classic orthogonal Procrustes solution: with A^T C = U S W^T, the
    minimizer is X = U W^T.
    """
    u, _, wt = svd_descending_signed(np.asarray(a).T @ np.asarray(c))
    return u @ wt


def rip_ab(model: GmmModel, m: int, block_size: int = 1) -> SensingMatrix:
    """Batch design aligning the prior-weighted average basis with identity.

    Computes the SVD E = U S W^T of the average basis (descending singular
    values, deterministic signs) and returns the first m rows of W U^T.
    For a single-component model this reduces to eigen_sensing of that
    component, since W U^T = E^T when E is orthogonal.
    """
    n = model.dimension
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    e = average_basis(model)
    u, _, wt = svd_descending_signed(e)
    b = wt.T @ u.T
    return SensingMatrix(rows=b[:m], block_size=block_size)
