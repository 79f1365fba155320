"""Geometric regularization: conformally invariant embeddings and diffeomorphism recovery."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .errors import RankDeficiencyError
from .graph import (
    DEFAULT_KNN,
    SparseKernelMatrix,
    assemble,
    diffusion_maps_generator,
    epsilon_heuristic,
    intrinsic_laplacian,
    row_sums,
)
from .kernels import ConformalKernel, JacobianKernel, RadialKernel
from .manifolds import PointCloud
from .spectral import LinearMap, SpectralEmbedding, decompose, fit_linear_map

__all__ = [
    "DensityEstimate",
    "JacobianField",
    "DiffeoResult",
    "estimate_density",
    "conformal_kernel_matrix",
    "conformal_embedding",
    "diffusion_embedding",
    "estimate_jacobians",
    "diffeo_kernel_matrix",
    "reconstruct_diffeomorphism",
]


@dataclass(frozen=True)
class DensityEstimate:
    """Relative sampling density (unit mean) and the bandwidth it used."""

    q: np.ndarray
    epsilon_used: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if not np.all(np.isfinite(q) & (q > 0)):
            raise ValueError("density estimate must be positive and finite")


@dataclass(frozen=True)
class JacobianField:
    """Per-point m x n matrices mapping source displacements to target displacements."""

    jacobians: np.ndarray
    neighbor_count: int
    epsilon_used: float


def estimate_density(cloud: PointCloud, epsilon: Optional[float] = None, knn=DEFAULT_KNN) -> DensityEstimate:
    """q_i = sum_j exp(-|x_i - x_j|^2 / (4 eps)), scaled to unit mean.

    These are the row sums used by the alpha = 1 right normalization.
    """
    eps = epsilon_heuristic(cloud) if epsilon is None else float(epsilon)
    q = row_sums(assemble(cloud, RadialKernel(eps), knn).weights)
    return DensityEstimate(q / q.mean(), eps)


def conformal_kernel_matrix(cloud, q: DensityEstimate, d: int, epsilon: float, knn=DEFAULT_KNN) -> SparseKernelMatrix:
    """Variable-bandwidth kernel exp(-|x - y|^2 q(x)^{2/d} / (4 eps)); not symmetric."""
    qv = q.q if isinstance(q, DensityEstimate) else np.asarray(q, dtype=float)
    return assemble(cloud, ConformalKernel(epsilon, qv, d), knn)


def conformal_embedding(
    cloud: PointCloud, d: int, k_eigs: int, epsilon: Optional[float] = None, knn=DEFAULT_KNN
) -> SpectralEmbedding:
    """Eigenpairs of the Laplacian for the metric q^{2/d} g, which is unchanged by conformal maps."""
    if int(d) != d or d < 1:
        raise ValueError(f"intrinsic dimension must be a positive integer, got {d}")
    if k_eigs < 2:
        raise ValueError(f"k_eigs must be at least 2, got {k_eigs}")
    eps = epsilon_heuristic(cloud) if epsilon is None else float(epsilon)
    q = estimate_density(cloud, eps, knn)
    L = intrinsic_laplacian(cloud, ConformalKernel(eps, q.q, int(d)), knn)
    return decompose(L, k_eigs)


def diffusion_embedding(cloud: PointCloud, k_eigs: int, alpha: float = 1.0, epsilon=None, knn=DEFAULT_KNN):
    """Standard diffusion-maps eigenpairs with the bandwidth heuristic."""
    eps = epsilon_heuristic(cloud) if epsilon is None else float(epsilon)
    return decompose(diffusion_maps_generator(cloud, RadialKernel(eps), alpha, knn), k_eigs)


def _correspond(source: PointCloud, target: PointCloud):
    if source.n_points != target.n_points:
        raise ValueError(f"clouds differ in size ({source.n_points} vs {target.n_points})")
    if source.labels is not None and target.labels is not None and source.labels != target.labels:
        raise ValueError("clouds carry different correspondence labels")


def estimate_jacobians(
    source: PointCloud,
    target: PointCloud,
    k: Optional[int] = None,
    epsilon: Optional[float] = None,
    dim: Optional[int] = None,
) -> JacobianField:
    """Weighted local least-squares Jacobians of the correspondence source -> target.

    Neighbors are the k nearest of x_i in the source cloud. Both displacement
    sets are weighted by exp(-|x_j - x_i|^2 / eps); DH_i is the minimum-norm
    solution, which is exact on the span of the source displacements.
    On a curved sample the normal column absorbs the second-order terms,
    which keeps the tangential action accurate.
    """
    _correspond(source, target)
    X, Y = source.points, target.points
    n = X.shape[1]
    k = 2 * n + 8 if k is None else int(k)
    if k < n:
        raise ValueError(f"neighbor count k={k} must be at least the ambient dimension {n}")
    if k >= len(X):
        raise ValueError(f"neighbor count k={k} must be smaller than N={len(X)}")
    d = dim if dim is not None else (source.intrinsic_dim or 1)
    eps = epsilon_heuristic(source) if epsilon is None else float(epsilon)
    _, idx = cKDTree(X).query(X, k=k + 1)
    nbrs = idx[:, 1:]
    V = X[nbrs] - X[:, None, :]
    Vt = Y[nbrs] - Y[:, None, :]
    w = np.exp(-np.einsum("kja,kja->kj", V, V) / eps)[:, :, None]
    V, Vt = V * w, Vt * w
    J = np.empty((len(X), Y.shape[1], n))
    for i in range(len(X)):
        sol, _, rank, _ = linalg.lstsq(V[i], Vt[i], cond=1e-8)
        if rank < d:
            raise RankDeficiencyError(
                f"neighborhood of point {i} has rank {rank} < {d}; increase k or check for duplicates", index=i
            )
        J[i] = sol.T
    return JacobianField(J, k, eps)


def diffeo_kernel_matrix(cloud, J: JacobianField, epsilon: float, knn=DEFAULT_KNN) -> SparseKernelMatrix:
    """exp(-|DH_i (x_j - x_i)|^2 / (2 eps)); not symmetric."""
    jac = J.jacobians if isinstance(J, JacobianField) else J
    return assemble(cloud, JacobianKernel(epsilon, jac), knn)


@dataclass(frozen=True)
class DiffeoResult:
    """Embeddings of both clouds and the linear map between them."""

    source_embedding: SpectralEmbedding
    target_embedding: SpectralEmbedding
    map: LinearMap
    jacobians: JacobianField
    epsilon_source: float


def reconstruct_diffeomorphism(
    source: PointCloud,
    target: PointCloud,
    n_eigs: int = 10,
    knn=DEFAULT_KNN,
    jacobian_k: Optional[int] = None,
    epsilon: Optional[float] = None,
) -> DiffeoResult:
    """Pull the source geometry onto the target and fit the linear map between eigenfunctions.

    Diffusion maps (alpha = 1) on the source give Phi~. Jacobians of
    target -> source define a kernel on the target whose intrinsic Laplacian
    is isometric to the source Laplacian; its eigenfunctions give Phi. The
    map H minimizes |Phi~ - H Phi| over eigenfunctions 1..n_eigs.

    The diffusion-maps kernel exp(-r^2 / (4 eps)) has variance 2 eps per
    direction, so the Jacobian kernel runs at bandwidth 2 eps to match it;
    both Laplacians then carry the same discretization bias.
    """
    if n_eigs < 2:
        raise ValueError(f"n_eigs must be at least 2, got {n_eigs}")
    _correspond(source, target)
    eps = epsilon_heuristic(source) if epsilon is None else float(epsilon)
    phi_src = diffusion_embedding(source, n_eigs + 1, 1.0, eps, knn)
    J = estimate_jacobians(target, source, jacobian_k, dim=source.intrinsic_dim or None)
    L = intrinsic_laplacian(target, JacobianKernel(2 * eps, J.jacobians), knn)
    phi_tgt = decompose(L, n_eigs + 1)
    idx = list(range(1, n_eigs + 1))
    H = fit_linear_map(phi_tgt.eigenvectors[:, idx], phi_src.eigenvectors[:, idx])
    return DiffeoResult(phi_src, phi_tgt, H, J, eps)
