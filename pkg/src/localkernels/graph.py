"""Kernel-matrix assembly and the normalizations that turn it into a generator.

Matrices are scipy CSR in kNN mode and dense ndarrays in dense mode; every
function here accepts either. Generators follow the lambda <= 0 convention:
``L @ 1 == 0`` and the spectrum of ``-L`` is nonnegative for symmetric kernels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import DataFormatError, IsolatedPointError, KernelError
from .kernels import LocalKernel, RadialKernel, symmetrize
from .manifolds import PointCloud

__all__ = [
    "SparseKernelMatrix",
    "GeneratorMatrix",
    "DEFAULT_KNN",
    "assemble",
    "row_sums",
    "right_normalize",
    "left_normalize",
    "diffusion_maps_generator",
    "diffusion_maps_operator",
    "local_kernel_generator",
    "adjoint_generator",
    "subtraction_generator",
    "intrinsic_laplacian",
    "intrinsic_laplacian_operator",
    "epsilon_heuristic",
    "save_coo",
    "load_coo",
]

DEFAULT_KNN = 64
KINDS = ("kolmogorov", "fokker_planck", "intrinsic_laplacian")

Matrix = Union[np.ndarray, sp.csr_matrix]


def _points(cloud):
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)


@dataclass(frozen=True)
class SparseKernelMatrix:
    """Nonnegative N x N kernel weights with their bandwidth and storage mode.

    ``sparsity`` is ``"dense"`` or ``"knn(k)"``. ``normalization`` records the
    steps applied so far (``"raw"``, ``"right(alpha)"``, ``"left"``).
    """

    weights: Matrix
    epsilon: float
    sparsity: str = "dense"
    symmetric: bool = False
    normalization: str = "raw"

    def __post_init__(self):
        W = self.weights
        if sp.issparse(W):
            W = sp.csr_matrix(W)
            W.sum_duplicates()
            W.sort_indices()
            object.__setattr__(self, "weights", W)
            data = W.data
        else:
            W = np.asarray(W, dtype=float)
            object.__setattr__(self, "weights", W)
            data = W
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"kernel matrix must be square, got shape {W.shape}")
        if not np.all(np.isfinite(data)):
            raise KernelError("kernel matrix has non-finite entries")
        if np.any(data < 0):
            raise KernelError("kernel matrix has negative entries")
        if self.symmetric:
            diff = W - W.T
            if (abs(diff).max() if sp.issparse(diff) else np.abs(diff).max()) != 0:
                raise ValueError("symmetric flag set but matrix differs from its transpose")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def toarray(self) -> np.ndarray:
        W = self.weights
        return W.toarray() if sp.issparse(W) else np.array(W)

    def scaled(self, c: float) -> "SparseKernelMatrix":
        return SparseKernelMatrix(self.weights * c, self.epsilon, self.sparsity, self.symmetric, self.normalization)


@dataclass(frozen=True)
class GeneratorMatrix:
    """Discrete operator approximating a generator or Laplacian.

    When the operator has the form ``scale * (diag(left) S diag(right) - I)``
    with S symmetric, the factors are kept so the eigensolver can work on
    the conjugated symmetric problem.
    """

    operator: Matrix
    kind: str
    epsilon: float
    alpha: Optional[float] = None
    sym_kernel: Optional[Matrix] = None
    left: Optional[np.ndarray] = None
    right: Optional[np.ndarray] = None
    scale: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.operator.shape[0]

    @property
    def has_symmetric_form(self) -> bool:
        return self.sym_kernel is not None

    def apply(self, f) -> np.ndarray:
        return np.asarray(self.operator @ np.asarray(f, dtype=float))

    def __matmul__(self, f):
        return self.apply(f)

    def toarray(self) -> np.ndarray:
        L = self.operator
        return L.toarray() if sp.issparse(L) else np.array(L)


# -- assembly ------------------------------------------------------------------


def _parse_knn(knn):
    if knn is None or knn == "dense":
        return None
    if isinstance(knn, str):
        knn = int(knn.removeprefix("knn(").removesuffix(")"))
    if int(knn) != knn or knn < 1:
        raise ValueError(f"knn must be a positive integer or 'dense', got {knn}")
    return int(knn)


def knn_pattern(points: np.ndarray, k: int):
    """Row/col indices of the union-symmetrized k-nearest-neighbor pattern, self included."""
    n = len(points)
    if k >= n:
        raise ValueError(f"knn k={k} must be smaller than the number of points N={n}")
    _, idx = cKDTree(points).query(points, k=k + 1)
    rows = np.repeat(np.arange(n), k + 1)
    cols = idx.ravel()
    P = sp.coo_matrix((np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n)).tocsr()
    P = (P + P.T + sp.identity(n, dtype=bool, format="csr")).tocsr()
    P.sort_indices()
    P = P.tocoo()
    return P.row.astype(np.int64), P.col.astype(np.int64)


def assemble(cloud, kernel: LocalKernel, knn=DEFAULT_KNN) -> SparseKernelMatrix:
    """Evaluate ``kernel`` on all pairs (dense) or on a kNN pattern.

    Parameters
    ----------
    cloud : PointCloud or (N, n) array
    kernel : LocalKernel
    knn : int, "knn(k)", "dense" or None
        Neighbors per row, not counting the point itself. The pattern is
        symmetrized by union so (i, j) is stored whenever (j, i) is.
    """
    pts = _points(cloud)
    n = len(pts)
    k = _parse_knn(knn)
    if k is None:
        rows, cols = np.triu_indices(n) if kernel.symmetric else np.indices((n, n)).reshape(2, -1)
    else:
        rows, cols = knn_pattern(pts, k)
        if kernel.symmetric:
            keep = rows <= cols
            rows, cols = rows[keep], cols[keep]
    vals = kernel.pair_values(pts, rows, cols)
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        i = int(rows[bad[0]])
        raise KernelError(f"non-finite kernel value at pair ({i}, {int(cols[bad[0]])})", index=i)

    if k is None:
        W = np.zeros((n, n))
        W[rows, cols] = vals
        if kernel.symmetric:
            W[cols, rows] = vals
        return SparseKernelMatrix(W, kernel.epsilon, "dense", kernel.symmetric)

    if kernel.symmetric:
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return SparseKernelMatrix(W, kernel.epsilon, f"knn({k})", kernel.symmetric)


# -- normalizations --------------------------------------------------------------


def row_sums(W: Matrix) -> np.ndarray:
    return np.asarray(W.sum(axis=1)).ravel()


def _check_positive(s, what):
    bad = np.nonzero(~(s > 0))[0]
    if bad.size:
        i = int(bad[0])
        raise IsolatedPointError(f"{what} of point {i} is {s[i]}; the point is isolated", index=i)


def _scale(W: Matrix, left=None, right=None) -> Matrix:
    if sp.issparse(W):
        out = W
        if left is not None:
            out = sp.diags(left) @ out
        if right is not None:
            out = out @ sp.diags(right)
        return sp.csr_matrix(out)
    out = np.array(W, dtype=float)
    if left is not None:
        out *= left[:, None]
    if right is not None:
        out *= right[None, :]
    return out


def _wrap(K, W, normalization, symmetric=False):
    if isinstance(K, SparseKernelMatrix):
        return SparseKernelMatrix(W, K.epsilon, K.sparsity, symmetric, normalization)
    return W


def _weights(K):
    return K.weights if isinstance(K, SparseKernelMatrix) else K


def right_normalize(K, alpha: float):
    """Divide column j by q_j**alpha, where q_j is the sum of row j."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0:
        return K
    W = _weights(K)
    q = row_sums(W)
    _check_positive(q, "kernel sum")
    return _wrap(K, _scale(W, right=q**-alpha), f"right({alpha:g})")


def left_normalize(K):
    """Divide each row by its sum, giving a row-stochastic matrix."""
    W = _weights(K)
    s = row_sums(W)
    _check_positive(s, "row sum")
    return _wrap(K, _scale(W, left=1.0 / s), "left")


def _minus_identity(M: Matrix, scale: float) -> Matrix:
    n = M.shape[0]
    if sp.issparse(M):
        return sp.csr_matrix((M - sp.identity(n, format="csr")) * scale)
    return (M - np.eye(n)) * scale


def _eps(K, epsilon):
    if epsilon is None:
        if not isinstance(K, SparseKernelMatrix):
            raise ValueError("epsilon is required for a bare matrix")
        epsilon = K.epsilon
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return float(epsilon)


def _symmetric_generator(S, right, scale, kind, epsilon, alpha):
    """scale * (diag(l) S diag(r) - I) with l chosen to make rows sum to one."""
    s = np.asarray(S @ right).ravel()
    _check_positive(s, "row sum")
    left = 1.0 / s
    M = _scale(S, left=left, right=right)
    return GeneratorMatrix(_minus_identity(M, scale), kind, epsilon, alpha, S, left, right, scale)


def diffusion_maps_operator(K, alpha: float, epsilon=None) -> GeneratorMatrix:
    """(D^{-1} K_alpha - I) / eps on an assembled radial kernel matrix."""
    eps = _eps(K, epsilon)
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    W = _weights(K)
    symmetric = K.symmetric if isinstance(K, SparseKernelMatrix) else False
    q = row_sums(W)
    _check_positive(q, "kernel sum")
    right = q**-alpha
    if symmetric:
        return _symmetric_generator(W, right, 1.0 / eps, "kolmogorov", eps, alpha)
    M = _weights(left_normalize(right_normalize(W, alpha)))
    return GeneratorMatrix(_minus_identity(M, 1.0 / eps), "kolmogorov", eps, alpha)


def diffusion_maps_generator(cloud, kernel: LocalKernel, alpha: float = 1.0, knn=DEFAULT_KNN) -> GeneratorMatrix:
    """assemble -> right_normalize(alpha) -> left_normalize -> (M - I) / eps."""
    if not isinstance(kernel, RadialKernel):
        raise TypeError("diffusion maps requires a radial kernel")
    return diffusion_maps_operator(assemble(cloud, kernel, knn), alpha)


def local_kernel_generator(K, epsilon=None) -> GeneratorMatrix:
    """L_eps = (D^{-1} K - I) / eps; limit is the kernel's generator over m."""
    return diffusion_maps_operator(K, 0.0, epsilon)


def adjoint_generator(K, epsilon=None) -> GeneratorMatrix:
    """L*_eps = ((D^{-1} K)^T - I) / eps. Columns of the operator sum to zero."""
    eps = _eps(K, epsilon)
    M = _weights(left_normalize(_weights(K)))
    M = sp.csr_matrix(M.T) if sp.issparse(M) else np.ascontiguousarray(M.T)
    return GeneratorMatrix(_minus_identity(M, 1.0 / eps), "fokker_planck", eps, 0.0)


def subtraction_generator(K, m_estimate=1.0, epsilon=None) -> GeneratorMatrix:
    """(K f - f K 1) / (eps m), the weighted graph Laplacian form.

    ``m_estimate`` is a scalar or a per-point array dividing the rows. A
    symmetric K with scalar m gives a symmetric operator.
    """
    eps = _eps(K, epsilon)
    W = _weights(K)
    m = np.broadcast_to(np.asarray(m_estimate, dtype=float), (W.shape[0],))
    _check_positive(m, "zeroth-moment estimate")
    s = row_sums(W)
    if sp.issparse(W):
        G = sp.csr_matrix(W - sp.diags(s))
    else:
        G = np.array(W, dtype=float) - np.diag(s)
    return GeneratorMatrix(_scale(G, left=1.0 / (eps * m)), "kolmogorov", eps, None)


def intrinsic_laplacian_operator(K, epsilon=None) -> GeneratorMatrix:
    """(2 / eps) (D^{-1} K_bar Q^{-1} - I) for a kernel matrix.

    K_bar = K + K^T; Q holds the row sums of K_bar (full column-sum right
    normalization), D the row sums after it.
    """
    eps = _eps(K, epsilon)
    W = _weights(K)
    symmetric = K.symmetric if isinstance(K, SparseKernelMatrix) else False
    S = W if symmetric else W + W.T
    if sp.issparse(S):
        S = sp.csr_matrix(S)
    q = row_sums(S)
    _check_positive(q, "kernel sum")
    return _symmetric_generator(S, 1.0 / q, 2.0 / eps, "intrinsic_laplacian", eps, 1.0)


def intrinsic_laplacian(cloud, kernel: LocalKernel, knn=DEFAULT_KNN) -> GeneratorMatrix:
    """Laplacian of the intrinsic geometry of ``kernel`` with sampling bias removed."""
    if not kernel.symmetric:
        kernel = symmetrize(kernel)
    return intrinsic_laplacian_operator(assemble(cloud, kernel, knn))


def epsilon_heuristic(cloud) -> float:
    """Mean squared distance to the nearest non-self neighbor.

    Points with a duplicate (zero nearest-neighbor distance) are left out
    of the mean, with a warning.
    """
    pts = _points(cloud)
    if len(pts) < 2:
        raise ValueError("epsilon heuristic needs at least two points")
    tree = cKDTree(pts)
    d, _ = tree.query(pts, k=2)
    nn = d[:, 1]
    dup = nn == 0
    if dup.any():
        warnings.warn(f"{int(dup.sum())} points have an exact duplicate; excluded from the bandwidth estimate", stacklevel=2)
        nn = nn[~dup]
        if nn.size == 0:
            raise ValueError("all points are duplicates; bandwidth undefined")
    return float(np.mean(nn**2))


# -- coordinate-list text format -------------------------------------------------


def save_coo(matrix, path, epsilon=None, kind="kernel") -> None:
    """Write ``N epsilon kind`` then one ``i,j,value`` line per stored entry."""
    if isinstance(matrix, GeneratorMatrix):
        epsilon, kind, W = matrix.epsilon, matrix.kind, matrix.operator
    elif isinstance(matrix, SparseKernelMatrix):
        epsilon, W = matrix.epsilon, matrix.weights
    else:
        W = matrix
    if epsilon is None:
        raise ValueError("epsilon is required")
    C = sp.coo_matrix(W) if not sp.issparse(W) else W.tocoo()
    C = sp.csr_matrix(C)
    C.sort_indices()
    C = C.tocoo()
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"{C.shape[0]} {format(float(epsilon), '.17g')} {kind}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i},{j},{format(float(v), '.17g')}\n")


def load_coo(path):
    """Inverse of :func:`save_coo`. Returns (csr matrix, epsilon, kind)."""
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise DataFormatError("header must be 'N epsilon kind'", row=1)
        try:
            n, eps = int(header[0]), float(header[1])
        except ValueError:
            raise DataFormatError("header must be 'N epsilon kind'", row=1) from None
        rows, cols, vals = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataFormatError(f"expected 3 fields, got {len(parts)}", row=lineno)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise DataFormatError(f"bad entry ({exc})", row=lineno) from None
            if not (0 <= i < n and 0 <= j < n):
                raise DataFormatError(f"index ({i}, {j}) outside 0..{n - 1}", row=lineno)
            rows.append(i)
            cols.append(j)
            vals.append(v)
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return W, eps, header[2]
