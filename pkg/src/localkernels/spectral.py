"""Eigendecomposition of generators, spectral coordinates, and linear maps between them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse import linalg as spla

from .errors import DataFormatError, EigensolverError, RankDeficiencyError
from .graph import GeneratorMatrix

__all__ = [
    "SpectralEmbedding",
    "LinearMap",
    "DENSE_LIMIT",
    "decompose",
    "embed",
    "fit_linear_map",
    "align_and_compare",
    "save_embedding",
    "load_embedding",
]

# Problems up to this size are solved densely.
DENSE_LIMIT = 2000
RESIDUAL_TOL = 1e-6
COMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class SpectralEmbedding:
    """Leading eigenpairs, ordered by |lambda| ascending.

    ``weights`` (when the solve went through the symmetric form) defines
    the inner product in which the eigenvectors are orthogonal.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    generator_kind: str = ""
    weights: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]


@dataclass(frozen=True)
class LinearMap:
    """H with target ~ H source, row-wise; ``relative_residual`` = |T - S H^T|_F / |T|_F."""

    matrix: np.ndarray
    relative_residual: float


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1
    return V * s


def _v0(n):
    return np.random.default_rng(12345).uniform(0.5, 1.5, n)


def _top_symmetric(T, k):
    """Largest k eigenpairs of a symmetric matrix (similar to a stochastic one)."""
    n = T.shape[0]
    if n <= DENSE_LIMIT:
        Td = T.toarray() if sp.issparse(T) else np.asarray(T)
        w, U = linalg.eigh((Td + Td.T) / 2, subset_by_index=[n - k, n - 1])
        return w, U
    T = sp.csr_matrix(T)
    # Shift just above the top of the spectrum (1 for a stochastic similarity).
    sigma = 1.0 + 1e-6
    try:
        w, U = spla.eigsh(T, k=k, sigma=sigma, which="LM", v0=_v0(n), maxiter=10000, tol=0)
    except spla.ArpackNoConvergence as exc:
        raise EigensolverError(f"ARPACK did not converge ({len(exc.eigenvalues)} of {k} pairs)") from None
    return w, U


def _general(L, k):
    n = L.shape[0]
    if n <= DENSE_LIMIT:
        Ld = L.toarray() if sp.issparse(L) else np.asarray(L)
        w, V = linalg.eig(Ld)
    else:
        try:
            w, V = spla.eigs(sp.csc_matrix(L), k=k, sigma=1e-8, which="LM", v0=_v0(n), maxiter=10000)
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError(f"ARPACK did not converge ({len(exc.eigenvalues)} of {k} pairs)") from None
    order = np.argsort(np.abs(w), kind="stable")[:k]
    return w[order], V[:, order]


def decompose(gen: GeneratorMatrix, k: int) -> SpectralEmbedding:
    """The k eigenpairs of ``gen`` with eigenvalues closest to zero.

    Generators of the form scale * (diag(l) S diag(r) - I) with S symmetric
    are conjugated by diag(sqrt(l / r)) to the symmetric matrix
    diag(sqrt(l r)) S diag(sqrt(l r)); others use a general eigensolver and
    fail on materially complex eigenvalues.
    """
    n = gen.n
    if int(k) != k or not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N={n}, got {k}")
    k = int(k)
    weights = None
    if gen.has_symmetric_form:
        l, r = gen.left, gen.right
        c = np.sqrt(l * r)
        S = gen.sym_kernel
        T = sp.diags(c) @ S @ sp.diags(c) if sp.issparse(S) else S * np.outer(c, c)
        tau, U = _top_symmetric(T, k)
        lam = gen.scale * (tau - 1.0)
        V = U * np.sqrt(l / r)[:, None]
        weights = r / l
        weights = weights / weights.mean()
    else:
        lam, V = _general(gen.operator, k)
        big = np.abs(lam.imag) > COMPLEX_TOL * np.maximum(np.abs(lam.real), 1e-300)
        if np.any(big):
            j = int(np.argmax(big))
            raise EigensolverError(f"eigenvalue {j} is complex ({lam[j]:.6g}); operator spectrum is not real")
        lam = lam.real
        V = V.real

    order = np.argsort(np.abs(lam), kind="stable")
    lam, V = lam[order], V[:, order]
    V = _fix_signs(V / np.linalg.norm(V, axis=0))
    res = np.linalg.norm(gen.operator @ V - V * lam, axis=0)
    if np.any(res > RESIDUAL_TOL):
        j = int(np.argmax(res))
        raise EigensolverError(f"eigenpair {j} residual {res[j]:.3g} exceeds {RESIDUAL_TOL:g}")
    return SpectralEmbedding(lam, V, gen.kind, weights, res)


def embed(decomp: SpectralEmbedding, indices: Sequence[int]) -> np.ndarray:
    """Selected eigenvector columns as an N x len(indices) coordinate matrix."""
    idx = [int(i) for i in indices]
    for i in idx:
        if not 0 <= i < decomp.k:
            raise IndexError(f"eigenvector index {i} outside 0..{decomp.k - 1}")
    return decomp.eigenvectors[:, idx]


def _check_rank(X, what="source"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{what} must be a 2-D coordinate matrix")
    if X.shape[1] == 0:
        return X
    if X.shape[0] < X.shape[1]:
        raise RankDeficiencyError(f"{what} has fewer rows ({X.shape[0]}) than columns ({X.shape[1]})")
    s = linalg.svdvals(X)
    rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
    if rank < X.shape[1]:
        _, _, piv = linalg.qr(X, mode="economic", pivoting=True)
        bad = sorted(int(c) for c in piv[rank:])
        raise RankDeficiencyError(f"{what} is rank deficient; dependent columns {bad}", columns=bad)
    return X


def fit_linear_map(source, target) -> LinearMap:
    """Least-squares H minimizing sum_i |target_i - H source_i|^2."""
    S = _check_rank(source)
    T = np.asarray(target, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    if T.shape[0] != S.shape[0]:
        raise ValueError(f"source has {S.shape[0]} rows, target has {T.shape[0]}")
    Ht, *_ = linalg.lstsq(S, T)
    tn = np.linalg.norm(T)
    res = np.linalg.norm(T - S @ Ht) / tn if tn > 0 else 0.0
    return LinearMap(Ht.T, float(res))


def align_and_compare(u, candidates):
    """OLS of u on the candidate columns (no intercept); returns (coefficients, R^2).

    R^2 = 1 - |residual|^2 / |u - mean(u)|^2.
    """
    u = np.asarray(u, dtype=float).ravel()
    B = _check_rank(np.asarray(candidates, dtype=float).reshape(len(u), -1), "candidates")
    coef, *_ = linalg.lstsq(B, u)
    res = u - B @ coef
    denom = np.sum((u - u.mean()) ** 2)
    if denom == 0:
        raise ValueError("u is constant; R^2 undefined")
    return coef, float(1.0 - np.sum(res**2) / denom)


# -- CSV -------------------------------------------------------------------------


def save_embedding(decomp: SpectralEmbedding, path) -> None:
    """Eigenvalue header block, then one row of eigenvector coordinates per point."""
    k = decomp.k
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"lambda_{j}" for j in range(k)])
        w.writerow([format(float(v), ".17g") for v in decomp.eigenvalues])
        w.writerow([f"phi_{j}" for j in range(k)])
        for row in decomp.eigenvectors:
            w.writerow([format(float(v), ".17g") for v in row])


def load_embedding(path) -> SpectralEmbedding:
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise DataFormatError("embedding file needs a header block and coordinates", row=len(rows) + 1)
    k = len(rows[0])
    try:
        lam = np.array([float(v) for v in rows[1]])
    except ValueError:
        raise DataFormatError("non-numeric eigenvalue", row=2) from None
    if len(lam) != k or len(rows[2]) != k:
        raise DataFormatError("header block widths differ", row=3)
    V = []
    for lineno, row in enumerate(rows[3:], start=4):
        if len(row) != k:
            raise DataFormatError(f"expected {k} fields, got {len(row)}", row=lineno)
        try:
            V.append([float(v) for v in row])
        except ValueError:
            raise DataFormatError("non-numeric coordinate", row=lineno) from None
    return SpectralEmbedding(lam, np.array(V).reshape(-1, k))
