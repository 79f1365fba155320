"""Local kernel families, their moments, and symmetrization.

Every kernel carries its bandwidth ``epsilon`` and exposes
``pair_values(points, rows, cols)``, which evaluates K(eps, x_rows, x_cols)
elementwise for index arrays. Kernels whose fields are defined pointwise
(radial and prototypical with callable or constant fields) are also
callable on raw coordinates, ``kernel(x, y)``, which is what the Monte
Carlo moment estimator needs.

Fields of a prototypical kernel may be given as

* a constant array (``(n, n)`` for A, ``(n,)`` for b),
* a per-point array aligned with the cloud (``(N, n, n)`` / ``(N, n)``),
* a callable mapping an ``(M, n)`` array of points to ``(M, n, n)`` / ``(M, n)``.

Per-point arrays can only be evaluated through ``pair_values``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .errors import KernelError

__all__ = [
    "RadialShape",
    "GAUSSIAN",
    "HEAT",
    "PARABOLA",
    "LocalKernel",
    "RadialKernel",
    "PrototypicalKernel",
    "ICAKernel",
    "JacobianKernel",
    "ConformalKernel",
    "SymmetrizedKernel",
    "KernelMoments",
    "eval_kernel",
    "symmetrize",
    "prototypical_moments",
    "monte_carlo_moments",
]

Field = Union[np.ndarray, Callable[[np.ndarray], np.ndarray], None]

# Pairs evaluated per vectorized block; bounds temporary memory.
_CHUNK = 1 << 16


def _check_epsilon(eps):
    if not (np.isfinite(eps) and eps > 0):
        raise ValueError(f"epsilon must be a positive finite number, got {eps}")


def _chunks(n):
    for start in range(0, n, _CHUNK):
        yield slice(start, min(start + _CHUNK, n))


def _as_2d(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


# -- radial ------------------------------------------------------------------


@dataclass(frozen=True)
class RadialShape:
    """Shape function h(u) with the decay bound h(u) <= c exp(-sigma u)."""

    name: str
    h: Callable[[np.ndarray], np.ndarray]
    c: float
    sigma: float


GAUSSIAN = RadialShape("gaussian", lambda u: np.exp(-u / 4.0), 1.0, 0.25)
# Unit-covariance Gaussian; matches the 2/eps scaling of the intrinsic Laplacian.
HEAT = RadialShape("heat", lambda u: np.exp(-u / 2.0), 1.0, 0.5)
# Compactly supported; 1 - u <= exp(-u) <= e * exp(-u) on [0, 1].
PARABOLA = RadialShape("parabola", lambda u: np.maximum(1.0 - u, 0.0), math.e, 1.0)


class LocalKernel:
    """Common interface. Subclasses set ``epsilon`` and ``symmetric``."""

    epsilon: float
    symmetric: bool = False
    pointwise: bool = False

    def pair_values(self, points: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """K(eps, x, y_k) for one base point x and a stack of points y."""
        raise TypeError(f"{type(self).__name__} has per-point fields; use pair_values")

    def __call__(self, x, y) -> float:
        return float(self.evaluate(np.asarray(x, dtype=float), _as_2d(y))[0])

    @property
    def decay_constants(self):
        """(c, sigma) in K(eps, x, x + sqrt(eps) z) <= c exp(-sigma |z - sqrt(eps) b|^2)."""
        raise NotImplementedError

    def with_epsilon(self, epsilon: float) -> "LocalKernel":
        from dataclasses import replace

        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class RadialKernel(LocalKernel):
    """J(eps, x, y) = h(|x - y|^2 / eps)."""

    epsilon: float
    shape: RadialShape = GAUSSIAN
    symmetric = True
    pointwise = True

    def __post_init__(self):
        _check_epsilon(self.epsilon)

    def pair_values(self, points, rows, cols):
        points = np.asarray(points, dtype=float)
        out = np.empty(len(rows))
        for s in _chunks(len(rows)):
            r = points[cols[s]] - points[rows[s]]
            out[s] = self.shape.h(np.einsum("ij,ij->i", r, r) / self.epsilon)
        return out

    def evaluate(self, x, y):
        r = _as_2d(y) - np.asarray(x, dtype=float)
        return self.shape.h(np.einsum("ij,ij->i", r, r) / self.epsilon)

    @property
    def decay_constants(self):
        return self.shape.c, self.shape.sigma


# -- prototypical --------------------------------------------------------------


def _field_values(fld, points, idx, shape_tail, name):
    """Evaluate a field at points[idx] (constant, per-point array, or callable)."""
    if callable(fld):
        vals = np.asarray(fld(np.asarray(points, dtype=float)[idx]), dtype=float)
        return vals.reshape((len(idx),) + shape_tail)
    arr = np.asarray(fld, dtype=float)
    if arr.shape == shape_tail:
        return np.broadcast_to(arr, (len(idx),) + shape_tail)
    if arr.shape[1:] == shape_tail and arr.shape[0] == len(points):
        return arr[idx]
    raise ValueError(f"field {name} has shape {arr.shape}; expected {shape_tail} or (N,) + {shape_tail}")


def _whiteners(mats, idx, name="A"):
    """L^{-1} for the Cholesky factor L of each SPD matrix (via triangular solve)."""
    mats = np.asarray(mats, dtype=float)
    sym_err = np.abs(mats - np.swapaxes(mats, 1, 2)).max(axis=(1, 2))
    scale = np.abs(mats).max(axis=(1, 2))
    bad = np.nonzero(~(sym_err <= 1e-10 * np.maximum(scale, 1.0)))[0]
    if bad.size:
        i = int(idx[bad[0]])
        raise KernelError(f"{name} is not symmetric at point {i}", index=i)
    n = mats.shape[-1]
    eye = np.eye(n)
    out = np.empty_like(mats)
    for k, m in enumerate(mats):
        try:
            c = linalg.cholesky(m, lower=True)
        except linalg.LinAlgError:
            i = int(idx[k])
            raise KernelError(f"{name} is not positive definite at point {i}", index=i) from None
        out[k] = linalg.solve_triangular(c, eye, lower=True)
    return out


@dataclass(frozen=True)
class PrototypicalKernel(LocalKernel):
    """Anisotropic Gaussian with covariance field A and drift field b.

    K(eps, x, y) = exp(-(r - eps b)^T A^{-1} (r - eps b) / (2 eps)), r = y - x,
    with the O(eps) constant b^T A^{-1} b / 2 dropped from the exponent.
    The drift sign makes the first moment equal to m * b.
    """

    epsilon: float
    covariance: Field
    drift: Field = None
    symmetric = False

    def __post_init__(self):
        _check_epsilon(self.epsilon)

    @property
    def pointwise(self):
        def ok(f):
            return f is None or callable(f) or np.ndim(f) <= 2

        return ok(self.covariance) and ok(self.drift) and (
            callable(self.covariance) or np.ndim(self.covariance) == 2
        )

    def _terms(self, points, idx, n):
        """Whitening matrices W = L^{-1} and whitened drifts W b at points[idx]."""
        A = _field_values(self.covariance, points, idx, (n, n), "A")
        W = _whiteners(A, idx, "A")
        if self.drift is None:
            wb = np.zeros((len(idx), n))
        else:
            b = _field_values(self.drift, points, idx, (n,), "b")
            wb = np.einsum("kab,kb->ka", W, b)
        return W, wb

    def _exponent(self, W, wb, r):
        w = np.einsum("kab,kb->ka", W, r)
        return -np.einsum("ka,ka->k", w, w) / (2 * self.epsilon) + np.einsum("ka,ka->k", w, wb)

    def pair_values(self, points, rows, cols):
        points = np.asarray(points, dtype=float)
        n = points.shape[1]
        urows, inv = np.unique(rows, return_inverse=True)
        W, wb = self._terms(points, urows, n)
        out = np.empty(len(rows))
        for s in _chunks(len(rows)):
            k = inv[s]
            out[s] = np.exp(self._exponent(W[k], wb[k], points[cols[s]] - points[rows[s]]))
        return out

    def evaluate(self, x, y):
        if not self.pointwise:
            return super().evaluate(x, y)
        x = np.asarray(x, dtype=float)
        y = _as_2d(y)
        W, wb = self._terms(x[None, :], np.array([0]), x.shape[0])
        out = np.empty(len(y))
        for s in _chunks(len(y)):
            m = s.stop - s.start
            out[s] = np.exp(
                self._exponent(np.broadcast_to(W, (m,) + W.shape[1:]), np.broadcast_to(wb, (m, wb.shape[1])), y[s] - x)
            )
        return out

    @property
    def decay_constants(self):
        raise TypeError("prototypical bounds depend on the base point; use decay_bound(x)")

    def decay_bound(self, x):
        """(c, sigma, b) with K(eps, x, x + sqrt(eps) z) <= c exp(-sigma |z - sqrt(eps) b|^2)."""
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        A = _field_values(self.covariance, x[None, :], np.array([0]), (n, n), "A")[0]
        b = np.zeros(n) if self.drift is None else _field_values(self.drift, x[None, :], np.array([0]), (n,), "b")[0]
        c = math.exp(self.epsilon * float(b @ np.linalg.solve(A, b)) / 2)
        return c, 1.0 / (2 * float(np.linalg.eigvalsh(A).max())), b


# -- per-point families ----------------------------------------------------------


@dataclass(frozen=True)
class ICAKernel(LocalKernel):
    """K = exp(-r^T (C_i^{-1} + C_j^{-1}) r / (4 eps)) with per-point covariances C."""

    epsilon: float
    covariances: np.ndarray
    symmetric = True

    def __post_init__(self):
        _check_epsilon(self.epsilon)
        C = np.asarray(self.covariances, dtype=float)
        if C.ndim != 3 or C.shape[1] != C.shape[2]:
            raise ValueError(f"covariances must have shape (N, n, n), got {C.shape}")
        W = _whiteners(C, np.arange(len(C)), "C")
        object.__setattr__(self, "_precision", np.einsum("kba,kbc->kac", W, W))

    def pair_values(self, points, rows, cols):
        points = np.asarray(points, dtype=float)
        P = self._precision
        out = np.empty(len(rows))
        for s in _chunks(len(rows)):
            r = points[cols[s]] - points[rows[s]]
            q = np.einsum("ka,kab,kb->k", r, P[rows[s]] + P[cols[s]], r)
            out[s] = np.exp(-q / (4 * self.epsilon))
        return out

    @property
    def decay_constants(self):
        return 1.0, None


@dataclass(frozen=True)
class JacobianKernel(LocalKernel):
    """K(eps, x_i, x_j) = exp(-|DH_i (x_j - x_i)|^2 / (2 eps))."""

    epsilon: float
    jacobians: np.ndarray
    symmetric = False

    def __post_init__(self):
        _check_epsilon(self.epsilon)
        J = np.asarray(self.jacobians, dtype=float)
        if J.ndim != 3:
            raise ValueError(f"jacobians must have shape (N, m, n), got {J.shape}")
        if not np.all(np.isfinite(J)):
            raise KernelError("non-finite Jacobian entry")

    def pair_values(self, points, rows, cols):
        points = np.asarray(points, dtype=float)
        J = np.asarray(self.jacobians, dtype=float)
        out = np.empty(len(rows))
        for s in _chunks(len(rows)):
            v = np.einsum("kab,kb->ka", J[rows[s]], points[cols[s]] - points[rows[s]])
            out[s] = np.exp(-np.einsum("ka,ka->k", v, v) / (2 * self.epsilon))
        return out

    @property
    def decay_constants(self):
        return 1.0, None


@dataclass(frozen=True)
class ConformalKernel(LocalKernel):
    """Variable-bandwidth Gaussian exp(-|x - y|^2 q(x)^{2/d} / (4 eps))."""

    epsilon: float
    density: np.ndarray
    dim: int
    symmetric = False

    def __post_init__(self):
        _check_epsilon(self.epsilon)
        q = np.asarray(self.density, dtype=float)
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"intrinsic dimension must be a positive integer, got {self.dim}")
        bad = np.nonzero(~(q > 0) | ~np.isfinite(q))[0]
        if bad.size:
            raise KernelError(f"density must be positive and finite; point {int(bad[0])} has {q[bad[0]]}", index=int(bad[0]))

    def pair_values(self, points, rows, cols):
        points = np.asarray(points, dtype=float)
        scale = np.asarray(self.density, dtype=float) ** (2.0 / self.dim)
        out = np.empty(len(rows))
        for s in _chunks(len(rows)):
            r = points[cols[s]] - points[rows[s]]
            out[s] = np.exp(-np.einsum("ij,ij->i", r, r) * scale[rows[s]] / (4 * self.epsilon))
        return out

    @property
    def decay_constants(self):
        return 1.0, 0.25 * float(np.min(self.density)) ** (2.0 / self.dim)


@dataclass(frozen=True)
class SymmetrizedKernel(LocalKernel):
    """K_bar(eps, x, y) = K(eps, x, y) + K(eps, y, x)."""

    base: LocalKernel
    symmetric = True

    @property
    def epsilon(self):
        return self.base.epsilon

    @property
    def pointwise(self):
        return self.base.pointwise

    def with_epsilon(self, epsilon):
        return SymmetrizedKernel(self.base.with_epsilon(epsilon))

    def pair_values(self, points, rows, cols):
        # IEEE addition is commutative, so K_bar(i, j) == K_bar(j, i) bitwise.
        return self.base.pair_values(points, rows, cols) + self.base.pair_values(points, cols, rows)

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = _as_2d(y)
        back = np.array([self.base.evaluate(yk, x[None, :])[0] for yk in y])
        return self.base.evaluate(x, y) + back

    @property
    def decay_constants(self):
        c = self.base.decay_constants
        return None if c is None else (2 * c[0], c[1])


def symmetrize(kernel: LocalKernel) -> LocalKernel:
    """Return K + K^*. For kernels already flagged symmetric this is 2K."""
    return SymmetrizedKernel(kernel)


def eval_kernel(kernel: LocalKernel, x, y, points=None, i=None, j=None) -> float:
    """Scalar K(eps, x, y).

    Kernels with per-point fields need the cloud and the indices ``i, j``
    of x and y in it.
    """
    if kernel.pointwise:
        return kernel(x, y)
    if points is None or i is None or j is None:
        raise TypeError(f"{type(kernel).__name__} needs points and indices i, j")
    return float(kernel.pair_values(points, np.array([i]), np.array([j]))[0])


# -- moments -------------------------------------------------------------------


@dataclass(frozen=True)
class KernelMoments:
    """Zeroth, first and second moments in a tangent basis.

    Monte Carlo estimates also carry standard errors, the finite bandwidth
    they were computed at, and third moments about the kernel mean.
    """

    m: float
    mu: np.ndarray
    C: np.ndarray
    m_se: Optional[float] = None
    mu_se: Optional[np.ndarray] = None
    C_se: Optional[np.ndarray] = None
    third: Optional[np.ndarray] = field(default=None, repr=False)
    third_se: Optional[np.ndarray] = field(default=None, repr=False)
    epsilon: Optional[float] = None
    sample_count: Optional[int] = None

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"zeroth moment must be positive, got {self.m}")
        C = np.asarray(self.C, dtype=float)
        if C.shape[0] != C.shape[1] or not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
            raise ValueError("second moment must be a symmetric square matrix")


def _orthonormal_basis(basis, n=None):
    I = np.atleast_2d(np.asarray(basis, dtype=float))
    if n is not None and I.shape[1] != n:
        raise ValueError(f"tangent basis has {I.shape[1]} columns, ambient dimension is {n}")
    if I.shape[0] > I.shape[1]:
        raise ValueError(f"tangent basis has more rows ({I.shape[0]}) than columns ({I.shape[1]})")
    err = np.abs(I @ I.T - np.eye(I.shape[0])).max()
    if err > 1e-10:
        raise ValueError(f"tangent basis rows are not orthonormal (Gram error {err:.3g})")
    return I


def prototypical_moments(A, b, tangent_basis) -> KernelMoments:
    """Closed-form moments m = (2 pi)^{d/2} det(I A I^T)^{1/2}, mu = m I b, C = m I A I^T."""
    A = np.asarray(A, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    I = _orthonormal_basis(tangent_basis, A.shape[0])
    d = I.shape[0]
    S = I @ A @ I.T
    S = (S + S.T) / 2
    m = (2 * np.pi) ** (d / 2) * math.sqrt(np.linalg.det(S))
    return KernelMoments(m=m, mu=m * (I @ b), C=m * S)


def _batch_se(values, batches):
    """Standard error of the mean from batch means (columns are estimands)."""
    n = values.shape[0] - values.shape[0] % batches
    means = values[:n].reshape(batches, -1, *values.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


def monte_carlo_moments(
    kernel: LocalKernel,
    x,
    tangent_basis,
    sample_count: int = 10**6,
    seed: Optional[int] = 0,
    pilot_count: int = 4000,
    batches: int = 50,
) -> KernelMoments:
    """Importance-sampled tangent-space moments at the kernel's bandwidth.

    The proposal is a Gaussian fitted to the kernel by a pilot run and
    widened by 20%; samples come in antithetic pairs z, 2 nu - z about the
    proposal mean nu. Standard errors are batch means over pairs.

    Third moments are reported about the kernel's own mean: at finite
    bandwidth the raw third moments of a drifting kernel are O(sqrt(eps)).
    """
    if sample_count < 1000:
        raise ValueError(f"sample_count must be at least 1000, got {sample_count}")
    if not kernel.pointwise:
        raise TypeError(f"{type(kernel).__name__} is not pointwise; Monte Carlo moments need K(x, y) on raw points")
    x = np.asarray(x, dtype=float)
    I = _orthonormal_basis(tangent_basis, x.shape[0])
    d = I.shape[0]
    eps = kernel.epsilon
    se = math.sqrt(eps)
    rng = np.random.default_rng(seed)

    def k_of(z):
        out = np.empty(len(z))
        for s in _chunks(len(z)):
            out[s] = kernel.evaluate(x, x + se * (z[s] @ I))
        return out

    # Pilot: wide Gaussian, then moment-matched proposal.
    width = 4.0
    zp = rng.standard_normal((pilot_count, d)) * width
    logq = -0.5 * np.sum((zp / width) ** 2, axis=1)
    w = k_of(zp) * np.exp(-logq)
    if not np.any(w > 0):
        raise ValueError("kernel vanishes on the pilot sample; check the tangent basis and bandwidth")
    w = w / w.sum()
    nu = w @ zp
    dz = zp - nu
    cov = (dz * w[:, None]).T @ dz
    cov = (cov + cov.T) / 2 + 1e-12 * np.eye(d)
    L = np.linalg.cholesky(cov) * 1.2
    logdet = float(np.sum(np.log(np.diag(L))))

    half = (sample_count + 1) // 2
    xi = rng.standard_normal((half, d))
    z = np.empty((2 * half, d))
    z[0::2] = nu + xi @ L.T
    z[1::2] = nu - xi @ L.T
    logp = np.repeat(-0.5 * np.sum(xi**2, axis=1), 2) - logdet - 0.5 * d * math.log(2 * np.pi)
    wt = k_of(z) * np.exp(-logp)

    # Per-pair contributions: averaging within antithetic pairs first.
    f0 = wt
    f1 = z * wt[:, None]
    f2 = np.einsum("ka,kb,k->kab", z, z, wt)

    def pair(v):
        return v.reshape(half, 2, *v.shape[1:]).mean(axis=1)

    p0, p1, p2 = pair(f0), pair(f1), pair(f2)
    m = float(p0.mean())
    mu = p1.mean(axis=0) / se
    C = p2.mean(axis=0)
    C = (C + C.T) / 2

    center = p1.mean(axis=0) / m
    zc = z - center
    f3 = np.einsum("ka,kb,kc,k->kabc", zc, zc, zc, wt)
    p3 = pair(f3)
    third = p3.mean(axis=0)

    return KernelMoments(
        m=m,
        mu=mu,
        C=C,
        m_se=float(_batch_se(p0, batches)),
        mu_se=_batch_se(p1, batches) / se,
        C_se=_batch_se(p2, batches),
        third=third,
        third_se=_batch_se(p3, batches),
        epsilon=eps,
        sample_count=2 * half,
    )
