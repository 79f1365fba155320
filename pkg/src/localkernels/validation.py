"""Analytic oracles, error metrics and the designed kernels of the validation experiments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
import sympy
from scipy import integrate, linalg

from .kernels import PrototypicalKernel

__all__ = [
    "OperatorOracle",
    "FLAT_TORUS_ORACLE",
    "flat_torus_analytic_L",
    "flat_torus_analytic_Lstar",
    "flat_torus_tangents",
    "flat_torus_kernel",
    "torus_r3_tangents",
    "flat_metric_kernel",
    "ellipse_metric",
    "ellipse_arclength",
    "ellipse_analytic_eigenfunctions",
    "relative_l2",
    "subspace_angles",
]

# -- flat torus in R^4 --------------------------------------------------------------

_th, _ph = sympy.symbols("theta phi", real=True)
_MU = (2 + sympy.sin(_th), sympy.Integer(0))
_C = ((3 + sympy.sin(_ph), sympy.Integer(1)), (sympy.Integer(1), sympy.Integer(1)))
_X = (_th, _ph)


@dataclass(frozen=True)
class OperatorOracle:
    """Drift mu(theta, phi) and diffusion C(theta, phi) of the test generator.

    The generator is Lf = mu . grad f + C : Hess f and its adjoint
    L*f = -div(mu f) + sum_lr d_l d_r (C_lr f), in the flat coordinates.
    """

    mu: tuple = _MU
    C: tuple = _C

    def mu_field(self, theta, phi):
        return _eval_vec(self.mu, theta, phi)

    def C_field(self, theta, phi):
        return _eval_mat(self.C, theta, phi)

    def L(self, f):
        return sum(self.mu[a] * sympy.diff(f, _X[a]) for a in range(2)) + sum(
            self.C[a][b] * sympy.diff(f, _X[a], _X[b]) for a in range(2) for b in range(2)
        )

    def Lstar(self, f):
        return -sum(sympy.diff(self.mu[a] * f, _X[a]) for a in range(2)) + sum(
            sympy.diff(self.C[a][b] * f, _X[a], _X[b]) for a in range(2) for b in range(2)
        )


@lru_cache(maxsize=64)
def _lambdified(expr):
    return sympy.lambdify(_X, expr, "numpy")


def _eval_vec(vec, theta, phi):
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    return np.stack([np.broadcast_to(_lambdified(e)(theta, phi), theta.shape) for e in vec], -1)


def _eval_mat(mat, theta, phi):
    return np.stack([_eval_vec(row, theta, phi) for row in mat], -2)


FLAT_TORUS_ORACLE = OperatorOracle()

TEST_FUNCTION = "sin(theta)*sin(2*phi)"


def _L_closed_form(theta, phi):
    s, c = np.sin, np.cos
    return (
        (2 + s(theta)) * c(theta) * s(2 * phi)
        - (3 + s(phi)) * s(theta) * s(2 * phi)
        + 4 * c(theta) * c(2 * phi)
        - 4 * s(theta) * s(2 * phi)
    )


def _Lstar_closed_form(theta, phi):
    s, c = np.sin, np.cos
    return (
        -(2 + s(theta)) * c(theta) * s(2 * phi)
        - c(theta) * s(theta) * s(2 * phi)
        - (3 + s(phi)) * s(theta) * s(2 * phi)
        + 4 * c(theta) * c(2 * phi)
        - 4 * s(theta) * s(2 * phi)
    )


@lru_cache(maxsize=32)
def _symbolic(expr: str, which: str) -> Callable:
    f = sympy.sympify(expr, locals={"theta": _th, "phi": _ph})
    out = FLAT_TORUS_ORACLE.L(f) if which == "L" else FLAT_TORUS_ORACLE.Lstar(f)
    return sympy.lambdify(_X, sympy.simplify(out), "numpy")


def _apply(expr, which, theta, phi, closed_form):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if isinstance(expr, str) and sympy.sympify(expr, locals={"theta": _th, "phi": _ph}) == sympy.sympify(
        TEST_FUNCTION, locals={"theta": _th, "phi": _ph}
    ):
        return closed_form(theta, phi)
    if not isinstance(expr, str):
        expr = str(expr)
    return np.broadcast_to(np.asarray(_symbolic(expr, which)(theta, phi), dtype=float), np.broadcast(theta, phi).shape).copy()


def flat_torus_analytic_L(theta, phi, f: Union[str, sympy.Expr] = TEST_FUNCTION) -> np.ndarray:
    """Exact Lf at (theta, phi). The default test function uses the transcribed closed form."""
    return _apply(f, "L", theta, phi, _L_closed_form)


def flat_torus_analytic_Lstar(theta, phi, f: Union[str, sympy.Expr] = TEST_FUNCTION) -> np.ndarray:
    """Exact L*f at (theta, phi)."""
    return _apply(f, "Lstar", theta, phi, _Lstar_closed_form)


def flat_torus_tangents(theta, phi) -> np.ndarray:
    """(M, 2, 4) rows d/dtheta, d/dphi of (sin t, cos t, sin p, cos p); orthonormal."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    z = np.zeros_like(theta)
    r1 = np.stack([np.cos(theta), -np.sin(theta), z, z], -1)
    r2 = np.stack([z, z, np.cos(phi), -np.sin(phi)], -1)
    return np.stack([r1, r2], -2)


def _flat_torus_angles(points):
    P = np.asarray(points, dtype=float)
    return np.arctan2(P[:, 0], P[:, 1]), np.arctan2(P[:, 2], P[:, 3])


def flat_torus_kernel(epsilon: float, oracle: OperatorOracle = FLAT_TORUS_ORACLE, normal_variance: float = 1.0):
    """Prototypical kernel on the R^4 flat torus whose L_eps converges to the oracle's L.

    The tangent covariance is the lift of 2 C (the Gaussian contributes a
    factor 1/2 to the second-order term) and the drift is the lift of mu.
    The normal block keeps A positive definite and does not enter the limit.
    """

    def A(points):
        t, p = _flat_torus_angles(points)
        D = flat_torus_tangents(t, p)
        C = oracle.C_field(t, p)
        N = np.eye(4) - np.einsum("kai,kaj->kij", D, D)
        return np.einsum("kai,kab,kbj->kij", D, 2 * C, D) + normal_variance * N

    def b(points):
        t, p = _flat_torus_angles(points)
        return np.einsum("kai,ka->ki", flat_torus_tangents(t, p), oracle.mu_field(t, p))

    return PrototypicalKernel(epsilon, A, b)


# -- torus of revolution in R^3 ----------------------------------------------------------


def torus_r3_tangents(theta, phi, major_radius=2.0):
    """Columns d iota/d theta, d iota/d phi (M, 3, 2) and the unit normal (M, 3)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct, sp_, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    d_theta = np.stack([ct * cp, ct * sp_, -st], -1)
    d_phi = np.stack([-(major_radius + st) * sp_, (major_radius + st) * cp, np.zeros_like(theta)], -1)
    normal = np.stack([st * cp, st * sp_, ct], -1)
    return np.stack([d_theta, d_phi], -1), normal


def torus_r3_angles(points, major_radius=2.0):
    P = np.asarray(points, dtype=float)
    rho = np.hypot(P[:, 0], P[:, 1])
    return np.arctan2(rho - major_radius, P[:, 2]), np.arctan2(P[:, 1], P[:, 0])


def flat_metric_kernel(epsilon: float, major_radius: float = 2.0):
    """Prototypical kernel whose intrinsic Laplacian is the flat-torus Laplacian.

    Tangent covariance D iota D iota^T makes |y - x|_{A^{-1}} the flat
    (theta, phi) distance; the unit normal direction gets variance 1.
    """

    def A(points):
        t, p = torus_r3_angles(points, major_radius)
        D, n = torus_r3_tangents(t, p, major_radius)
        return np.einsum("kia,kja->kij", D, D) + np.einsum("ki,kj->kij", n, n)

    return PrototypicalKernel(epsilon, A)


# -- ellipse ------------------------------------------------------------------------------


def ellipse_metric(a: float, theta) -> np.ndarray:
    """g(theta) = sin^2 + a^2 cos^2 = 1 + (a^2 - 1) cos^2 for (cos t, a sin t)."""
    return 1.0 + (a * a - 1.0) * np.cos(np.asarray(theta, dtype=float)) ** 2


def ellipse_arclength(a: float, theta, tol: float = 1e-10) -> np.ndarray:
    """z(theta) = int_0^theta sqrt(g), rescaled so that z(2 pi) = 2 pi."""
    if not a > 0:
        raise ValueError(f"minor axis must be positive, got {a}")
    theta = np.asarray(theta, dtype=float).ravel()

    def speed(t):
        return np.sqrt(ellipse_metric(a, t))

    total, _ = integrate.quad(speed, 0.0, 2 * np.pi, epsabs=tol, epsrel=tol, limit=500)
    # Integrate piecewise between sorted nodes so each call is short.
    order = np.argsort(theta, kind="stable")
    ts = theta[order]
    z = np.empty_like(ts)
    acc, prev = 0.0, 0.0
    for k, t in enumerate(ts):
        if t != prev:
            piece, _ = integrate.quad(speed, prev, t, epsabs=tol, epsrel=tol, limit=200)
            acc += piece
            prev = t
        z[k] = acc
    out = np.empty_like(z)
    out[order] = z * (2 * np.pi / total)
    return out


def ellipse_analytic_eigenfunctions(a: float, theta):
    """(sin z(theta), cos z(theta)): the first Laplacian eigenfunctions of the ellipse."""
    z = ellipse_arclength(a, theta)
    return np.sin(z), np.cos(z)


# -- metrics -----------------------------------------------------------------------------


def relative_l2(u, v) -> float:
    """|u - v| / |v|."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("reference vector has zero norm")
    return float(np.linalg.norm(u - v) / nv)


def subspace_angles(U, V) -> np.ndarray:
    """Principal angles (radians, descending) between the column spans of U and V."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    U = U.reshape(len(U), -1)
    V = V.reshape(len(V), -1)
    for name, X in (("U", U), ("V", V)):
        s = linalg.svdvals(X)
        if s.size == 0 or s[-1] <= 1e-12 * s[0]:
            raise ValueError(f"{name} does not have full column rank")
    return linalg.subspace_angles(U, V)
