import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from localkernels.errors import KernelError
from localkernels.kernels import (
    GAUSSIAN,
    HEAT,
    PARABOLA,
    ConformalKernel,
    ICAKernel,
    JacobianKernel,
    PrototypicalKernel,
    RadialKernel,
    eval_kernel,
    monte_carlo_moments,
    prototypical_moments,
    symmetrize,
)
from localkernels.validation import flat_torus_kernel, flat_torus_tangents

finite = st.floats(-3, 3, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def _spd(rng, n):
    B = rng.normal(size=(n, n))
    return B @ B.T + n * np.eye(n)


class TestEvalKernel:
    @pytest.mark.parametrize("eps", [1e-4, 0.1, 3.0])
    def test_prototypical_identity_at_diagonal(self, eps):
        k = PrototypicalKernel(eps, np.eye(3))
        assert eval_kernel(k, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_gaussian_at_unit_scaled_distance(self):
        eps = 0.37
        x = np.zeros(2)
        y = np.array([math.sqrt(eps), 0.0])
        assert eval_kernel(RadialKernel(eps), x, y) == pytest.approx(math.exp(-0.25), rel=1e-14)

    def test_flat_torus_kernel_matches_direct_substitution(self):
        eps = 0.01
        t1, p1, t2, p2 = 0.3, 1.1, 0.35, 1.02

        def emb(t, p):
            return np.array([np.sin(t), np.cos(t), np.sin(p), np.cos(p)])

        x, y = emb(t1, p1), emb(t2, p2)
        # Independent scalar oracle: build A, b by hand and invert explicitly.
        D = np.array([[np.cos(t1), -np.sin(t1), 0, 0], [0, 0, np.cos(p1), -np.sin(p1)]])
        C = np.array([[3 + np.sin(p1), 1.0], [1.0, 1.0]])
        A = D.T @ (2 * C) @ D + (np.eye(4) - D.T @ D)
        b = D.T @ np.array([2 + np.sin(t1), 0.0])
        r = y - x
        Ai = np.linalg.inv(A)
        oracle = math.exp(-r @ Ai @ r / (2 * eps) + r @ Ai @ b)
        assert eval_kernel(flat_torus_kernel(eps), x, y) == pytest.approx(oracle, rel=1e-12)

    def test_ica_formula(self, rng):
        C = np.stack([_spd(rng, 2), _spd(rng, 2)])
        pts = rng.normal(size=(2, 2))
        eps = 0.5
        r = pts[1] - pts[0]
        oracle = math.exp(-r @ (np.linalg.inv(C[0]) + np.linalg.inv(C[1])) @ r / (4 * eps))
        assert eval_kernel(ICAKernel(eps, C), None, None, pts, 0, 1) == pytest.approx(oracle, rel=1e-12)

    def test_per_point_kernel_needs_indices(self):
        with pytest.raises(TypeError):
            eval_kernel(JacobianKernel(1.0, np.ones((2, 1, 1))), [0.0], [1.0])

    def test_non_spd_covariance_names_point(self):
        A = np.stack([np.eye(2), np.diag([1.0, -1.0]), np.eye(2)])
        k = PrototypicalKernel(0.1, A)
        pts = np.zeros((3, 2)) + np.arange(3)[:, None]
        with pytest.raises(KernelError, match="point 1") as e:
            k.pair_values(pts, np.array([0, 1, 2]), np.array([1, 2, 0]))
        assert e.value.index == 1

    def test_non_spd_ica_rejected(self):
        with pytest.raises(KernelError):
            ICAKernel(1.0, np.stack([np.eye(2), -np.eye(2)]))

    @pytest.mark.parametrize("eps", [0.0, -1.0, np.inf, np.nan])
    def test_bad_epsilon(self, eps):
        with pytest.raises(ValueError):
            RadialKernel(eps)

    def test_conformal_uniform_density_is_gaussian(self, rng):
        pts = rng.normal(size=(30, 2))
        rows, cols = np.meshgrid(np.arange(30), np.arange(30), indexing="ij")
        a = ConformalKernel(0.2, np.ones(30), 2).pair_values(pts, rows.ravel(), cols.ravel())
        b = RadialKernel(0.2).pair_values(pts, rows.ravel(), cols.ravel())
        np.testing.assert_allclose(a, b, rtol=1e-15)

    def test_conformal_rejects_nonpositive_density(self):
        with pytest.raises(KernelError):
            ConformalKernel(1.0, np.array([1.0, 0.0]), 1)

    def test_jacobian_kernel_identity_is_gaussian(self, rng):
        pts = rng.normal(size=(10, 3))
        J = np.broadcast_to(np.eye(3), (10, 3, 3))
        rows, cols = np.arange(10), np.arange(10)[::-1]
        eps = 0.3
        r = pts[cols] - pts[rows]
        np.testing.assert_allclose(
            JacobianKernel(eps, J).pair_values(pts, rows, cols), np.exp(-np.sum(r * r, 1) / (2 * eps)), rtol=1e-14
        )


@given(vec3, vec3, st.floats(1e-3, 10.0))
@settings(max_examples=50, deadline=None)
def test_kernels_nonnegative(x, y, eps):
    for k in (RadialKernel(eps), RadialKernel(eps, PARABOLA), PrototypicalKernel(eps, np.diag([1.0, 2.0, 3.0]), np.ones(3))):
        assert k(x, y) >= 0


class TestSymmetrize:
    def test_radial_doubles(self, rng):
        k = RadialKernel(0.5)
        s = symmetrize(k)
        for _ in range(10):
            x, y = rng.normal(size=(2, 3))
            assert s(x, y) == pytest.approx(2 * k(x, y), rel=1e-15)

    def test_zero_drift_identity_diagonal(self):
        assert symmetrize(PrototypicalKernel(0.2, np.eye(2)))([1.0, 1.0], [1.0, 1.0]) == 2.0

    @given(vec3, vec3)
    @settings(max_examples=50, deadline=None)
    def test_position_dependent_exactly_symmetric(self, x, y):
        def A(p):
            return np.eye(3)[None] * (1.0 + np.sum(p**2, axis=1))[:, None, None]

        def b(p):
            return np.sin(p)

        s = symmetrize(PrototypicalKernel(0.7, A, b))
        assert s(x, y) == s(y, x)


class TestDecayBound:
    @pytest.mark.parametrize("shape", [GAUSSIAN, HEAT, PARABOLA])
    def test_radial(self, shape, rng):
        eps = 0.01
        k = RadialKernel(eps, shape)
        c, sigma = k.decay_constants
        z = rng.normal(size=(2000, 2)) * 4
        z = z[np.linalg.norm(z, axis=1) <= 10]
        vals = k.evaluate(np.zeros(2), np.sqrt(eps) * z)
        assert np.all(vals <= c * np.exp(-sigma * np.sum(z * z, 1)) * (1 + 1e-12))

    @pytest.mark.parametrize("seed", range(5))
    def test_prototypical(self, seed):
        rng = np.random.default_rng(seed)
        eps = 0.05
        A = _spd(rng, 3)
        b = rng.normal(size=3) * 3
        k = PrototypicalKernel(eps, A, b)
        x = rng.normal(size=3)
        c, sigma, bx = k.decay_bound(x)
        z = rng.normal(size=(5000, 3)) * 4
        z = z[np.linalg.norm(z, axis=1) <= 10]
        vals = k.evaluate(x, x + np.sqrt(eps) * z)
        w = z - np.sqrt(eps) * bx
        assert np.all(vals <= c * np.exp(-sigma * np.sum(w * w, 1)) * (1 + 1e-12))

    def test_conformal(self, rng):
        q = rng.uniform(0.5, 2.0, 50)
        k = ConformalKernel(0.1, q, 2)
        c, sigma = k.decay_constants
        pts = rng.normal(size=(50, 2)) * 0.3
        rows, cols = np.meshgrid(np.arange(50), np.arange(50), indexing="ij")
        rows, cols = rows.ravel(), cols.ravel()
        z = (pts[cols] - pts[rows]) / np.sqrt(0.1)
        assert np.all(k.pair_values(pts, rows, cols) <= c * np.exp(-sigma * np.sum(z * z, 1)) * (1 + 1e-12))


class TestPrototypicalMoments:
    def test_identity(self):
        mo = prototypical_moments(np.eye(2), np.zeros(2), np.eye(2))
        assert mo.m == pytest.approx(2 * np.pi)
        np.testing.assert_allclose(mo.mu, 0)
        np.testing.assert_allclose(mo.C, 2 * np.pi * np.eye(2))

    def test_diag_4_1(self):
        mo = prototypical_moments(np.diag([4.0, 1.0]), np.zeros(2), np.eye(2))
        # Oracle: sqrt(det) = 2.
        assert mo.m == pytest.approx(4 * np.pi)
        np.testing.assert_allclose(mo.C, 4 * np.pi * np.diag([4.0, 1.0]))

    def test_drift(self):
        mo = prototypical_moments(np.eye(2), np.array([1.0, 0.0]), np.eye(2))
        np.testing.assert_allclose(mo.mu, [2 * np.pi, 0.0])

    def test_rejects_non_orthonormal_basis(self):
        with pytest.raises(ValueError, match="orthonormal"):
            prototypical_moments(np.eye(2), None, np.array([[1.0, 0.0], [1.0, 1.0]]))

    def test_tangent_restriction(self):
        A = np.diag([2.0, 3.0, 5.0])
        mo = prototypical_moments(A, np.array([1.0, 2.0, 3.0]), np.eye(3)[:2])
        assert mo.m == pytest.approx(2 * np.pi * np.sqrt(6.0))
        np.testing.assert_allclose(mo.mu, mo.m * np.array([1.0, 2.0]))


class TestMonteCarloMoments:
    def test_identity_zeroth_moment(self):
        mo = monte_carlo_moments(PrototypicalKernel(1e-3, np.eye(2)), np.zeros(2), np.eye(2), 10**6)
        assert mo.m == pytest.approx(2 * np.pi, rel=0.02)

    def test_symmetric_gaussian_has_no_drift(self):
        mo = monte_carlo_moments(PrototypicalKernel(1e-3, np.eye(2)), np.zeros(2), np.eye(2), 10**5, seed=4)
        assert np.all(np.abs(mo.mu) <= 3 * mo.mu_se)

    def test_flat_torus_kernel_second_moment(self):
        x = np.array([0.0, 1.0, 0.0, 1.0])
        D = flat_torus_tangents(np.array([0.0]), np.array([0.0]))[0]
        k = flat_torus_kernel(1e-3)
        mc = monte_carlo_moments(k, x, D, 10**6)
        A = k.covariance(x[None, :])[0]
        exact = prototypical_moments(A, k.drift(x[None, :])[0], D)
        np.testing.assert_allclose(mc.C, exact.C, rtol=0, atol=0.05 * np.abs(exact.C).max())
        np.testing.assert_allclose(np.diag(mc.C), np.diag(exact.C), rtol=0.05)

    def test_rejects_small_sample(self):
        with pytest.raises(ValueError):
            monte_carlo_moments(RadialKernel(1e-3), np.zeros(2), np.eye(2), 100)

    def test_rejects_degenerate_basis(self):
        with pytest.raises(ValueError):
            monte_carlo_moments(RadialKernel(1e-3), np.zeros(2), np.array([[1.0, 0.0], [1.0, 0.0]]), 1000)

    @pytest.mark.parametrize("shape", [GAUSSIAN, HEAT])
    def test_gaussians_are_skew_free(self, shape):
        mo = monte_carlo_moments(RadialKernel(1e-3, shape), np.zeros(2), np.eye(2), 2 * 10**5, seed=1)
        assert np.all(np.abs(mo.third) <= 3 * mo.third_se)

    @pytest.mark.slow
    def test_error_shrinks_at_root_n(self):
        A = np.diag([4.0, 1.0])
        b = np.array([1.0, 0.0])
        k = PrototypicalKernel(1e-3, A, b)
        exact = prototypical_moments(A, b, np.eye(2))
        rms = []
        for n, seeds in [(10**4, 16), (10**5, 16), (10**6, 4)]:
            errs = []
            for s in range(seeds):
                mo = monte_carlo_moments(k, np.zeros(2), np.eye(2), n, seed=s)
                errs.append(np.r_[mo.m - exact.m, mo.mu - exact.mu, (mo.C - exact.C).ravel()] / exact.m)
            rms.append(np.sqrt(np.mean(np.square(errs))))
        slope = np.polyfit(np.log10([1e4, 1e5, 1e6]), np.log10(rms), 1)[0]
        assert -0.65 <= slope <= -0.35
