import numpy as np

from nodulekit import filters
from nodulekit.volume import Volume
from oracles import charpoly_eigenvalues


def gaussian_blob(n=41, sigma_blob=3.0, amplitude=1000.0, sign=1.0):
    c = (n - 1) / 2.0
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
    r2 = (xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2
    return sign * amplitude * np.exp(-r2 / (2.0 * sigma_blob**2))


class TestGaussianDerivatives:
    def test_polynomial_derivatives_exact_in_interior(self):
        n = 33
        zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
        f = 2.0 + 0.5 * xx - 1.5 * yy + 0.25 * zz + 0.1 * xx**2 + 0.05 * xx * yy
        sigma = 1.5
        inner = (slice(8, -8),) * 3
        dx = filters.gaussian_derivative(f, sigma, (1, 0, 0))
        expected_dx = 0.5 + 0.2 * xx + 0.05 * yy
        assert np.abs(dx[inner] - expected_dx[inner]).max() < 1e-4
        dxx = filters.gaussian_derivative(f, sigma, (2, 0, 0))
        assert np.abs(dxx[inner] - 0.2).max() < 1e-4
        dxy = filters.gaussian_derivative(f, sigma, (1, 1, 0))
        assert np.abs(dxy[inner] - 0.05).max() < 1e-4

    def test_finite_difference_cross_check(self):
        # central differences are exact on quadratics, so the smoothed
        # polynomial's gradient must agree with the derivative kernel
        n = 33
        zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
        f = 1.0 + 0.3 * xx + 0.1 * xx**2 - 0.2 * xx * yy
        sigma = 1.5
        smoothed = filters.gaussian_smooth(f, sigma)
        dx = filters.gaussian_derivative(f, sigma, (1, 0, 0))
        fd = np.gradient(smoothed, axis=2)
        inner = (slice(10, -10),) * 3
        assert np.abs(dx[inner] - fd[inner]).max() < 1e-4


class TestSymmetricEigenvalues:
    def test_matches_characteristic_polynomial_oracle(self):
        rng = np.random.default_rng(3)
        mats = rng.normal(size=(500, 3, 3))
        mats = (mats + mats.transpose(0, 2, 1)) / 2
        ours = filters.symmetric_eigenvalues(mats)
        for m, eig in zip(mats, ours):
            assert np.abs(eig - charpoly_eigenvalues(m)).max() < 1e-8

    def test_sorted_ascending(self):
        rng = np.random.default_rng(4)
        mats = rng.normal(size=(100, 3, 3))
        mats = (mats + mats.transpose(0, 2, 1)) / 2
        eig = filters.symmetric_eigenvalues(mats)
        assert (np.diff(eig, axis=-1) >= 0).all()


class TestShapeIndex:
    def test_isotropic_curvature_gives_cap_limit(self):
        # -0.1 r^2 has Hessian -0.2 I everywhere: k1 = k2 = 0.2, so the
        # arctan limit applies and CV = 0.2 * sqrt(2)
        n = 25
        zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
        c = (n - 1) / 2
        bowl = -0.1 * ((xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2)
        field = filters.shape_index(bowl, sigma=1.0)
        inner = (slice(10, -10),) * 3
        assert np.allclose(field.si[inner], 1.0, atol=1e-6)
        assert np.allclose(field.cv[inner], 0.2 * np.sqrt(2), atol=1e-4)

    def test_antisymmetric_curvature_gives_saddle_zero(self):
        # 0.15 x^2 - 0.15 y^2 has extreme Hessian eigenvalues +/- 0.3:
        # k1 = 0.3, k2 = -0.3, SI = 0, CV = 0.3 * sqrt(2)
        n = 25
        zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
        c = (n - 1) / 2
        saddle = 0.15 * (xx - c) ** 2 - 0.15 * (yy - c) ** 2
        field = filters.shape_index(saddle, sigma=1.0)
        inner = (slice(10, -10),) * 3
        assert np.allclose(field.si[inner], 0.0, atol=1e-6)
        assert np.allclose(field.cv[inner], 0.3 * np.sqrt(2), atol=1e-4)

    def test_bright_blob_center_is_cap(self):
        field = filters.shape_index(gaussian_blob(sigma_blob=3.0), sigma=1.0)
        assert abs(field.si[20, 20, 20] - 1.0) < 0.05

    def test_dark_blob_center_is_cup(self):
        field = filters.shape_index(gaussian_blob(sigma_blob=3.0, sign=-1.0), sigma=1.0)
        assert abs(field.si[20, 20, 20] + 1.0) < 0.05

    def test_bright_tube_is_ridge(self):
        n = 33
        zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float64)
        c = (n - 1) / 2
        tube = 1000.0 * np.exp(-((xx - c) ** 2 + (yy - c) ** 2) / (2 * 3.0**2))
        field = filters.shape_index(tube, sigma=1.0)
        assert abs(field.si[16, 16, 16] - 0.5) < 0.05

    def test_ranges_on_random_volumes(self, rng):
        for _ in range(5):
            data = rng.normal(size=(12, 12, 12))
            field = filters.shape_index(data, sigma=1.0)
            assert (field.si >= -1.0).all() and (field.si <= 1.0).all()
            assert (field.cv >= 0.0).all()

    def test_k1_geq_k2_everywhere(self, rng):
        field = filters.principal_curvatures(rng.normal(size=(10, 10, 10)), sigma=1.0)
        assert (field.k1 >= field.k2).all()

    def test_flat_volume_flagged_undefined(self):
        field = filters.shape_index(np.zeros((8, 8, 8)), sigma=1.0)
        assert field.undefined.all()
        assert (field.si == 0.0).all()

    def test_accepts_volume_objects(self):
        v = Volume(gaussian_blob(n=21).astype(np.float32), spacing=(1, 1, 1))
        field = filters.shape_index(v, sigma=1.0)
        assert field.si.shape == v.data.shape


class TestDivergenceOfNormalizedGradient:
    def test_constant_volume_is_zero(self):
        field = filters.divergence_of_normalized_gradient(np.full((10, 10, 10), 5.0), 1.0)
        assert (field.values == 0.0).all()

    def test_linear_ramp_interior_is_zero(self):
        n = 16
        ramp = np.broadcast_to(np.arange(n, dtype=np.float64), (n, n, n)).copy()
        field = filters.divergence_of_normalized_gradient(ramp, 1.0)
        inner = (slice(5, -5),) * 3
        assert np.abs(field.values[inner]).max() < 1e-10

    def test_bright_blob_matches_radial_law(self):
        # unit inward gradients around a bright center: div = -2/r off-center
        field = filters.divergence_of_normalized_gradient(gaussian_blob(sigma_blob=4.0), 1.0)
        center = 20
        for r in (3, 5, 8):
            value = field.values[center, center, center + r]
            assert value < 0
            assert abs(value - (-2.0 / r)) < 0.08 / r + 0.02

    def test_values_finite_everywhere(self, rng):
        field = filters.divergence_of_normalized_gradient(rng.normal(size=(14, 14, 14)), 1.0)
        assert np.isfinite(field.values).all()

    def test_blob_center_is_local_minimum_region(self):
        field = filters.divergence_of_normalized_gradient(gaussian_blob(sigma_blob=4.0), 1.0)
        near = field.values[18:23, 18:23, 18:23]
        far = field.values[2:6, 2:6, 2:6]
        assert near.min() < far.min()
