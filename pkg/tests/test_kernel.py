import math

import numpy as np
import pytest

from lvgpbo.kernel import (
    FactorizationError,
    KernelParams,
    build_corr_matrix,
    corr_matrix_from_arrays,
    correlation,
    cross_corr_vector,
    factorize,
)
from lvgpbo.space import Dataset, MixedPoint


def rotation(angle, reflect=False):
    c, s = math.cos(angle), math.sin(angle)
    q = np.array([[c, -s], [s, c]])
    if reflect:
        q = q @ np.diag([1.0, -1.0])
    return q


class TestCorrelation:
    def test_identical_points(self):
        params = KernelParams(roughness=[2.0, 0.5])
        pt = MixedPoint(x=(0.3, 0.7))
        assert correlation(pt, pt, params) == 1.0

    def test_quantitative_hand_value(self):
        # p=1, phi=1, |x - x'| = 1  ->  exp(-1)
        params = KernelParams(roughness=[1.0])
        got = correlation(MixedPoint(x=(0.0,)), MixedPoint(x=(1.0,)), params)
        assert got == pytest.approx(math.exp(-1), rel=1e-12)

    def test_qualitative_hand_value(self):
        # z(1)=(0,0), z(2)=(1,1)  ->  squared latent distance 2  ->  exp(-2)
        params = KernelParams(
            roughness=np.zeros(0), latents=(np.array([[0.0, 0.0], [1.0, 1.0]]),)
        )
        got = correlation(MixedPoint(t=(1,)), MixedPoint(t=(2,)), params)
        assert got == pytest.approx(math.exp(-2), rel=1e-12)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(11)
        params = KernelParams(
            roughness=rng.uniform(0.1, 5.0, 2),
            latents=(rng.normal(size=(3, 2)),),
        )
        for _ in range(50):
            a = MixedPoint(x=tuple(rng.uniform(0, 1, 2)), t=(int(rng.integers(1, 4)),))
            b = MixedPoint(x=tuple(rng.uniform(0, 1, 2)), t=(int(rng.integers(1, 4)),))
            assert correlation(a, b, params) == correlation(b, a, params)

    def test_bounds(self):
        rng = np.random.default_rng(5)
        params = KernelParams(roughness=[3.0])
        for _ in range(100):
            a = MixedPoint(x=(rng.uniform(0, 1),))
            b = MixedPoint(x=(rng.uniform(0, 1),))
            v = correlation(a, b, params)
            assert 0.0 < v <= 1.0

    def test_monotone_in_quantitative_distance(self):
        params = KernelParams(roughness=[2.0])
        origin = MixedPoint(x=(0.0,))
        values = [
            correlation(origin, MixedPoint(x=(d,)), params)
            for d in np.linspace(0, 1, 25)
        ]
        assert all(v1 >= v2 for v1, v2 in zip(values, values[1:]))

    def test_latent_isometry_invariance(self):
        rng = np.random.default_rng(23)
        z = rng.normal(size=(4, 2))
        params = KernelParams(roughness=[1.5], latents=(z,))
        for reflect in (False, True):
            q = rotation(rng.uniform(0, 2 * math.pi), reflect)
            rotated = KernelParams(roughness=[1.5], latents=(z @ q.T,))
            for _ in range(20):
                a = MixedPoint(x=(rng.uniform(0, 1),), t=(int(rng.integers(1, 5)),))
                b = MixedPoint(x=(rng.uniform(0, 1),), t=(int(rng.integers(1, 5)),))
                assert correlation(a, b, params) == pytest.approx(
                    correlation(a, b, rotated), rel=1e-12
                )

    def test_reduces_to_gaussian_kernel_without_factors(self):
        rng = np.random.default_rng(2)
        phi = np.array([0.7, 2.3, 0.2])
        params = KernelParams(roughness=phi)
        for _ in range(20):
            xa, xb = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
            expected = math.exp(-float(np.sum(phi * (xa - xb) ** 2)))
            got = correlation(MixedPoint(x=tuple(xa)), MixedPoint(x=tuple(xb)), params)
            assert got == pytest.approx(expected, rel=1e-12)

    def test_all_qualitative_equals_gaussian_over_latents(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(5, 2))
        params = KernelParams(roughness=np.zeros(0), latents=(z,))
        for a in range(1, 6):
            for b in range(1, 6):
                expected = math.exp(-float(np.sum((z[a - 1] - z[b - 1]) ** 2)))
                got = correlation(MixedPoint(t=(a,)), MixedPoint(t=(b,)), params)
                assert got == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        params = KernelParams(roughness=[1.0])
        with pytest.raises(ValueError):
            correlation(MixedPoint(x=(0.1, 0.2)), MixedPoint(x=(0.3, 0.4)), params)


class TestParamsValidation:
    def test_nonpositive_roughness(self):
        with pytest.raises(ValueError):
            KernelParams(roughness=[0.0])

    def test_bad_latent_shape(self):
        with pytest.raises(ValueError):
            KernelParams(roughness=[1.0], latents=(np.zeros((2, 3)),))

    def test_negative_nugget(self):
        with pytest.raises(ValueError):
            KernelParams(roughness=[1.0], nugget=-1e-3)


class TestBuildCorrMatrix:
    def test_single_point(self):
        data = Dataset((MixedPoint(x=(0.4,)),), np.array([1.0]))
        factor = build_corr_matrix(data, KernelParams(roughness=[1.0]))
        assert factor.log_det == 0.0
        assert factor.jitter == 0.0
        assert factor.matrix.shape == (1, 1)

    def test_duplicate_points_need_jitter(self):
        data = Dataset(
            (MixedPoint(x=(0.5,)), MixedPoint(x=(0.5,))), np.array([1.0, 1.0])
        )
        factor = build_corr_matrix(data, KernelParams(roughness=[1.0]))
        assert factor.jitter > 0.0

    def test_reconstruction(self):
        rng = np.random.default_rng(13)
        pts = tuple(
            MixedPoint(x=tuple(rng.uniform(0, 1, 2)), t=(int(rng.integers(1, 4)),))
            for _ in range(3)
        )
        params = KernelParams(roughness=[1.0, 4.0], latents=(rng.normal(size=(3, 2)),))
        data = Dataset(pts, np.zeros(3))
        factor = build_corr_matrix(data, params)
        rebuilt = factor.chol @ factor.chol.T
        np.testing.assert_allclose(rebuilt, factor.matrix, atol=1e-10)
        # and the matrix is the plain pairwise correlation plus the jitter diagonal
        x, t = np.array([p.x for p in pts]), np.array([p.t for p in pts]) - 1
        expected = corr_matrix_from_arrays(x, t, params) + factor.jitter * np.eye(3)
        np.testing.assert_allclose(factor.matrix, expected, atol=1e-12)

    def test_unit_diagonal_before_nugget(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, (6, 2))
        params = KernelParams(roughness=[1.0, 2.0])
        corr = corr_matrix_from_arrays(x, np.zeros((6, 0), dtype=int), params)
        np.testing.assert_array_equal(np.diag(corr), np.ones(6))

    def test_solve_matches_direct_inverse(self):
        rng = np.random.default_rng(40)
        x = rng.uniform(0, 1, (8, 1))
        params = KernelParams(roughness=[3.0], nugget=1e-3)
        data = Dataset(tuple(MixedPoint(x=tuple(r)) for r in x), np.zeros(8))
        factor = build_corr_matrix(data, params)
        rhs = rng.normal(size=8)
        np.testing.assert_allclose(
            factor.solve(rhs), np.linalg.solve(factor.matrix, rhs), atol=1e-9
        )
        assert factor.log_det == pytest.approx(
            np.linalg.slogdet(factor.matrix)[1], rel=1e-9
        )

    def test_factorization_error_after_max_jitter(self):
        # not a kernel Gram matrix: eigenvalues -1 and 3 cannot be fixed by 1e-4
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(FactorizationError):
            factorize(bad, 0.0)


class TestCrossCorr:
    def make_data(self):
        pts = (MixedPoint(x=(0.1,)), MixedPoint(x=(0.6,)), MixedPoint(x=(0.9,)))
        return Dataset(pts, np.zeros(3))

    def test_query_at_training_point(self):
        data = self.make_data()
        params = KernelParams(roughness=[2.0])
        r = cross_corr_vector(MixedPoint(x=(0.6,)), data, params)
        assert r[1] == 1.0

    def test_far_query_decays(self):
        data = self.make_data()
        params = KernelParams(roughness=[1000.0])
        r = cross_corr_vector(MixedPoint(x=(0.35,)), data, params)
        assert np.all(r < 1e-20)

    def test_matches_elementwise_correlation(self):
        rng = np.random.default_rng(77)
        pts = (MixedPoint(x=(0.2,), t=(1,)), MixedPoint(x=(0.8,), t=(2,)))
        data = Dataset(pts, np.zeros(2))
        params = KernelParams(roughness=[1.7], latents=(rng.normal(size=(2, 2)),))
        query = MixedPoint(x=(0.4,), t=(2,))
        r = cross_corr_vector(query, data, params)
        expected = [correlation(query, p, params) for p in pts]
        np.testing.assert_allclose(r, expected, rtol=1e-14)
