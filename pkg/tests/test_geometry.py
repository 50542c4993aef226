import numpy as np
import pytest

from stargp import geometry
from stargp.geometry import (
    ScalingParams,
    lonlat_to_cartesian,
    scale_coords,
    scaled_distance,
    standardize_coords,
    standardize_responses,
    destandardize_responses,
)


class TestLonLat:
    def test_axis_cases(self):
        assert np.allclose(lonlat_to_cartesian(0, 0), (1, 0, 0), atol=1e-12)
        assert np.allclose(lonlat_to_cartesian(90, 0), (0, 1, 0), atol=1e-12)
        assert np.allclose(lonlat_to_cartesian(0, 90), (0, 0, 1), atol=1e-12)

    def test_unit_norm_and_wrapping(self):
        rng = np.random.default_rng(0)
        lon = rng.uniform(-720, 720, size=200)
        lat = rng.uniform(-90, 90, size=200)
        x, y, z = lonlat_to_cartesian(lon, lat)
        assert np.allclose(x**2 + y**2 + z**2, 1.0, atol=1e-12)
        x2, y2, z2 = lonlat_to_cartesian(lon + 360.0, lat)
        assert np.allclose((x, y, z), (x2, y2, z2), atol=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            lonlat_to_cartesian(np.nan, 10)
        with pytest.raises(ValueError):
            lonlat_to_cartesian(10, 91)

    def test_chord_preserves_neighbor_ranks(self):
        # nearest neighbor under chord distance == nearest under central angle
        rng = np.random.default_rng(1)
        lon = rng.uniform(0, 360, size=60)
        lat = np.degrees(np.arcsin(rng.uniform(-1, 1, size=60)))
        P = np.column_stack(lonlat_to_cartesian(lon, lat))
        chord = np.linalg.norm(P[:, None] - P[None, :], axis=2)
        angle = np.arccos(np.clip(P @ P.T, -1, 1))
        np.fill_diagonal(chord, np.inf)
        np.fill_diagonal(angle, np.inf)
        assert np.array_equal(chord.argmin(axis=1), angle.argmin(axis=1))


class TestStandardizeCoords:
    def test_two_point_column(self):
        X = np.array([[1.0, 0.0], [3.0, 1.0]])
        X_std, stats = standardize_coords(X)
        assert np.allclose(X_std[:, 0], [-1.0, 1.0])  # population sd
        assert stats.mean[0] == 2.0 and stats.sd[0] == 1.0

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 3))
        X1, _ = standardize_coords(X)
        X2, _ = standardize_coords(X1)
        assert np.allclose(X1, X2, atol=1e-12)

    def test_constant_spatial_column_rejected(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        with pytest.raises(ValueError, match="spatial"):
            standardize_coords(X)

    def test_constant_time_column_flagged(self):
        X = np.column_stack([np.arange(5.0), np.ones(5)])
        X_std, stats = standardize_coords(X)
        assert not stats.time_scale_identifiable
        assert np.allclose(X_std[:, 1], 0.0)

    def test_duplicates_rejected(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="duplicate"):
            standardize_coords(X)


class TestScaleCoords:
    def test_identity_scales(self):
        X = np.random.default_rng(3).normal(size=(10, 3))
        assert np.allclose(scale_coords(X, ScalingParams(1.0, 1.0)), X)

    def test_arithmetic(self):
        X = np.array([[2.0, 3.0]])
        assert np.allclose(scale_coords(X, ScalingParams(2.0, 3.0)), [[1.0, 1.0]])

    def test_homogeneity(self):
        X = np.random.default_rng(4).normal(size=(10, 4))
        a = scale_coords(X, ScalingParams(0.5, 2.0))
        b = scale_coords(X, ScalingParams(1.0, 4.0))
        assert np.allclose(a, 2.0 * b)

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValueError):
            ScalingParams(0.0, 1.0)
        with pytest.raises(ValueError):
            ScalingParams(1.0, -2.0)


class TestScaledDistance:
    def test_zero_and_345(self):
        sp = ScalingParams(1.0, 1.0)
        p = np.array([1.0, 2.0, 3.0])
        assert scaled_distance(p, p, sp) == 0.0
        a = np.array([0.0, 0.0, 0.0])
        b = np.array([3.0, 0.0, 4.0])
        assert np.isclose(scaled_distance(a, b, sp), 5.0)

    def test_two_forms_agree(self):
        # ||ds||^2/ls^2 + dt^2/lt^2 == (||ds||^2 + eta dt^2)/ls^2
        rng = np.random.default_rng(5)
        sp = ScalingParams(0.7, 1.9)
        for _ in range(20):
            a, b = rng.normal(size=(2, 4))
            r = scaled_distance(a, b, sp)
            ds2 = np.sum((a[:-1] - b[:-1]) ** 2)
            dt2 = (a[-1] - b[-1]) ** 2
            r_alt = np.sqrt((ds2 + sp.eta * dt2) / sp.lambda_s**2)
            assert np.isclose(r, r_alt, rtol=1e-12)

    def test_metric_properties(self):
        rng = np.random.default_rng(6)
        sp = ScalingParams(0.4, 1.3)
        P = rng.normal(size=(30, 3))
        for _ in range(200):
            i, j, k = rng.integers(0, 30, size=3)
            dij = scaled_distance(P[i], P[j], sp)
            dji = scaled_distance(P[j], P[i], sp)
            assert np.isclose(dij, dji, rtol=1e-14)
            assert dij <= scaled_distance(P[i], P[k], sp) + scaled_distance(
                P[k], P[j], sp
            ) + 1e-12

    def test_homogeneity_preserves_ranks(self):
        rng = np.random.default_rng(7)
        P = rng.normal(size=(20, 3))
        sp1 = ScalingParams(0.5, 0.25)
        sp2 = ScalingParams(1.5, 0.75)  # common factor 3
        d1 = scaled_distance(P[:, None], P[None, :], sp1)
        d2 = scaled_distance(P[:, None], P[None, :], sp2)
        assert np.allclose(d1, 3.0 * d2, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            scaled_distance(np.zeros(3), np.zeros(4), ScalingParams(1, 1))


class TestResponses:
    def test_two_point_column(self):
        Y = np.array([[1.0], [3.0]])
        Y_std, stats = standardize_responses(Y)
        assert np.allclose(Y_std[:, 0], [-1.0, 1.0])

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        Y = rng.normal(loc=3.0, scale=2.5, size=(6, 40))
        Y_std, stats = standardize_responses(Y)
        assert np.allclose(destandardize_responses(Y_std, stats), Y, atol=1e-10)
        assert np.allclose(Y_std.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(Y_std.std(axis=0), 1.0, atol=1e-12)

    def test_constant_location_fallback(self):
        Y = np.column_stack([np.random.default_rng(9).normal(size=4), np.full(4, 7.0)])
        with pytest.warns(RuntimeWarning, match="zero variance"):
            Y_std, stats = standardize_responses(Y)
        assert np.allclose(Y_std[:, 1], 0.0)
        assert stats.sd[1] == 1.0
        assert stats.constant_locations.tolist() == [1]

    def test_test_data_uses_train_stats(self):
        rng = np.random.default_rng(10)
        Y = rng.normal(size=(8, 5))
        _, stats = standardize_responses(Y)
        Y_new = rng.normal(size=(3, 5))
        Z = geometry.apply_response_stats(Y_new, stats)
        assert np.allclose(destandardize_responses(Z, stats), Y_new, atol=1e-12)
