import numpy as np
import pytest

import oracles
from conftest import make_blobs
from querytax.errors import SizeOne, UndefinedDbcv
from querytax.validate import (
    apts_core_distance,
    dbcv,
    density_separation,
    density_sparseness,
)


def two_blob_case(per_blob=25, sep=50.0, seed=0, scale=0.8):
    X, y = make_blobs([[0.0, 0.0], [sep, 0.0]], per_blob, scale, seed)
    return X, y


class TestAptsCoreDistance:
    def test_two_points(self):
        X = np.array([[0.0, 0.0], [3.0, 4.0]])  # distance 5
        np.testing.assert_allclose(apts_core_distance(X), [5.0, 5.0])

    def test_equilateral(self):
        s = 2.0
        X = np.array([[0.0, 0.0], [s, 0.0], [s / 2, s * np.sqrt(3) / 2]])
        np.testing.assert_allclose(apts_core_distance(X), [s, s, s], rtol=1e-12)

    def test_matches_direct_formula(self, rng):
        X = rng.standard_normal((5, 2))
        np.testing.assert_allclose(
            apts_core_distance(X), oracles.naive_apts(X), rtol=1e-12
        )

    def test_size_one(self):
        with pytest.raises(SizeOne):
            apts_core_distance(np.zeros((1, 3)))

    def test_coincident_points_warn(self):
        X = np.zeros((3, 2))
        with pytest.warns(UserWarning, match="coincident"):
            out = apts_core_distance(X)
        assert np.isfinite(out).all()


class TestDensitySparseness:
    def test_two_point_fallback(self):
        X = np.array([[0.0], [7.0]])
        apts = apts_core_distance(X)
        assert density_sparseness(X, apts) == 7.0

    def test_outlier_increases_dsc(self, rng):
        X = rng.standard_normal((20, 2))
        apts = apts_core_distance(X)
        base = density_sparseness(X, apts)
        Xo = np.vstack([X, [[40.0, 0.0]]])
        apts_o = apts_core_distance(Xo)
        assert density_sparseness(Xo, apts_o) > base

    def test_matches_naive(self, rng):
        for seed in range(5):
            X = np.random.default_rng(seed).standard_normal((50, 3))
            apts = oracles.naive_apts(X)
            assert density_sparseness(X, apts) == pytest.approx(
                oracles.naive_dsc(X, apts), abs=1e-9
            )


class TestDensitySeparation:
    def test_two_2point_clusters_exhaustive(self):
        A = np.array([[0.0], [1.0]])
        B = np.array([[10.0], [12.0]])
        aa = apts_core_distance(A)
        ab = apts_core_distance(B)
        expect = min(
            max(abs(float(a[0] - b[0])), aa[i], ab[j])
            for i, a in enumerate(A)
            for j, b in enumerate(B)
        )
        assert density_separation(A, B, aa, ab) == pytest.approx(expect, abs=1e-12)

    def test_monotone_in_offset(self, rng):
        A = rng.standard_normal((15, 2))
        B0 = rng.standard_normal((15, 2))
        seps = []
        for off in (10.0, 30.0, 90.0):
            B = B0 + [off, 0.0]
            seps.append(
                density_separation(
                    A, B, apts_core_distance(A), apts_core_distance(B)
                )
            )
        assert seps[0] < seps[1] < seps[2]

    def test_matches_exhaustive_oracle(self, rng):
        A = rng.standard_normal((30, 2))
        B = rng.standard_normal((30, 2)) + [8.0, 0.0]
        aa = apts_core_distance(A)
        ab = apts_core_distance(B)
        assert density_separation(A, B, aa, ab) == pytest.approx(
            oracles.naive_dspc(A, B, aa, ab), abs=1e-12
        )


class TestDbcv:
    def test_far_blobs_high_score(self):
        X, y = two_blob_case()
        report = dbcv(X, y)
        assert report.overall > 0.9
        for c in report.per_cluster:
            assert c.validity > 0.9

    def test_shuffled_labels_negative(self, rng):
        X, y = two_blob_case(seed=3)
        shuffled = rng.permutation(y)
        assert dbcv(X, shuffled).overall < 0

    def test_noise_weighting_halves_exactly(self, rng):
        X, y = two_blob_case(seed=5)
        base = dbcv(X, y).overall
        # append as many noise-labelled points: weights |C|/N halve
        noise_pts = rng.uniform(-100, 100, (len(X), 2))
        X2 = np.vstack([X, noise_pts])
        y2 = np.concatenate([y, -np.ones(len(X), dtype=int)])
        assert dbcv(X2, y2).overall == pytest.approx(base / 2, abs=1e-12)

    def test_noise_monotonicity(self, rng):
        X, y = two_blob_case(seed=7)
        base = dbcv(X, y).overall
        for extra in (5, 20, 60):
            pts = rng.uniform(-10, 60, (extra, 2))
            X2 = np.vstack([X, pts])
            y2 = np.concatenate([y, -np.ones(extra, dtype=int)])
            assert dbcv(X2, y2).overall <= base + 1e-12

    def test_undefined_cases(self, rng):
        X = rng.standard_normal((10, 2))
        with pytest.raises(UndefinedDbcv):
            dbcv(X, np.zeros(10, dtype=int))  # single cluster
        y = np.array([0] * 8 + [1] + [-1])
        with pytest.raises(UndefinedDbcv):
            dbcv(X, y)  # second cluster has size 1

    def test_size_one_cluster_zero_validity(self):
        X, y = two_blob_case(seed=11)
        X2 = np.vstack([X, [[25.0, 25.0]]])
        y2 = np.concatenate([y, [2]])
        report = dbcv(X2, y2)
        singleton = next(c for c in report.per_cluster if c.cluster_id == 2)
        assert singleton.validity == 0.0
        # weighted sum invariant: overall == sum(|C|/N * V)
        manual = sum(c.size / report.n_points * c.validity for c in report.per_cluster)
        assert report.overall == pytest.approx(manual, abs=1e-12)

    def test_bounds(self, rng):
        for seed in range(5):
            trng = np.random.default_rng(seed)
            X = trng.standard_normal((60, 3))
            y = trng.integers(-1, 3, 60)
            try:
                report = dbcv(X, y)
            except UndefinedDbcv:
                continue
            assert -1.0 <= report.overall <= 1.0
            for c in report.per_cluster:
                assert -1.0 - 1e-12 <= c.validity <= 1.0 + 1e-12

    def test_permutation_and_rotation_invariance(self, rng):
        X, y = two_blob_case(seed=13)
        base = dbcv(X, y).overall
        relabel = np.where(y == 0, 5, 2)
        assert dbcv(X, relabel).overall == pytest.approx(base, abs=1e-12)
        theta = 1.1
        R = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        assert dbcv(X @ R.T, y).overall == pytest.approx(base, abs=9e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_naive_oracle(self, seed):
        trng = np.random.default_rng(seed)
        k = int(trng.integers(2, 5))
        centers = trng.uniform(-30, 30, (k, 2))
        per = int(trng.integers(10, 40))
        X, y = make_blobs(centers, per, trng.uniform(0.5, 2.5), seed + 50)
        # make some points noise and vary cluster shapes
        noise_idx = trng.choice(len(X), size=len(X) // 10, replace=False)
        y = y.copy()
        y[noise_idx] = -1
        report = dbcv(X, y)
        overall, per_cluster = oracles.naive_dbcv(X, y)
        assert report.overall == pytest.approx(overall, abs=1e-9)
        for c in report.per_cluster:
            assert c.validity == pytest.approx(per_cluster[c.cluster_id], abs=1e-9)

    def test_report_json(self):
        X, y = two_blob_case()
        import json

        parsed = json.loads(dbcv(X, y).to_json())
        assert set(parsed) == {"overall", "n_points", "per_cluster"}
        assert {c["id"] for c in parsed["per_cluster"]} == {0, 1}
