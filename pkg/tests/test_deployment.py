import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mmwave_cs.deployment import (
    Deployment,
    Densities,
    SharingModel,
    decompose_densities,
    operator_set,
    operator_view,
    sample_deployment,
)


class TestDecompose:
    def test_defaults(self):
        d = decompose_densities(SharingModel(30, 30, 0.5))
        assert SharingModel(30, 30, 0.5).site_density == pytest.approx(40.0)
        assert (d.shared, d.excl_1, d.excl_2) == pytest.approx((20.0, 10.0, 10.0))

    def test_no_overlap(self):
        d = decompose_densities(SharingModel(30, 30, 0.0))
        assert (d.shared, d.excl_1, d.excl_2) == (0.0, 30.0, 30.0)

    def test_full_overlap(self):
        m = SharingModel(30, 30, 1.0)
        d = decompose_densities(m)
        assert m.site_density == pytest.approx(30.0)
        assert d.shared == pytest.approx(30.0)
        assert d.excl_1 == pytest.approx(0.0, abs=1e-12) and d.excl_2 == pytest.approx(0.0, abs=1e-12)

    def test_negative_exclusive_rejected(self):
        with pytest.raises(ValueError):
            decompose_densities(SharingModel(10, 50, 1.0))

    def test_rho_out_of_range(self):
        with pytest.raises(ValueError):
            SharingModel(30, 30, 1.2)

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 1))
    def test_recomposition(self, l1, l2, rho):
        m = SharingModel(l1, l2, rho)
        try:
            d = decompose_densities(m)
        except ValueError:
            lam = m.site_density
            assert min(l1, l2) < rho * lam
            return
        assert d.excl_1 + d.shared == pytest.approx(l1, abs=1e-9)
        assert d.excl_2 + d.shared == pytest.approx(l2, abs=1e-9)


class TestSample:
    def test_empty(self, rng):
        d = sample_deployment(Densities(0, 0, 0), 1000.0, rng)
        assert len(d) == 0
        assert operator_view(d, 1).size == 0

    def test_shared_count_is_poisson(self, rng):
        dens = Densities(0, 0, 20.0)
        counts = np.array([len(sample_deployment(dens, 1000.0, rng)) for _ in range(10_000)])
        mean = 20e-6 * math.pi * 1e6
        assert mean == pytest.approx(62.83, abs=5e-3)
        assert abs(counts.mean() - mean) < 4 * math.sqrt(mean / counts.size)
        # chi-square goodness of fit on pooled bins
        lo, hi = int(mean - 3 * math.sqrt(mean)), int(mean + 3 * math.sqrt(mean))
        edges = np.arange(lo, hi + 1)
        obs = np.array([(counts < lo).sum(), *[(counts == k).sum() for k in edges], (counts > hi).sum()])
        p = np.array([stats.poisson.cdf(lo - 1, mean), *stats.poisson.pmf(edges, mean), stats.poisson.sf(hi, mean)])
        _, pval = stats.chisquare(obs, p * counts.size)
        assert pval > 0.01

    def test_sub_process_densities(self, rng):
        dens = decompose_densities(SharingModel())
        radius = 2000.0
        tot = np.zeros(4)
        n = 10_000
        for _ in range(n):
            d = sample_deployment(dens, radius, rng)
            tot += np.bincount(d.masks, minlength=4)
        area = math.pi * radius**2 * 1e-6
        emp = tot[1:] / (n * area)
        np.testing.assert_allclose(emp, [10.0, 10.0, 20.0], rtol=0.01)

    def test_inside_disk_and_reproducible(self):
        dens = decompose_densities(SharingModel())
        a = sample_deployment(dens, 500.0, np.random.default_rng(7))
        b = sample_deployment(dens, 500.0, np.random.default_rng(7))
        assert (a.distances <= 500.0).all()
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.masks, b.masks)

    def test_radius_validation(self, rng):
        with pytest.raises(ValueError):
            sample_deployment(Densities(1, 1, 1), 0.0, rng)


class TestOperatorView:
    def test_shared_only(self, rng):
        d = sample_deployment(Densities(0, 0, 30.0), 1000.0, rng)
        np.testing.assert_array_equal(operator_view(d, 1), operator_view(d, 2))

    def test_set_identity(self, rng):
        for _ in range(50):
            d = sample_deployment(decompose_densities(SharingModel()), 1000.0, rng)
            v1, v2 = operator_view(d, 1), operator_view(d, 2)
            shared = (d.masks == 3).sum()
            assert v1.size + v2.size - shared == len(d)
            # operator 1 points are exclusive-1 and shared, disjoint
            assert set(v1) == set(np.flatnonzero(d.masks == 1)) | set(np.flatnonzero(d.masks == 3))

    def test_invalid_operator(self, rng):
        d = sample_deployment(Densities(1, 1, 1), 100.0, rng)
        with pytest.raises(ValueError):
            operator_view(d, 3)
        with pytest.raises(ValueError):
            operator_set()
        with pytest.raises(ValueError):
            operator_set(5)


def test_jsonl_round_trip(tmp_path, rng):
    d = sample_deployment(decompose_densities(SharingModel()), 800.0, rng)
    path = tmp_path / "d.jsonl"
    d.dump_jsonl(path)
    back = Deployment.load_jsonl(path, region_radius=800.0)
    np.testing.assert_array_equal(back.positions, d.positions)
    np.testing.assert_array_equal(back.masks, d.masks)
