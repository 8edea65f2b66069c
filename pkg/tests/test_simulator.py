import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import integrate

from mmwave_cs.analysis import AnalysisContext, avg_exclusion_radii
from mmwave_cs.association import association_pdf, association_r_max
from mmwave_cs.deployment import Densities, SharingModel, decompose_densities, sample_deployment
from mmwave_cs.protocols import Protocol, SensingParams
from mmwave_cs.radio import LinkType, NoiseParams
from mmwave_cs.simulator import (
    SimConfig,
    count_contenders,
    draw_world,
    estimate_transmission_probability,
    expand_sites,
    iteration_rng,
    run_simulation,
    sample_laplace,
    simulate_coverage,
)

Z = tuple(float(z) for z in range(-10, 71, 10))


def ctx(p, **kw):
    return AnalysisContext(protocol=p, **kw)


def small(n=400, **kw):
    return SimConfig(iterations_pt=n, iterations_cov=n, z_grid_db=Z, chunk=100, **kw)


def deaf_sensing():
    # thresholds so high that no one is ever heard
    return SensingParams.from_offsets(NoiseParams(), p_th_offset_db=400.0, p_th_a_offset_db=400.0)


class TestCountContenders:
    def test_empty_deployment(self, rng):
        d = sample_deployment(Densities(0, 0, 0), 100.0, rng)
        for p in ("ocst", "dcsr", "dcsra"):
            assert count_contenders(d, p, None, None, ctx(p), rng) == 0

    def test_infinite_threshold(self, rng):
        c = ctx("dcsra", sensing=deaf_sensing())
        dens = decompose_densities(c.model)
        for _ in range(20):
            d = sample_deployment(dens, 2000.0, rng)
            assert count_contenders(d, "dcsra", None, None, c, rng) == 0
            w = draw_world(c, 2000.0, rng)
            assert count_contenders(w.deployment, "dcsra", w.outcome, None, c, rng, link_map=w.site_los) == 0

    def test_noncs_rejected(self, rng):
        d = sample_deployment(Densities(1, 1, 1), 100.0, rng)
        with pytest.raises(ValueError):
            count_contenders(d, "non-cs", None, None, ctx("non-cs"), rng)

    def test_real_geometry_counts_something(self, rng):
        c = ctx("ocsr")
        counts = []
        for _ in range(50):
            w = draw_world(c, 2000.0, rng)
            counts.append(count_contenders(w.deployment, "ocsr", w.outcome, None, c, rng, link_map=w.site_los))
        assert np.mean(counts) > 1


class TestWorld:
    def test_expand_sites(self, rng):
        d = sample_deployment(decompose_densities(SharingModel()), 600.0, rng)
        site, op = expand_sites(d)
        assert site.size == len(d) + (d.masks == 3).sum()
        assert (np.diff(site) >= 0).all()

    def test_serving_bs_is_operator_one(self, rng):
        c = ctx("dcsr")
        for _ in range(20):
            w = draw_world(c, 1000.0, rng)
            assert w.bs_site[w.serving] == w.outcome.bs_index
            assert w.dist[w.serving] == pytest.approx(w.outcome.distance)
            assert w.bb_dist[w.serving] == 0.0

    def test_counter_rng_is_stable(self):
        a = iteration_rng(3, 1, 17).random(4)
        b = iteration_rng(3, 1, 17).random(4)
        c = iteration_rng(3, 2, 17).random(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestTransmissionProbability:
    def test_noncs(self):
        assert estimate_transmission_probability(small(), "non-cs", ctx("non-cs")) == (1.0, 0.0, 0.0)

    def test_no_contenders(self):
        p, se, n = estimate_transmission_probability(small(100), "dcsr", ctx("dcsr", sensing=deaf_sensing()))
        assert p == 1.0 and n == 0.0


def _no_interference_coverage(c, z_db):
    """integral of exp(-sigma^2 s) f_R over both link types and serving sets."""
    r_max = association_r_max(c.model, c.pl)
    out = []
    for z in 10 ** (np.asarray(z_db) / 10):
        tot = 0.0
        for link in LinkType:
            f = lambda r: math.exp(-c.sigma2 * float(c.s_arg(r, z, link))) * sum(
                association_pdf(r, link, s, c.model, c.pl) for s in (1, 3)
            )
            for a, b in ((0, 100), (100, 1000), (1000, r_max)):
                tot += integrate.quad(f, a, b, limit=400)[0]
        out.append(tot)
    return np.array(out)


class TestCoverage:
    def test_no_transmissions_leave_only_noise(self):
        c = ctx("dcsra")
        res = simulate_coverage(small(3000), "dcsra", 0.0, c)
        ref = _no_interference_coverage(c, res.z_db)
        assert (np.abs(res.p_c - ref) <= 3 * np.maximum(res.stderr, 1 / 3000) + 1e-12).all()

    def test_noncs_low_threshold(self):
        res = run_simulation(small(1000), "non-cs", ctx("non-cs"))
        assert res.p_t == 1.0
        assert res.p_c[0] > 0.9

    @pytest.mark.parametrize("p", [p.value for p in Protocol])
    def test_bounded_by_p_t_and_monotone(self, p):
        res = run_simulation(small(600), p, ctx(p))
        assert (np.diff(res.p_c) <= 0).all()
        assert (res.p_c <= res.p_t + 3 * np.sqrt(res.p_t * (1 - res.p_t) / res.iterations) + 1e-12).all()
        assert res.iterations == 600

    def test_deterministic_across_workers(self):
        a = run_simulation(small(300), "dcsra", ctx("dcsra"))
        b = run_simulation(small(300, workers=2), "dcsra", ctx("dcsra"))
        np.testing.assert_array_equal(a.sinr, b.sinr)
        assert a.p_t == b.p_t

    def test_numpy_path_matches_numba(self, tmp_path):
        code = (
            "import numpy as np; from mmwave_cs.simulator import *; from mmwave_cs.analysis import AnalysisContext;"
            "cfg=SimConfig(iterations_pt=200, iterations_cov=200, chunk=50);"
            "r=run_simulation(cfg,'dcsra',AnalysisContext(protocol='dcsra'));"
            f"np.save(r'{tmp_path}/'+__import__('os').environ.get('TAG','x'), np.append(r.sinr, r.p_t))"
        )
        for tag, flag in (("nb", "0"), ("np", "1")):
            env = {**os.environ, "MMWAVE_CS_DISABLE_NUMBA": flag, "TAG": tag}
            subprocess.run([sys.executable, "-c", code], env=env, check=True)
        np.testing.assert_allclose(np.load(tmp_path / "nb.npy"), np.load(tmp_path / "np.npy"), rtol=1e-12, atol=0)

    def test_trace_dump(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        cfg = SimConfig(iterations_pt=50, iterations_cov=50, z_grid_db=Z, trace_path=str(path))
        res = run_simulation(cfg, "dcsra", ctx("dcsra"))
        recs = [json.loads(l) for l in path.read_text().splitlines()]
        assert len(recs) == 50
        np.testing.assert_allclose([r["sinr_linear"] for r in recs], res.sinr)
        assert all(r["association_distance"] > 0 for r in recs)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(iterations_pt=0)
        with pytest.raises(ValueError):
            SimConfig(region_radius=0.0)
        with pytest.raises(ValueError):
            simulate_coverage(small(), "non-cs", 1.5, ctx("non-cs"))


def test_laplace_sampler_at_zero(rng):
    c = ctx("dcsr")
    m, se = sample_laplace([0.0], 100.0, LinkType.LOS, 1, 0.4, avg_exclusion_radii(c), c, 50, 300.0, rng)
    assert m[0] == 1.0 and se[0] == 0.0
    with pytest.raises(ValueError):
        sample_laplace([1.0], 100.0, LinkType.LOS, 1, 0.4, avg_exclusion_radii(c), c, 5, 300.0, rng, model="x")
