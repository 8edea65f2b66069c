"""Independent Monte Carlo and quadrature oracles shared by the module tests and the acceptance suite.

Expensive results are cached per process so a criterion and the module test that
share an oracle pay for it once.
"""

import os
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from mmwave_cs.analysis import AnalysisContext, coverage_curve
from mmwave_cs.association import associate, association_pdf, association_r_max
from mmwave_cs.deployment import SharingModel, decompose_densities, sample_deployment
from mmwave_cs.radio import LinkType, PathLossParams, interferer_gain_distribution, los_probability
from mmwave_cs.simulator import SimConfig, run_simulation

Z_GRID = tuple(float(z) for z in range(-10, 71, 5))
WORKERS = os.cpu_count() or 1

# acceptance lines collected during the run and printed in the terminal summary
REPORT: dict = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    REPORT[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"


def _total_pdf(r, model, pl):
    return sum(association_pdf(r, t, s, model, pl) for t in LinkType for s in (1, 3))


def association_mass(model=SharingModel(), pl=PathLossParams()) -> float:
    r_max = association_r_max(model, pl)
    edges = [0, 50, 200, 1000, r_max]
    return sum(
        integrate.quad(_total_pdf, a, b, args=(model, pl), limit=500, epsabs=1e-13, epsrel=1e-12)[0]
        for a, b in zip(edges, edges[1:])
    )


@lru_cache(maxsize=None)
def association_ks(n: int = 100_000, seed: int = 1, radius: float = 2000.0):
    """KS test of simulated serving distances against the analytic density."""
    model, pl = SharingModel(), PathLossParams()
    rng = np.random.default_rng(seed)
    dens = decompose_densities(model)
    dist = np.empty(n)
    for i in range(n):
        d = sample_deployment(dens, radius, rng)
        links = rng.random(len(d)) < los_probability(d.distances, pl)
        dist[i] = associate(d, links, pl).distance
    r_max = association_r_max(model, pl)
    grid = np.concatenate(([0.0], np.geomspace(1e-3, r_max, 4000)))
    pieces = [integrate.quad(_total_pdf, a, b, args=(model, pl))[0] for a, b in zip(grid[:-1], grid[1:])]
    cdf = np.concatenate(([0.0], np.cumsum(pieces)))
    return stats.kstest(dist, lambda x: np.interp(x, grid, cdf))


def u_monte_carlo(s, t, link, p_t, ctx, n=1_000_000, rng=None):
    """Sample mean and standard error of exp(-s C K F G t^-alpha)."""
    rng = rng or np.random.default_rng(0)
    g = interferer_gain_distribution(ctx.antenna)
    c, alpha = ctx.pl.coeffs(link)
    k = rng.random(n) < p_t / 2
    gain = g.sample(rng, n)
    f = rng.exponential(1.0, n)
    x = np.exp(-s * c * k * f * gain * t ** (-alpha))
    return x.mean(), x.std(ddof=1) / np.sqrt(n)


@lru_cache(maxsize=None)
def analysis_curve(protocol: str, z=Z_GRID, **over):
    return coverage_curve(list(z), AnalysisContext(protocol=protocol, **dict(over)))


@lru_cache(maxsize=None)
def sim_curve(protocol: str, iterations: int = 10_000, seed: int = 0):
    cfg = SimConfig(iterations_pt=iterations, iterations_cov=iterations, master_seed=seed, z_grid_db=Z_GRID, workers=WORKERS)
    return run_simulation(cfg, protocol, AnalysisContext(protocol=protocol))
