"""Two-step Monte Carlo: transmission probability from contender counts, then coverage from SINR samples.

Every iteration draws from its own generator seeded with ``(master_seed, stream, i)``,
so results do not depend on how iterations are split across workers.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .analysis import AnalysisContext, ExclusionRadii, solve_transmission_probability
from .association import AssociationOutcome, associate, exclusion_radius
from .deployment import Deployment, decompose_densities, operator_view, sample_deployment
from .protocols import Family, Protocol, announcement_radii, sensing_distance_law
from .radio import LinkType, los_probability, noise_floor

log = logging.getLogger(__name__)

STREAM_PT = 1
STREAM_COV = 2


@dataclass(frozen=True)
class SimConfig:
    iterations_pt: int = 10000
    iterations_cov: int = 10000
    region_radius: float = 2000.0
    master_seed: int = 0
    z_grid_db: tuple = tuple(float(z) for z in range(-10, 71, 5))
    chunk: int = 500
    workers: int = 1
    trace_path: str | None = None

    def __post_init__(self):
        if self.iterations_pt < 1 or self.iterations_cov < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.region_radius <= 0:
            raise ValueError("region_radius must be positive")
        z = tuple(float(v) for v in self.z_grid_db)
        if not z:
            raise ValueError("z_grid_db must be non-empty")
        if any(b < a for a, b in zip(z, z[1:])):
            raise ValueError("z_grid_db must be sorted")
        object.__setattr__(self, "z_grid_db", z)


@dataclass
class IterationOutcome:
    sinr_linear: float  # 0 encodes "an active contender was present"
    association_distance: float
    contender_count: int
    suppressed_by_announcement: int


@dataclass
class SimResult:
    protocol: Protocol
    z_db: np.ndarray
    p_c: np.ndarray
    stderr: np.ndarray
    p_t: float
    p_t_stderr: float
    mean_contenders: float
    iterations: int
    resampled: int
    seed: int
    sinr: np.ndarray = field(repr=False, default=None)


def iteration_rng(master_seed: int, stream: int, i: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(stream), int(i)])


# ------------------------------------------------------------------ world


@dataclass
class World:
    """One coherent realization: deployment, blocking, association and every per-BS draw."""

    deployment: Deployment
    site_los: np.ndarray
    outcome: AssociationOutcome
    serving: int  # index into the per-BS arrays
    bs_site: np.ndarray
    dist: np.ndarray  # BS to typical UE
    los: np.ndarray  # site blocking state toward the UE, shared by co-located BSs
    bs_main: np.ndarray  # BS mainlobe points at the UE
    ue_main: np.ndarray  # UE mainlobe points at the BS
    fading: np.ndarray
    active_u: np.ndarray
    deaf: np.ndarray
    listen_main: np.ndarray  # deaf BS listens to the UE's announcement on its mainlobe
    sensor_u: np.ndarray  # serving BS sensing lobe draw (CST)
    cont_main: np.ndarray  # BS mainlobe points at the serving BS
    ann_main: np.ndarray  # serving BS listens toward this BS's UE on its mainlobe
    bb_dist: np.ndarray  # BS to serving BS
    bb_los: np.ndarray

    @property
    def same_site(self) -> np.ndarray:
        return self.bs_site == self.bs_site[self.serving]


def expand_sites(d: Deployment) -> tuple[np.ndarray, np.ndarray]:
    """(site index, operator id) for every BS; a shared site hosts one BS per operator."""
    has1 = (d.masks & 1).astype(bool)
    has2 = (d.masks & 2).astype(bool)
    idx = np.arange(len(d))
    site = np.concatenate((idx[has1], idx[has2]))
    op = np.concatenate((np.ones(has1.sum(), np.int64), np.full(has2.sum(), 2, np.int64)))
    order = np.lexsort((op, site))
    return site[order], op[order]


def draw_world(ctx: AnalysisContext, region_radius: float, rng: np.random.Generator) -> World:
    dens = decompose_densities(ctx.model)
    a = ctx.antenna
    resampled = 0
    while True:
        d = sample_deployment(dens, region_radius, rng)
        if operator_view(d, 1).size:
            break
        resampled += 1
    d.resampled = resampled
    site_dist = d.distances
    site_los = rng.random(len(d)) < los_probability(site_dist, ctx.pl)
    outcome = associate(d, site_los, ctx.pl)
    bs_site, bs_op = expand_sites(d)
    serving = int(np.flatnonzero((bs_site == outcome.bs_index) & (bs_op == 1))[0])
    nb = bs_site.size
    u = rng.random((8, nb))
    fading = rng.exponential(1.0, nb)
    pos = d.positions[bs_site]
    bb_dist = np.hypot(*(pos - pos[serving]).T)
    return World(
        deployment=d,
        site_los=site_los,
        outcome=outcome,
        serving=serving,
        bs_site=bs_site,
        dist=site_dist[bs_site],
        los=site_los[bs_site],
        bs_main=u[0] < a.p_bs_main,
        ue_main=u[1] < a.p_ue_main,
        fading=fading,
        active_u=u[2],
        deaf=u[3] >= 0.5,
        listen_main=u[4] < a.p_bs_main,
        sensor_u=u[5],
        cont_main=u[6] < a.p_bs_main,
        ann_main=u[7] < a.p_bs_main,
        bb_dist=bb_dist,
        bb_los=rng.random(nb) < los_probability(bb_dist, ctx.pl),
    )


@lru_cache(maxsize=64)
def _tables(protocol: Protocol, ctx: AnalysisContext):
    """Radius lookup tables [link, sensor lobe, contender lobe] for sensing and announcements."""
    sense = sensing_distance_law(protocol, ctx.sensing, ctx.antenna, ctx.pl)
    ann = announcement_radii(ctx.sensing, ctx.antenna, ctx.pl)
    ann_t = np.empty((2, 2, 2))
    for i, link in enumerate((LinkType.LOS, LinkType.NLOS)):
        for j, main in enumerate((True, False)):
            ann_t[i, j, :] = ann.get(link, main)
    return sense, sense.table(), ann_t


def _sensing_inputs(w: World, protocol: Protocol, sense_law):
    """(dist, los, sensor_main, contender_main, valid) of the sensing stage."""
    if protocol.family is Family.CSR:
        # the UE senses through the same lobes that carry the interference
        return w.dist, w.los, w.ue_main, w.bs_main, np.arange(w.dist.size) != w.serving
    sensor_main = w.sensor_u < sense_law.p_main
    # BSs on the serving mast cannot be heard by the serving BS
    return w.bb_dist, w.bb_los, sensor_main, w.cont_main, ~w.same_site


def _announcement_inputs(w: World):
    return w.bb_dist, w.bb_los, w.ann_main, w.ann_main, ~w.same_site


def world_arrays(w: World, protocol: Protocol, ctx: AnalysisContext) -> dict:
    """Flat per-BS kernel inputs for one world."""
    out = {"n": w.dist.size}
    if protocol is not Protocol.NON_CS:
        law, table, ann_table = _tables(protocol, ctx)
        out["sense"] = _sensing_inputs(w, protocol, law)
        out["table"] = table
        if protocol.announces:
            out["ann"] = _announcement_inputs(w)
            out["ann_table"] = ann_table
            # deaf BSs that hear the typical UE's announcement stay silent
            out["hear"] = (w.dist, w.los, w.listen_main, w.listen_main, np.ones(w.dist.size, bool))
    m_bs, s_bs = ctx.antenna.bs_gains
    m_ue, s_ue = ctx.antenna.ue_gains
    gain = np.where(w.bs_main, m_bs, s_bs) * np.where(w.ue_main, m_ue, s_ue)
    c = np.where(w.los, ctx.pl.c_los, ctx.pl.c_nlos)
    alpha = np.where(w.los, ctx.pl.alpha_los, ctx.pl.alpha_nlos)
    out["power"] = c * w.fading * gain * w.dist ** (-alpha)
    link = w.outcome.link
    cs, a_s = ctx.pl.coeffs(link)
    out["signal"] = cs * w.fading[w.serving] * ctx.serving_gain * w.outcome.distance ** (-a_s)
    out["valid"] = np.arange(w.dist.size) != w.serving
    return out


def _concat(parts: list[dict], key: str):
    cols = list(zip(*(p[key] for p in parts)))
    return tuple(np.concatenate(c) for c in cols)


def _offsets(parts):
    return np.concatenate(([0], np.cumsum([p["n"] for p in parts]))).astype(np.int64)


# --------------------------------------------------------------- contenders


def count_contenders(
    d: Deployment,
    protocol: Protocol,
    outcome: AssociationOutcome | None,
    laws,
    ctx: AnalysisContext,
    rng: np.random.Generator,
    *,
    link_map=None,
    exclusion: float | None = None,
) -> int:
    """Number of BSs (plus announcing UEs for dcsra) that a sensing node would hear.

    With ``outcome`` the sensor sits where the protocol puts it: the typical UE for CSR,
    the serving BS for CST and for announcements, with the serving BS (CSR) or the whole
    serving mast (CST) left out. Without ``outcome`` every sensor sits at the origin and
    BSs on operator-1 sites closer than ``exclusion`` (default ``ctx.r_bar`` for CSR, 0
    for CST) are left out, which is the geometry the closed-form average assumes.
    """
    protocol = Protocol.parse(protocol)
    if protocol is Protocol.NON_CS:
        raise ValueError("non-cs has no contenders")
    if len(d) == 0:
        return 0
    a = ctx.antenna
    law = laws if laws is not None else sensing_distance_law(protocol, ctx.sensing, a, ctx.pl)
    _, table, ann_table = _tables(protocol, ctx)
    bs_site, _ = expand_sites(d)
    nb = bs_site.size
    pos = d.positions[bs_site]
    if link_map is None:
        link_map = rng.random(len(d)) < los_probability(d.distances, ctx.pl)
    u = rng.random((3, nb))
    bs_main = u[0] < a.p_bs_main
    sensor_main = u[1] < law.p_main
    ann_main = u[2] < a.p_bs_main
    one = np.array([0, nb], dtype=np.int64)

    if outcome is None:
        dist = d.distances[bs_site]
        los = np.asarray(link_map, bool)[bs_site]
        if exclusion is None:
            exclusion = ctx.r_bar if protocol.family is Family.CSR else 0.0
        valid = ~(((d.masks[bs_site] & 1) > 0) & (dist < exclusion))
        n = _kernels.count_within(one, dist, los, sensor_main, bs_main, valid, table)[0]
        if protocol.announces:
            n += _kernels.count_within(one, dist, los, ann_main, ann_main, np.ones(nb, bool), ann_table)[0]
        return int(n)

    same_site = bs_site == outcome.bs_index
    if protocol.family is Family.CSR:
        dist = d.distances[bs_site]
        los = np.asarray(link_map, bool)[bs_site]
        serving = np.flatnonzero(same_site)[0]  # operator-1 BS sorts first on its site
        valid = np.arange(nb) != serving
        n = _kernels.count_within(one, dist, los, sensor_main, bs_main, valid, table)[0]
    else:
        dist = np.hypot(*(pos - d.positions[outcome.bs_index]).T)
        los = rng.random(nb) < los_probability(dist, ctx.pl)
        n = _kernels.count_within(one, dist, los, sensor_main, bs_main, ~same_site, table)[0]
    if protocol.announces:
        bb = np.hypot(*(pos - d.positions[outcome.bs_index]).T)
        bb_los = rng.random(nb) < los_probability(bb, ctx.pl)
        n += _kernels.count_within(one, bb, bb_los, ann_main, ann_main, ~same_site, ann_table)[0]
    return int(n)


@lru_cache(maxsize=4096)
def _p_for_count(n: int) -> float:
    return solve_transmission_probability(float(n))


def _chunk_counts(args):
    protocol, ctx, cfg, start, stop = args
    parts, resampled = [], 0
    for i in range(start, stop):
        w = draw_world(ctx, cfg.region_radius, iteration_rng(cfg.master_seed, STREAM_PT, i))
        resampled += w.deployment.resampled
        parts.append(world_arrays(w, protocol, ctx))
    off = _offsets(parts)
    counts = _kernels.count_within(off, *_concat(parts, "sense"), parts[0]["table"])
    if protocol.announces:
        counts = counts + _kernels.count_within(off, *_concat(parts, "ann"), parts[0]["ann_table"])
    return counts, resampled


def _chunks(n, size):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def estimate_transmission_probability(cfg: SimConfig, protocol, ctx: AnalysisContext) -> tuple[float, float, float]:
    """(p_T, its standard error, mean contender count) from per-iteration fixed points."""
    protocol = Protocol.parse(protocol)
    if protocol is Protocol.NON_CS:
        return 1.0, 0.0, 0.0
    jobs = [(protocol, ctx, cfg, a, b) for a, b in _chunks(cfg.iterations_pt, cfg.chunk)]
    results = _map(_chunk_counts, jobs, cfg.workers)
    counts = np.concatenate([r[0] for r in results])
    p = np.array([_p_for_count(int(n)) for n in counts])
    se = float(p.std(ddof=1) / math.sqrt(p.size)) if p.size > 1 else 0.0
    return float(p.mean()), se, float(counts.mean())


# ----------------------------------------------------------------- coverage


def _chunk_sinr(args):
    protocol, ctx, cfg, p_t, start, stop, want_trace = args
    parts, trace, resampled = [], [], 0
    sigma2 = noise_floor(ctx.noise) / ctx.sensing.p_x
    for i in range(start, stop):
        w = draw_world(ctx, cfg.region_radius, iteration_rng(cfg.master_seed, STREAM_COV, i))
        resampled += w.deployment.resampled
        arr = world_arrays(w, protocol, ctx)
        n = arr["n"]
        if protocol is Protocol.NON_CS:
            arr["contender"] = np.zeros(n, bool)
        else:
            arr["contender"] = _kernels.mark_within(*arr["sense"], arr["table"])
            if protocol.announces:
                arr["contender"] |= _kernels.mark_within(*arr["ann"], arr["ann_table"])
        if protocol.announces:
            arr["suppressed"] = _kernels.mark_within(*arr["hear"], arr["ann_table"])
        else:
            arr["suppressed"] = np.zeros(n, bool)
        arr["deaf"] = w.deaf
        arr["active_u"] = w.active_u
        arr["dist_assoc"] = w.outcome.distance
        parts.append(arr)
    off = _offsets(parts)
    cat = lambda k: np.concatenate([p[k] for p in parts])  # noqa: E731
    signal = np.array([p["signal"] for p in parts])
    sinr = _kernels.sinr(
        off,
        cat("power"),
        cat("contender"),
        cat("active_u"),
        float(p_t),
        cat("deaf"),
        cat("suppressed"),
        cat("valid"),
        signal,
        sigma2,
    )
    if want_trace:
        for k, p in enumerate(parts):
            sup = p["valid"] & p["deaf"] & p["suppressed"] & ~p["contender"] & (p["active_u"] < p_t)
            trace.append(
                IterationOutcome(
                    float(sinr[k]), float(p["dist_assoc"]), int(p["contender"].sum()), int(sup.sum())
                )
            )
    return sinr, resampled, trace


def simulate_coverage(cfg: SimConfig, protocol, p_t: float, ctx: AnalysisContext) -> SimResult:
    protocol = Protocol.parse(protocol)
    if not 0.0 <= p_t <= 1.0:
        raise ValueError("p_t must lie in [0, 1]")
    want_trace = cfg.trace_path is not None
    jobs = [(protocol, ctx, cfg, p_t, a, b, want_trace) for a, b in _chunks(cfg.iterations_cov, cfg.chunk)]
    results = _map(_chunk_sinr, jobs, cfg.workers)
    sinr = np.concatenate([r[0] for r in results])
    resampled = sum(r[1] for r in results)
    if want_trace:
        with open(cfg.trace_path, "w") as fh:
            for r in results:
                for rec in r[2]:
                    fh.write(json.dumps(asdict(rec)) + "\n")
    z = np.asarray(cfg.z_grid_db)
    z_lin = 10.0 ** (z / 10.0)
    p_c = (sinr[:, None] > z_lin).mean(axis=0)
    stderr = np.sqrt(p_c * (1 - p_c) / sinr.size)
    return SimResult(protocol, z, p_c, stderr, float(p_t), 0.0, float("nan"), sinr.size, resampled, cfg.master_seed, sinr)


def run_simulation(cfg: SimConfig, protocol, ctx: AnalysisContext) -> SimResult:
    """Both steps: p_T from contender counts, then coverage at that p_T."""
    protocol = Protocol.parse(protocol)
    p_t, p_se, n_c = estimate_transmission_probability(cfg, protocol, ctx)
    res = simulate_coverage(cfg, protocol, p_t, ctx)
    res.p_t_stderr = p_se
    res.mean_contenders = n_c
    return res


# ------------------------------------------------- interference-only scenes


def sample_laplace(
    s_values,
    r: float,
    serving_link: LinkType,
    serving_set: int,
    p_t: float,
    radii: ExclusionRadii,
    ctx: AnalysisContext,
    n: int,
    region_radius: float,
    rng: np.random.Generator,
    chunk: int = 5000,
    model: str = "split",
):
    """Monte Carlo E[exp(-s I)] given association at distance r.

    Operator-1 sites are kept out of the association exclusion zones. With
    ``model="split"`` hidden and deaf interferers come from two independent site
    fields of the full density, each BS transmitting with probability p_t/2 outside
    its CS radius; this is the model the closed form integrates. With ``model="coin"``
    one field is drawn and each BS is hidden or deaf with probability 1/2 and transmits
    with probability p_t, as in the coverage simulation. Returns (mean, standard error) per s.
    """
    if model not in ("split", "coin"):
        raise ValueError("model must be 'split' or 'coin'")
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    dens = decompose_densities(ctx.model)
    a = ctx.antenna
    m_bs, s_bs = a.bs_gains
    m_ue, s_ue = a.ue_gains
    other_excl = float(exclusion_radius(r, serving_link, ctx.pl))
    serving_los = serving_link is LinkType.LOS

    def field_(deaf_class):
        d = sample_deployment(dens, region_radius, rng)
        dist = d.distances
        los = rng.random(len(d)) < los_probability(dist, ctx.pl)
        zone = np.where(los == serving_los, r, other_excl)
        keep = ~(((d.masks & 1) > 0) & (dist < zone))
        site, _ = expand_sites(d)
        site = site[keep[site]]
        t = dist[site]
        l = los[site]
        if serving_set & 2:
            t = np.append(t, r)
            l = np.append(l, serving_los)
        if deaf_class is None:
            deaf = rng.random(t.size) >= 0.5
        else:
            deaf = np.full(t.size, deaf_class)
        return t, l, deaf

    acc = np.zeros(s_values.size)
    acc2 = np.zeros(s_values.size)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        interf = np.zeros(m)
        for it in range(m):
            if model == "split":
                parts = [field_(False), field_(True)]
                p_on = 0.5 * p_t
            else:
                parts = [field_(None)]
                p_on = p_t
            t, l, deaf = (np.concatenate(c) for c in zip(*parts))
            k = t.size
            u = rng.random((3, k))
            cs_zone = np.where(
                l,
                np.where(deaf, radii.d_los, radii.h_los),
                np.where(deaf, radii.d_nlos, radii.h_nlos),
            )
            on = (u[0] < p_on) & (t >= cs_zone)
            g = np.where(u[1] < a.p_bs_main, m_bs, s_bs) * np.where(u[2] < a.p_ue_main, m_ue, s_ue)
            f = rng.exponential(1.0, k)
            c = np.where(l, ctx.pl.c_los, ctx.pl.c_nlos)
            al = np.where(l, ctx.pl.alpha_los, ctx.pl.alpha_nlos)
            interf[it] = np.sum(np.where(on, c * f * g * t ** (-al), 0.0))
        e = np.exp(-np.outer(interf, s_values))
        acc += e.sum(axis=0)
        acc2 += (e * e).sum(axis=0)
        done += m
    mean = acc / n
    var = np.maximum(acc2 / n - mean**2, 0.0)
    return mean, np.sqrt(var / n)
