"""Analytic coverage probability for the two-operator model.

Evaluation order: contenders -> transmission probability -> exclusion radii ->
Laplace transforms -> coverage integral. All interference terms are normalised by
the BS transmit power, so the noise term is sigma^2 = N_f / P_X.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .association import _los_mass, association_pdf, association_r_max, exclusion_radius
from .deployment import OPERATOR_SETS, SharingModel, decompose_densities, set_size
from .protocols import (
    Family,
    Protocol,
    SensingParams,
    announcement_radii,
    sensing_distance_law,
    sensing_gain_distribution,
)
from .quadrature import Batch, adaptive_gl
from .radio import (
    AntennaParams,
    LinkType,
    NoiseParams,
    PathLossParams,
    interferer_gain_distribution,
    noise_floor,
)

log = logging.getLogger(__name__)

_T_FLOOR = 1e-3  # inner integrals start no closer than this (m)
_R_FLOOR = 1e-2  # outer association integral starts here (m)
_CHUNK = 2048  # inner integrals evaluated per batch


@dataclass(frozen=True)
class QuadratureSettings:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    r_max_m: float | None = None  # None: chosen from the association tail

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class AnalysisContext:
    model: SharingModel = SharingModel()
    pl: PathLossParams = PathLossParams()
    antenna: AntennaParams = AntennaParams()
    sensing: SensingParams = field(default_factory=SensingParams.from_offsets)
    noise: NoiseParams = NoiseParams()
    protocol: Protocol = Protocol.NON_CS
    r_bar: float = 100.0
    quadrature: QuadratureSettings = QuadratureSettings()

    def __post_init__(self):
        if self.r_bar <= 0:
            raise ValueError("r_bar must be positive")
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))

    @property
    def sigma2(self) -> float:
        return noise_floor(self.noise) / self.sensing.p_x

    @property
    def serving_gain(self) -> float:
        return self.antenna.bs_gains[0] * self.antenna.ue_gains[0]

    def s_arg(self, r, z, link: LinkType):
        """Laplace argument r^alpha Z / (C M_BS M_UE)."""
        c, alpha = self.pl.coeffs(link)
        return np.asarray(r, dtype=float) ** alpha * z / (c * self.serving_gain)


@dataclass(frozen=True)
class ExclusionRadii:
    h_los: float = 0.0
    h_nlos: float = 0.0
    d_los: float = 0.0
    d_nlos: float = 0.0

    def __post_init__(self):
        if min(self.h_los, self.h_nlos, self.d_los, self.d_nlos) < 0:
            raise ValueError("exclusion radii must be non-negative")

    def hidden(self, link: LinkType) -> float:
        return self.h_los if link is LinkType.LOS else self.h_nlos

    def deaf(self, link: LinkType) -> float:
        return self.d_los if link is LinkType.LOS else self.d_nlos


@dataclass
class AnalysisResult:
    protocol: Protocol
    z_db: np.ndarray
    p_c: np.ndarray
    p_t: float
    n_contenders: float
    radii: ExclusionRadii
    quad_error: np.ndarray


# ---------------------------------------------------------------- u-function


def _one_minus_u(s, t, c, alpha, p_t, gains, probs):
    """(p_T/2) * sum_k w_k x_k/(1+x_k), x_k = s C G_k t^-alpha; avoids 1-u cancellation."""
    base = np.asarray(s, dtype=float) * c * np.asarray(t, dtype=float) ** (-alpha)
    x = np.minimum(base[..., None] * gains, 1e300)
    return 0.5 * p_t * np.sum(probs * (x / (1.0 + x)), axis=-1)


def u_function(s, t, link: LinkType, p_t: float, ctx: AnalysisContext):
    """E_K E_G E_F[exp(-s C K F G t^-alpha)] with K ~ Bernoulli(p_T/2)."""
    g = interferer_gain_distribution(ctx.antenna)
    c, alpha = ctx.pl.coeffs(link)
    out = 1.0 - _one_minus_u(s, t, c, alpha, p_t, g.gains, g.probs)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------- sensing geometry


def avg_exclusion_radii(ctx: AnalysisContext) -> ExclusionRadii:
    p = ctx.protocol
    if p is Protocol.NON_CS:
        return ExclusionRadii()
    if p.family is Family.CST:
        raise ValueError(f"no analytic model for {p.value}: carrier sensing at the transmitter is simulation-only")
    a = sensing_gain_distribution(p, ctx.antenna)
    s = ctx.sensing
    h = {}
    for link in LinkType:
        c, alpha = ctx.pl.coeffs(link)
        h[link] = a.expect(lambda g: (s.p_x * c * g / s.p_th) ** (1.0 / alpha))
    d = {LinkType.LOS: 0.0, LinkType.NLOS: 0.0}
    if p.announces:
        ann = announcement_radii(s, ctx.antenna, ctx.pl)
        for link in LinkType:
            d[link] = ann.mean(link, ctx.antenna.p_bs_main)
    return ExclusionRadii(h[LinkType.LOS], h[LinkType.NLOS], d[LinkType.LOS], d[LinkType.NLOS])


def _link_mass(lo, hi, link: LinkType, beta: float) -> float:
    """integral_lo^hi p_tau(t) t dt, zero when hi <= lo."""
    if hi <= lo:
        return 0.0
    los = float(_los_mass(hi, beta) - _los_mass(lo, beta))
    return los if link is LinkType.LOS else 0.5 * (hi * hi - lo * lo) - los


def avg_contenders(ctx: AnalysisContext) -> float:
    """Mean number of BSs the sensing node can hear (plus announcement contenders for dcsra).

    Every BS counts, so a shared site contributes twice.
    """
    p = ctx.protocol
    if p is Protocol.NON_CS:
        raise ValueError("non-cs has no contenders")
    law = sensing_distance_law(p, ctx.sensing, ctx.antenna, ctx.pl)
    dens = decompose_densities(ctx.model).per_m2()
    beta = ctx.pl.beta
    excl = ctx.r_bar if p.family is Family.CSR else 0.0
    width = law.cs_beamwidth
    total = 0.0
    for mask in OPERATOR_SETS:
        lam = dens[mask] * set_size(mask)
        if lam == 0:
            continue
        lo = excl if mask & 1 else 0.0
        for link in LinkType:
            main = law.mainlobe[link].expect(lambda R: _link_mass(lo, R, link, beta))
            side = law.sidelobe[link].expect(lambda R: _link_mass(lo, R, link, beta))
            total += lam * (width * main + (2 * math.pi - width) * side)
    if p.announces:
        ann = announcement_radii(ctx.sensing, ctx.antenna, ctx.pl)
        th = ctx.antenna.theta_bs
        lam_bs = sum(dens[m] * set_size(m) for m in OPERATOR_SETS)
        for link in LinkType:
            total += lam_bs * (
                th * _link_mass(0.0, ann.get(link, True), link, beta)
                + (2 * math.pi - th) * _link_mass(0.0, ann.get(link, False), link, beta)
            )
    return total


def solve_transmission_probability(n_c: float) -> float:
    """Root of p = (1-p)^n_c in [0, 1]."""
    if n_c < 0:
        raise ValueError("n_c must be non-negative")
    if n_c == 0:
        return 1.0
    return float(bisect(lambda p: p - (1.0 - p) ** n_c, 0.0, 1.0, xtol=1e-13, rtol=4 * np.finfo(float).eps))


def transmission_probability(ctx: AnalysisContext) -> tuple[float, float]:
    """(p_T, mean contenders); non-cs always transmits."""
    if ctx.protocol is Protocol.NON_CS:
        return 1.0, 0.0
    n = avg_contenders(ctx)
    return solve_transmission_probability(n), n


# ------------------------------------------------------- Laplace transforms


def _make_integrand(p_t, gains, probs, beta):
    def f(y, s, c, alpha, los, w1, w2):
        t = np.exp(y)
        q = _one_minus_u(s, t, c, alpha, p_t, gains, probs)
        # w1 (1-u) + w2 (1-u^2); 1-u^2 = q (2-q)
        val = q * (w1 + w2 * (2.0 - q))
        p_los = np.exp(-beta * t)
        p = np.where(los > 0.5, p_los, -np.expm1(-beta * t))
        return val * p * t * t

    return f


def _interference_integrals(s, lo, c, alpha, los, w1, w2, p_t, ctx, t_max=None):
    """Batch of integral_lo^inf [w1 (1-u) + w2 (1-u^2)] t p_tau(t) dt (flat arrays)."""
    g = interferer_gain_distribution(ctx.antenna)
    beta = ctx.pl.beta
    s, lo, c, alpha, los, w1, w2 = (np.asarray(v, dtype=float).reshape(-1) for v in (s, lo, c, alpha, los, w1, w2))
    n = s.size
    out = np.zeros(n)
    err = np.zeros(n)
    active = (w1 + w2 > 0) & (s > 0)
    if p_t <= 0 or not active.any():
        return out, err
    start = np.maximum(lo, _T_FLOOR)
    if t_max is not None:
        hi = np.full(n, float(t_max))
        tail = np.zeros(n)
    else:
        g_max = g.gains.max()
        linear_from = (s * c * g_max / 1e-10) ** (1.0 / alpha)
        decaying = (los > 0.5) & (beta > 0)
        hi = np.where(decaying, start + 60.0 / max(beta, 1e-300), np.maximum(np.maximum(2 * start, linear_from), 1e4))
        if np.any(~decaying & active & (alpha <= 2)):
            raise ValueError("interference integral diverges: needs alpha > 2 or a positive blocking rate")
        with np.errstate(divide="ignore", invalid="ignore"):
            # past hi: 1-u^k ~ k (p_T/2) s C E[G] t^-alpha and p_tau ~ 1
            tail = np.where(
                decaying,
                0.0,
                (w1 + 2 * w2) * 0.5 * p_t * s * c * g.mean() * hi ** (2 - alpha) / (alpha - 2),
            )
    hi = np.maximum(hi, start)
    # 0 < t < T_FLOOR: integrand ~ (1-u(0)) t p(t), with 1-u(0) ~ p_T/2 for every gain atom
    q0 = 0.5 * p_t
    near = (w1 * q0 + w2 * q0 * (2 - q0)) * np.where(los > 0.5, 1.0, 0.0) * np.maximum(_T_FLOOR**2 - lo**2, 0) / 2
    fn = _make_integrand(p_t, g.gains, g.probs, beta)
    q = ctx.quadrature
    idx = np.flatnonzero(active)
    for k in range(0, idx.size, _CHUNK):
        sl = idx[k : k + _CHUNK]
        integrand = Batch(fn, s=s[sl], c=c[sl], alpha=alpha[sl], los=los[sl], w1=w1[sl], w2=w2[sl])
        val, e = adaptive_gl(
            integrand, np.log(start[sl]), np.log(hi[sl]), rel_tol=q.rel_tol, abs_tol=1e-9, panels=8, max_panels=512
        )
        out[sl] = val + tail[sl] + near[sl]
        err[sl] = e
    return out, err


def _exponent_terms(s, r, serving: LinkType, radii: ExclusionRadii, ctx: AnalysisContext):
    """Parameters of the eight integrals whose weighted sum is -log L^{1} / (2 pi)."""
    dens = decompose_densities(ctx.model).per_m2()
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    s, r = np.broadcast_arrays(s, r)
    other_excl = exclusion_radius(r, serving, ctx.pl)
    cols = {k: [] for k in ("s", "lo", "c", "alpha", "los", "w1", "w2")}
    for link in LinkType:
        c, alpha = ctx.pl.coeffs(link)
        assoc = r if link is serving else np.asarray(other_excl)
        for zone in (radii.hidden(link), radii.deaf(link)):
            # operator-2-only sites: only the CS zone applies
            # sites hosting operator 1: association exclusion too; shared sites carry two BSs
            for lo, w1, w2 in ((np.full(r.shape, zone), dens[2], 0.0), (np.maximum(assoc, zone), dens[1], dens[3])):
                cols["s"].append(s)
                cols["lo"].append(lo)
                cols["c"].append(np.full(r.shape, c))
                cols["alpha"].append(np.full(r.shape, alpha))
                cols["los"].append(np.full(r.shape, 1.0 if link is LinkType.LOS else 0.0))
                cols["w1"].append(np.full(r.shape, w1))
                cols["w2"].append(np.full(r.shape, w2))
    return {k: np.stack(v, axis=0) for k, v in cols.items()}


def _log_laplace_single(s, r, serving, p_t, radii, ctx, t_max=None):
    terms = _exponent_terms(s, r, serving, radii, ctx)
    shape = terms["s"].shape
    vals, errs = _interference_integrals(*(terms[k] for k in ("s", "lo", "c", "alpha", "los", "w1", "w2")), p_t, ctx, t_max)
    vals = vals.reshape(shape).sum(axis=0)
    errs = errs.reshape(shape).sum(axis=0)
    return -2.0 * math.pi * vals, 2.0 * math.pi * errs


def colocated_factor(s, r, serving: LinkType, p_t, radii: ExclusionRadii, ctx: AnalysisContext):
    """u_{tau,h}(s, r) * u_{tau,d}(s, r) for the second BS on a shared serving site."""
    u = u_function(s, r, serving, p_t, ctx)
    r = np.asarray(r, dtype=float)
    uh = np.where(r < radii.hidden(serving), 1.0, u)
    ud = np.where(r < radii.deaf(serving), 1.0, u)
    out = uh * ud
    return float(out) if out.ndim == 0 else out


def laplace_interference(
    s, r, serving_link: LinkType, serving_set: int, p_t: float, radii: ExclusionRadii, ctx: AnalysisContext, t_max=None
):
    """Laplace transform of the normalised interference given association at distance r.

    ``t_max`` truncates the interferer field (no tail correction), for finite-scene checks.
    """
    if not serving_set & 1:
        raise ValueError("serving site must host operator 1")
    s_arr = np.asarray(s, dtype=float)
    r_arr = np.asarray(r, dtype=float)
    if np.any(s_arr < 0) or np.any(r_arr <= 0):
        raise ValueError("need s >= 0 and r > 0")
    lg, _ = _log_laplace_single(s_arr, r_arr, serving_link, p_t, radii, ctx, t_max)
    out = np.exp(lg)
    if set_size(serving_set) > 1:
        out = out * colocated_factor(s_arr, r_arr, serving_link, p_t, radii, ctx) ** (set_size(serving_set) - 1)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------------ coverage


def _r_breakpoints(serving: LinkType, radii: ExclusionRadii, ctx: AnalysisContext, r_max: float) -> np.ndarray:
    """Serving distances where a lower limit max(., .) switches branch."""
    other = serving.other
    pts = [radii.hidden(serving), radii.deaf(serving)]
    for z in (radii.hidden(other), radii.deaf(other)):
        if z > 0:
            pts.append(float(exclusion_radius(z, other, ctx.pl)))  # inverse of the other-type map
    pts = sorted(p for p in pts if _R_FLOOR < p < r_max)
    return np.array([_R_FLOOR, *pts, r_max])


def coverage_curve(z_db, ctx: AnalysisContext) -> AnalysisResult:
    """P_c(Z) on a grid of SINR thresholds in dB."""
    z_db = np.atleast_1d(np.asarray(z_db, dtype=float))
    radii = avg_exclusion_radii(ctx)
    p_t, n_c = transmission_probability(ctx)
    z_lin = 10.0 ** (z_db / 10.0)
    q = ctx.quadrature
    r_max = q.r_max_m or association_r_max(ctx.model, ctx.pl, floor=2000.0)
    sigma2 = ctx.sigma2
    total = np.zeros_like(z_lin)
    total_err = np.zeros_like(z_lin)

    for serving in LinkType:

        def integrand(y, z, _serving=serving):
            r = np.exp(y)
            s = ctx.s_arg(r, z, _serving)
            lg, _ = _log_laplace_single(s, r, _serving, p_t, radii, ctx)
            f1 = association_pdf(r, _serving, 1, ctx.model, ctx.pl)
            f12 = association_pdf(r, _serving, 3, ctx.model, ctx.pl)
            co = colocated_factor(s, r, _serving, p_t, radii, ctx)
            return np.exp(-sigma2 * s + lg) * (f1 + co * f12) * r

        edges = _r_breakpoints(serving, radii, ctx, r_max)
        for a, b in zip(edges[:-1], edges[1:]):
            val, err = adaptive_gl(
                Batch(integrand, z=z_lin),
                np.full(z_lin.shape, math.log(a)),
                np.full(z_lin.shape, math.log(b)),
                rel_tol=q.rel_tol,
                abs_tol=q.abs_tol,
                panels=4,
                max_panels=256,
            )
            total += val
            total_err += err
    p_c = np.clip(p_t * total, 0.0, p_t)
    return AnalysisResult(ctx.protocol, z_db, p_c, p_t, n_c, radii, p_t * total_err)


def coverage_probability(z: float, ctx: AnalysisContext) -> float:
    """P_c at one linear SINR threshold."""
    if z <= 0:
        raise ValueError("z must be positive")
    return float(coverage_curve([10.0 * math.log10(z)], ctx).p_c[0])
