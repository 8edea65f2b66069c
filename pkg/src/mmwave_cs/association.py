"""Max-average-power association and the analytic association-distance density."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deployment import Deployment, SharingModel, decompose_densities, operator_view, PER_KM2
from .radio import LinkType, PathLossParams


@dataclass(frozen=True)
class AssociationOutcome:
    bs_index: int  # site index in the deployment
    link: LinkType
    distance: float
    operator_set: int  # bitmask of the serving site


def exclusion_radius(r, serving_link: LinkType, p: PathLossParams):
    """Radius inside which no subscriber-operator site of the *other* link type can lie.

    Serving LoS at r gives the NLoS radius D_N(r); serving NLoS gives the LoS radius D_L(r).
    """
    r = np.asarray(r, dtype=float)
    if serving_link is LinkType.LOS:
        out = (p.c_nlos / p.c_los) ** (1.0 / p.alpha_nlos) * r ** (p.alpha_los / p.alpha_nlos)
    else:
        out = (p.c_los / p.c_nlos) ** (1.0 / p.alpha_los) * r ** (p.alpha_nlos / p.alpha_los)
    return float(out) if out.ndim == 0 else out


def _los_mass(r, beta):
    # integral_0^r exp(-beta t) t dt, stable for small beta*r
    r = np.asarray(r, dtype=float)
    x = beta * r
    small = x < 1e-3
    xs = np.where(small, x, 0.0)
    series = r**2 * (0.5 - xs / 3.0 + xs**2 / 8.0 - xs**3 / 30.0)
    xl = np.where(small, 1.0, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (-np.expm1(-xl) - xl * np.exp(-xl)) / (beta**2 if beta > 0 else 1.0)
    return np.where(small, series, exact)


def void_exponent(r, link: LinkType, lambda_s: float, p: PathLossParams):
    """2*pi*lambda_s * integral_0^r p_tau(t) t dt (lambda_s in 1/m^2)."""
    r_arr = np.asarray(r, dtype=float)
    los = _los_mass(r_arr, p.beta)
    mass = los if link is LinkType.LOS else 0.5 * r_arr**2 - los
    out = 2.0 * math.pi * lambda_s * mass
    return float(out) if out.ndim == 0 else out


def association_pdf(r, tau: LinkType, s: int, model: SharingModel, p: PathLossParams):
    """Density of the serving distance for association with a tau-link site of set s.

    The subscriber is operator 1, so ``s`` must contain operator 1 (mask 1 or 3).
    """
    if not s & 1:
        return np.zeros_like(np.asarray(r, dtype=float)) if np.ndim(r) else 0.0
    dens = decompose_densities(model).per_m2()
    lam_s = dens[s]
    lam_1 = dens[1] + dens[3]
    r_arr = np.asarray(r, dtype=float)
    p_los = np.exp(-p.beta * r_arr)
    p_tau = p_los if tau is LinkType.LOS else 1.0 - p_los
    d_other = exclusion_radius(r_arr, tau, p)
    v = void_exponent(r_arr, tau, lam_1, p) + void_exponent(d_other, tau.other, lam_1, p)
    out = 2.0 * math.pi * lam_s * r_arr * p_tau * np.exp(-v)
    return float(out) if out.ndim == 0 else out


def association_r_max(model: SharingModel, p: PathLossParams, tol: float = 1e-12, floor: float = 0.0) -> float:
    """Distance beyond which both link-type densities carry less than ``tol`` of tail mass.

    Uses the bound f_R(r, tau) <= 2*pi*lambda_1 r p_tau(r) exp(-v_tau(r)) and doubles until the
    tail estimate r * bound(r) drops below tol.
    """
    lam_1 = (model.lambda_1) * PER_KM2
    if lam_1 <= 0:
        return max(floor, 1.0)

    def bound(r):
        out = 0.0
        for tau in LinkType:
            pl = math.exp(-p.beta * r)
            pt = pl if tau is LinkType.LOS else 1.0 - pl
            out = max(out, 2 * math.pi * lam_1 * r * pt * math.exp(-void_exponent(r, tau, lam_1, p)))
        return out

    r = 100.0
    # past 1/beta both bounds decay monotonically
    while (r * bound(r) > tol or r < 1.0 / max(p.beta, 1e-12)) and r < 1e7:
        r *= 1.25
    return max(r, floor)


def associate(d: Deployment, link_map, p: PathLossParams) -> AssociationOutcome:
    """Serve the typical UE from the operator-1 site with the largest average received power.

    ``link_map`` holds one LoS flag per site. Ties go to the lowest site index.
    """
    cand = operator_view(d, 1)
    if cand.size == 0:
        raise ValueError("no operator-1 site to associate with")
    link_map = np.asarray(link_map, dtype=bool)
    dist = d.distances[cand]
    los = link_map[cand]
    c = np.where(los, p.c_los, p.c_nlos)
    alpha = np.where(los, p.alpha_los, p.alpha_nlos)
    with np.errstate(divide="ignore"):
        power = c * dist ** (-alpha)
    k = int(np.argmax(power))  # first maximum -> lowest index among ties
    idx = int(cand[k])
    return AssociationOutcome(
        bs_index=idx,
        link=LinkType.LOS if los[k] else LinkType.NLOS,
        distance=float(dist[k]),
        operator_set=int(d.masks[idx]),
    )
