"""Medium-access schemes: sensing gains, sensing-distance laws, announcement radii, interferer predicates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .radio import (
    AntennaParams,
    GainDistribution,
    LinkType,
    NoiseParams,
    PathLossParams,
    _lobe_pair,
    db_to_lin,
    interferer_gain_distribution,
    noise_floor_dbm,
)


class Family(Enum):
    NONE = "none"
    CST = "cst"  # sensing at the transmitting BS
    CSR = "csr"  # sensing at the receiving UE


class Protocol(Enum):
    NON_CS = "non-cs"
    OCST = "ocst"
    DCST = "dcst"
    OCSR = "ocsr"
    DCSR = "dcsr"
    DCSRA = "dcsra"

    @classmethod
    def parse(cls, s: "str | Protocol") -> "Protocol":
        if isinstance(s, Protocol):
            return s
        key = s.strip().lower().replace("_", "-")
        if key in ("noncs", "none"):
            key = "non-cs"
        try:
            return cls(key)
        except ValueError:
            names = "|".join(p.value for p in cls)
            raise ValueError(f"unknown protocol {s!r}; expected one of {names}") from None

    @property
    def family(self) -> Family:
        if self is Protocol.NON_CS:
            return Family.NONE
        if self in (Protocol.OCST, Protocol.DCST):
            return Family.CST
        return Family.CSR

    @property
    def announces(self) -> bool:
        return self is Protocol.DCSRA

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SensingParams:
    """Thresholds and transmit powers, all linear mW."""

    p_th: float
    p_th_a: float
    p_x: float
    p_u: float

    def __post_init__(self):
        for name in ("p_th", "p_th_a", "p_x", "p_u"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_offsets(
        cls,
        noise: NoiseParams = NoiseParams(),
        p_th_offset_db: float = 15.0,
        p_th_a_offset_db: float = 0.0,
        p_x_dbm: float = 36.0,
        p_u_dbm: float = 15.0,
    ) -> "SensingParams":
        """Thresholds given in dB above the receiver noise floor."""
        nf = noise_floor_dbm(noise)
        return cls(
            p_th=db_to_lin(nf + p_th_offset_db),
            p_th_a=db_to_lin(nf + p_th_a_offset_db),
            p_x=db_to_lin(p_x_dbm),
            p_u=db_to_lin(p_u_dbm),
        )


def _require_cs(p: Protocol):
    if p is Protocol.NON_CS:
        raise ValueError("non-cs performs no sensing")


def _sensor_lobes(p: Protocol, a: AntennaParams) -> tuple[float, float, float]:
    """(mainlobe gain, sidelobe gain, beamwidth) of the sensing antenna."""
    m_bs, s_bs = a.bs_gains
    m_ue, s_ue = a.ue_gains
    if p is Protocol.OCST:
        g = m_bs * a.omni_factor
        return g, g, 2 * math.pi
    if p is Protocol.DCST:
        return m_bs, s_bs, a.theta_bs
    if p is Protocol.OCSR:
        g = m_ue * a.omni_factor
        return g, g, 2 * math.pi
    return m_ue, s_ue, a.theta_ue


def sensing_gain_distribution(p: Protocol, a: AntennaParams) -> GainDistribution:
    """Combined contender-to-sensor antenna gain."""
    _require_cs(p)
    m_bs, s_bs = a.bs_gains
    if p in (Protocol.DCSR, Protocol.DCSRA):
        return interferer_gain_distribution(a)
    if p is Protocol.DCST:
        return _lobe_pair(m_bs, s_bs, a.p_bs_main, m_bs, s_bs, a.p_bs_main)
    g, _, _ = _sensor_lobes(p, a)
    return GainDistribution([(g * m_bs, a.p_bs_main), (g * s_bs, 1 - a.p_bs_main)])


@dataclass(frozen=True)
class RadiusLaw:
    """Discrete law of a sensing radius: one atom per contender lobe (main, side)."""

    radii: tuple[float, float]
    probs: tuple[float, float]

    def mean(self) -> float:
        return float(np.dot(self.radii, self.probs))

    def expect(self, f) -> float:
        return float(sum(p * f(r) for r, p in zip(self.radii, self.probs)))


@dataclass(frozen=True)
class SensingDistanceLaw:
    mainlobe: dict  # LinkType -> RadiusLaw
    sidelobe: dict
    cs_beamwidth: float

    @property
    def p_main(self) -> float:
        return self.cs_beamwidth / (2 * math.pi)

    def table(self) -> np.ndarray:
        """Radii indexed [los?0:1, sensor mainlobe?0:1, contender mainlobe?0:1]."""
        out = np.empty((2, 2, 2))
        for i, link in enumerate((LinkType.LOS, LinkType.NLOS)):
            for j, lobe in enumerate((self.mainlobe, self.sidelobe)):
                out[i, j, :] = lobe[link].radii
        return out

    def mean_radius(self, link: LinkType) -> float:
        """Sensing radius averaged over both lobes of sensor and contender."""
        pm = self.p_main
        return pm * self.mainlobe[link].mean() + (1 - pm) * self.sidelobe[link].mean()


def _radius(power, c, alpha, gain, threshold):
    return (power * c * gain / threshold) ** (1.0 / alpha)


def sensing_distance_law(p: Protocol, s: SensingParams, a: AntennaParams, pl: PathLossParams) -> SensingDistanceLaw:
    """Farthest-contender radius per link type, sensor lobe and contender lobe."""
    _require_cs(p)
    m_bs, s_bs = a.bs_gains
    g_main, g_side, width = _sensor_lobes(p, a)
    probs = (a.p_bs_main, 1 - a.p_bs_main)
    main, side = {}, {}
    for link in LinkType:
        c, alpha = pl.coeffs(link)
        main[link] = RadiusLaw(
            (_radius(s.p_x, c, alpha, g_main * m_bs, s.p_th), _radius(s.p_x, c, alpha, g_main * s_bs, s.p_th)), probs
        )
        side[link] = RadiusLaw(
            (_radius(s.p_x, c, alpha, g_side * m_bs, s.p_th), _radius(s.p_x, c, alpha, g_side * s_bs, s.p_th)), probs
        )
    return SensingDistanceLaw(main, side, width)


@dataclass(frozen=True)
class AnnouncementRadii:
    R_a_los: float
    r_a_los: float
    R_a_nlos: float
    r_a_nlos: float

    def get(self, link: LinkType, mainlobe: bool) -> float:
        if link is LinkType.LOS:
            return self.R_a_los if mainlobe else self.r_a_los
        return self.R_a_nlos if mainlobe else self.r_a_nlos

    def mean(self, link: LinkType, p_main: float) -> float:
        return p_main * self.get(link, True) + (1 - p_main) * self.get(link, False)


def announcement_radii(s: SensingParams, a: AntennaParams, pl: PathLossParams) -> AnnouncementRadii:
    """Hearing range of an omni UE announcement at a BS listening on its main or side lobe."""
    m_bs, s_bs = a.bs_gains
    m_ue, _ = a.ue_gains
    ue = m_ue * a.omni_factor
    out = {}
    for link, tag in ((LinkType.LOS, "los"), (LinkType.NLOS, "nlos")):
        c, alpha = pl.coeffs(link)
        out[f"R_a_{tag}"] = _radius(s.p_u, c, alpha, ue * m_bs, s.p_th_a)
        out[f"r_a_{tag}"] = _radius(s.p_u, c, alpha, ue * s_bs, s.p_th_a)
    return AnnouncementRadii(**out)


def _fails_sensing(sense_path_gain, interf_power_at_ue, s: SensingParams, nf) -> bool:
    return bool(s.p_x * sense_path_gain < s.p_th and interf_power_at_ue > nf)


def is_hidden_interferer(protocol_family: Family, sense_path_gain, interf_power_at_ue, s: SensingParams, nf) -> bool:
    """An interferer the sensing node missed even though it is audible at the UE.

    ``sense_path_gain`` is C*A*dist^-alpha on the sensing path (BS to BS for CST,
    BS to the typical UE for CSR).
    """
    if protocol_family is Family.NONE:
        return bool(interf_power_at_ue > nf)
    return _fails_sensing(sense_path_gain, interf_power_at_ue, s, nf)


def is_deaf_interferer(
    protocol_family: Family, sense_path_gain_to_other_sensor, interf_power_at_ue, s: SensingParams, nf
) -> bool:
    """A later transmitter whose own sensing could not hear the serving link.

    The gain runs from the typical UE's serving BS to the other transmission's sensing node.
    """
    if protocol_family is Family.NONE:
        return bool(interf_power_at_ue > nf)
    return _fails_sensing(sense_path_gain_to_other_sensor, interf_power_at_ue, s, nf)
