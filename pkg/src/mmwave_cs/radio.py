"""Link-level physics: blocking, path loss, Rayleigh fading, step-pattern antenna gains, noise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

OMNI_PENALTY_DB = 7.0


def db_to_lin(x_db):
    out = 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def lin_to_db(x):
    out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


class LinkType(Enum):
    LOS = "LoS"
    NLOS = "NLoS"

    @property
    def other(self) -> "LinkType":
        return LinkType.NLOS if self is LinkType.LOS else LinkType.LOS


@dataclass(frozen=True)
class PathLossParams:
    c_los: float = 1e-6
    c_nlos: float = 1e-7
    alpha_los: float = 2.0
    alpha_nlos: float = 4.0
    beta: float = 0.007

    def __post_init__(self):
        if not self.c_los > self.c_nlos > 0:
            raise ValueError("need c_los > c_nlos > 0")
        if not self.alpha_nlos >= self.alpha_los > 0:
            raise ValueError("need alpha_nlos >= alpha_los > 0")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    def coeffs(self, link: LinkType) -> tuple[float, float]:
        """(C, alpha) for the given link type."""
        if link is LinkType.LOS:
            return self.c_los, self.alpha_los
        return self.c_nlos, self.alpha_nlos


@dataclass(frozen=True)
class AntennaParams:
    n_bs: int = 64
    n_ue: int = 16
    theta_bs: float = math.pi / 18
    theta_ue: float = math.pi / 6
    omni_penalty_db: float = OMNI_PENALTY_DB

    def __post_init__(self):
        if self.n_bs < 1 or self.n_ue < 1:
            raise ValueError("element counts must be >= 1")
        for name in ("theta_bs", "theta_ue"):
            th = getattr(self, name)
            if not 0 < th <= 2 * math.pi:
                raise ValueError(f"{name} must lie in (0, 2*pi]")

    @property
    def bs_gains(self) -> tuple[float, float]:
        return array_gains(self.n_bs)

    @property
    def ue_gains(self) -> tuple[float, float]:
        return array_gains(self.n_ue)

    @property
    def p_bs_main(self) -> float:
        return self.theta_bs / (2 * math.pi)

    @property
    def p_ue_main(self) -> float:
        return self.theta_ue / (2 * math.pi)

    @property
    def omni_factor(self) -> float:
        return 10.0 ** (-self.omni_penalty_db / 10.0)


@dataclass(frozen=True)
class NoiseParams:
    n0_dbm_per_hz: float = -174.0
    bandwidth_hz: float = 600e6
    noise_figure_db: float = 10.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")


class GainDistribution:
    """Finite discrete distribution over linear gains.

    Atoms with equal gain are kept separate; ``sample`` and ``mean`` do not care.
    """

    def __init__(self, atoms):
        atoms = [(float(g), float(p)) for g, p in atoms]
        if not atoms:
            raise ValueError("empty gain distribution")
        gains = np.array([g for g, _ in atoms])
        probs = np.array([p for _, p in atoms])
        if np.any(gains <= 0):
            raise ValueError("gains must be positive")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        self.gains = gains
        self.probs = probs

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.gains.tolist(), self.probs.tolist()))

    def __len__(self):
        return len(self.gains)

    def __repr__(self):
        body = ", ".join(f"({g:.6g}, {p:.6g})" for g, p in self.atoms)
        return f"GainDistribution([{body}])"

    def expect(self, f) -> float:
        """E[f(G)] as a finite weighted sum."""
        return float(np.sum(self.probs * f(self.gains)))

    def mean(self) -> float:
        return float(np.dot(self.gains, self.probs))

    def sample(self, rng: np.random.Generator, size=None):
        idx = rng.choice(len(self.gains), size=size, p=self.probs)
        return self.gains[idx]

    def nonzero(self) -> "GainDistribution":
        """Copy with zero-probability atoms dropped."""
        keep = self.probs > 0
        return GainDistribution(zip(self.gains[keep], self.probs[keep]))


def los_probability(r, p: PathLossParams):
    """P(link of length r is LoS) = exp(-beta r)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("distance must be non-negative")
    out = np.exp(-p.beta * r_arr)
    return float(out) if out.ndim == 0 else out


def path_loss(r, link: LinkType, p: PathLossParams):
    """Linear path gain C_tau * r^-alpha_tau."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("path loss is singular at r <= 0")
    c, alpha = p.coeffs(link)
    out = c * r_arr ** (-alpha)
    return float(out) if out.ndim == 0 else out


def sample_fading(rng: np.random.Generator, size=None):
    """Rayleigh power fading: unit-mean exponential."""
    return rng.exponential(1.0, size=size)


def array_gains(n: int) -> tuple[float, float]:
    """(main-lobe, side-lobe) gain of an n-element ULA step pattern."""
    if n < 1:
        raise ValueError("n must be >= 1")
    main = 10.0 ** 0.8 * n
    side = 1.0 / math.sin(3.0 * math.pi / (2.0 * math.sqrt(n))) ** 2
    return main, side


def _lobe_pair(main_a, side_a, p_a, main_b, side_b, p_b) -> GainDistribution:
    return GainDistribution(
        [
            (main_a * main_b, p_a * p_b),
            (main_a * side_b, p_a * (1 - p_b)),
            (side_a * main_b, (1 - p_a) * p_b),
            (side_a * side_b, (1 - p_a) * (1 - p_b)),
        ]
    )


def interferer_gain_distribution(a: AntennaParams) -> GainDistribution:
    """Combined BS-to-UE gain of an interfering link under random misalignment."""
    m_bs, s_bs = a.bs_gains
    m_ue, s_ue = a.ue_gains
    return _lobe_pair(m_bs, s_bs, a.p_bs_main, m_ue, s_ue, a.p_ue_main)


def noise_floor_dbm(n: NoiseParams) -> float:
    return n.n0_dbm_per_hz + 10.0 * math.log10(n.bandwidth_hz) + n.noise_figure_db


def noise_floor(n: NoiseParams) -> float:
    """Receiver noise floor in mW (dB-domain sum of PSD, bandwidth and noise figure)."""
    return 10.0 ** (noise_floor_dbm(n) / 10.0)
