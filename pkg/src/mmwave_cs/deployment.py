"""Shared-site Poisson deployments for two operators.

Sites carry an operator-set bitmask: bit 0 for operator 1, bit 1 for operator 2.
So mask 1 is {1}, mask 2 is {2} and mask 3 is a site shared by both.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OPERATOR_SETS = (1, 2, 3)
PER_KM2 = 1e-6  # 1/km^2 -> 1/m^2


def operator_set(*members: int) -> int:
    """Bitmask for a non-empty set of operator ids."""
    if not members:
        raise ValueError("operator set must be non-empty")
    mask = 0
    for m in members:
        if m not in (1, 2):
            raise ValueError(f"operator id {m} not supported (M=2)")
        mask |= 1 << (m - 1)
    return mask


def members(mask: int) -> tuple[int, ...]:
    return tuple(m for m in (1, 2) if mask & (1 << (m - 1)))


def set_size(mask: int) -> int:
    return bin(int(mask)).count("1")


@dataclass(frozen=True)
class SharingModel:
    """Per-operator BS densities (1/km^2) and the site overlap coefficient."""

    lambda_1: float = 30.0
    lambda_2: float = 30.0
    rho: float = 0.5

    def __post_init__(self):
        if self.lambda_1 < 0 or self.lambda_2 < 0:
            raise ValueError("densities must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    @property
    def site_density(self) -> float:
        """Total site density lambda (1/km^2), from lambda = lambda_1 + lambda_2 - rho*lambda."""
        return (self.lambda_1 + self.lambda_2) / (1.0 + self.rho)

    @property
    def a(self) -> float:
        lam = self.site_density
        return self.lambda_1 / lam if lam > 0 else 0.0

    @property
    def b(self) -> float:
        # Defined alongside a for the two-operator model; no formula here uses it.
        lam = self.site_density
        return 1.0 - self.lambda_2 / lam if lam > 0 else 0.0


@dataclass(frozen=True)
class Densities:
    """Site densities per operator set, in 1/km^2."""

    excl_1: float
    excl_2: float
    shared: float

    def by_mask(self) -> dict[int, float]:
        return {1: self.excl_1, 2: self.excl_2, 3: self.shared}

    def per_m2(self) -> dict[int, float]:
        return {k: v * PER_KM2 for k, v in self.by_mask().items()}

    @property
    def total(self) -> float:
        return self.excl_1 + self.excl_2 + self.shared


def decompose_densities(s: SharingModel) -> Densities:
    lam = s.site_density
    shared = s.rho * lam
    e1 = s.lambda_1 - shared
    e2 = s.lambda_2 - shared
    tol = 1e-12 * max(1.0, lam)
    if e1 < -tol or e2 < -tol:
        raise ValueError(
            f"overlap rho={s.rho} implies negative exclusive density ({e1:.4g}, {e2:.4g})"
        )
    return Densities(max(e1, 0.0), max(e2, 0.0), shared)


@dataclass
class Deployment:
    positions: np.ndarray  # (n, 2) metres, typical UE at the origin
    masks: np.ndarray  # (n,) operator-set bitmasks
    region_radius: float
    seed: int | None = None
    resampled: int = field(default=0)

    def __len__(self):
        return len(self.masks)

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.positions[:, 0], self.positions[:, 1])

    @property
    def sites(self) -> list[tuple[tuple[float, float], tuple[int, ...]]]:
        return [((float(x), float(y)), members(int(m))) for (x, y), m in zip(self.positions, self.masks)]

    def dump_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for (x, y), m in zip(self.positions, self.masks):
                fh.write(json.dumps({"x_m": float(x), "y_m": float(y), "operators": list(members(int(m)))}) + "\n")

    @classmethod
    def load_jsonl(cls, path, region_radius: float | None = None) -> "Deployment":
        pos, masks = [], []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            pos.append((rec["x_m"], rec["y_m"]))
            masks.append(operator_set(*rec["operators"]))
        positions = np.array(pos, dtype=float).reshape(-1, 2)
        if region_radius is None:
            region_radius = float(np.hypot(*positions.T).max()) if len(positions) else 0.0
        return cls(positions, np.array(masks, dtype=np.int64), region_radius)


def _uniform_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    rad = radius * np.sqrt(rng.random(n))
    ang = 2.0 * math.pi * rng.random(n)
    return np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))


def sample_deployment(densities: Densities, region_radius: float, rng: np.random.Generator) -> Deployment:
    """One realization of the three independent site processes on a disk around the origin."""
    if region_radius <= 0:
        raise ValueError("region_radius must be positive")
    area = math.pi * region_radius**2
    pos, masks = [], []
    for mask, lam in densities.per_m2().items():
        n = rng.poisson(lam * area)
        pos.append(_uniform_disk(rng, n, region_radius))
        masks.append(np.full(n, mask, dtype=np.int64))
    return Deployment(np.concatenate(pos), np.concatenate(masks), region_radius)


def operator_view(d: Deployment, m: int) -> np.ndarray:
    """Indices of the sites hosting a BS of operator m."""
    if m not in (1, 2):
        raise ValueError(f"invalid operator id {m}")
    return np.flatnonzero(d.masks & (1 << (m - 1)))
