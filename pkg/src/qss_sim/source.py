"""Polarization-entangled pair source: emitted state and pair-number statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qmath import BELL_KINDS, DensityMatrix, I2, rotation, werner_state

PAIR_STATISTICS = ("poisson", "single")


@dataclass(frozen=True)
class SourceParams:
    """One pair source.

    ``pair_statistics="single"`` emits at most one pair per pulse (Bernoulli
    with probability ``mu``); useful for multi-pair-free reference runs.
    """

    mu: float
    p: float = 1.0
    rotation_theta: float = 0.0
    base_state: str = "psi_minus"
    pair_statistics: str = "poisson"

    def __post_init__(self) -> None:
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Werner weight p must lie in [0, 1], got {self.p}")
        if self.base_state not in BELL_KINDS:
            raise ValueError(f"unknown base_state {self.base_state!r}")
        if self.pair_statistics not in PAIR_STATISTICS:
            raise ValueError(f"pair_statistics must be one of {PAIR_STATISTICS}")
        if self.pair_statistics == "single" and self.mu > 1:
            raise ValueError("single-pair statistics need mu <= 1")

    @classmethod
    def from_fidelity(cls, mu: float, fidelity: float, **kw) -> "SourceParams":
        return cls(mu=mu, p=werner_weight_from_fidelity(fidelity), **kw)


def werner_weight_from_fidelity(fidelity: float) -> float:
    """Invert F = (3p + 1)/4 for a Werner state."""
    if not 0.25 <= fidelity <= 1.0:
        raise ValueError(f"Werner fidelity must lie in [1/4, 1], got {fidelity}")
    return (4 * fidelity - 1) / 3


def effective_state(params: SourceParams) -> DensityMatrix:
    """Werner-mixed Bell state with the signal photon rotated by ``rotation_theta``."""
    rho = werner_state(params.p, params.base_state)
    if params.rotation_theta == 0.0:
        return rho
    return rho.conjugate_by(np.kron(rotation(params.rotation_theta), I2))


def sample_pair_count(params: SourceParams, rng: np.random.Generator, size=None):
    if params.pair_statistics == "single":
        draw = rng.random(size) < params.mu
        return draw.astype(np.int64) if size is not None else int(draw)
    out = rng.poisson(params.mu, size)
    return out if size is not None else int(out)


def multi_pair_ratio(mu: float) -> float:
    """P(k >= 2) / P(k = 1) for Poisson pair statistics."""
    if mu <= 0:
        return 0.0
    p1 = mu * math.exp(-mu)
    return -math.expm1(-mu) / p1 - 1.0
