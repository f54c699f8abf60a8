"""Finite-key length, key rates and the closed-form performance model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .detection import ChannelParams, MEASUREMENT_BASIS
from .estimation import EstimationResult, with_phase_bounds, xor_error_composition
from .postmatch import FRAME_FLIPS
from .qmath import outcome_distribution
from .source import SourceParams, effective_state


@dataclass(frozen=True)
class SecurityParams:
    epsilon_c: float = 1e-10
    epsilon_prime: float = 1e-10
    epsilon_bar: float = 1e-10
    f_e: float = 1.16
    q: float = 1.0

    def __post_init__(self) -> None:
        for name in ("epsilon_c", "epsilon_prime", "epsilon_bar"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.f_e < 1.0:
            raise ValueError(f"f_e must be >= 1, got {self.f_e}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")

    @property
    def correction_bits(self) -> float:
        """log2(1 / (4 eps_c eps'^2))."""
        return -math.log2(4 * self.epsilon_c * self.epsilon_prime**2)


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def key_length_raw(n_x: float, e_x_total: float, phi_bar: Sequence[float], sec: SecurityParams) -> float:
    """Unfloored key length; may be negative."""
    worst = max(binary_entropy(p) for p in phi_bar)
    return n_x * (sec.q - worst - sec.f_e * binary_entropy(e_x_total)) - sec.correction_bits


def key_length(n_x: float, e_x_total: float, phi_bar: Sequence[float], sec: SecurityParams) -> int:
    return max(0, math.floor(key_length_raw(n_x, e_x_total, phi_bar, sec)))


def key_rates(l_bits: int, n_pulses: float, rep_rate_hz: float) -> tuple[float, float]:
    if n_pulses <= 0:
        raise ValueError("number of pulses must be positive")
    per_pulse = l_bits / n_pulses
    return per_pulse, per_pulse * rep_rate_hz


@dataclass(frozen=True)
class KeyReport:
    estimation: EstimationResult
    l_bits: int
    rate_per_pulse: float
    rate_bps: float
    leak_ec_bits: float
    n_pulses: float
    rep_rate_hz: float
    aborted: bool


def build_report(est: EstimationResult, sec: SecurityParams, n_pulses: float, rep_rate_hz: float) -> KeyReport:
    """Phase-error bounds, key length and rates for one set of estimates."""
    est = with_phase_bounds(est, sec.epsilon_bar)
    if est.n_x <= 0 or not est.defined:
        l_bits, leak = 0, 0.0
    else:
        leak = est.n_x * sec.f_e * binary_entropy(est.e_x_total)
        l_bits = key_length(est.n_x, est.e_x_total, est.phi_bar, sec)
    per_pulse, bps = key_rates(l_bits, n_pulses, rep_rate_hz)
    return KeyReport(est, l_bits, per_pulse, bps, leak, n_pulses, rep_rate_hz, aborted=l_bits == 0)


# --------------------------------------------------------- analytic model

def state_error_rates(source: SourceParams) -> tuple[float, float]:
    """Frame-corrected disagreement probability of the emitted state in X and Z."""
    rho = effective_state(source)
    flips = FRAME_FLIPS[source.base_state]
    out = []
    for basis, flip in zip(("X", "Z"), flips):
        mb = MEASUREMENT_BASIS[basis]
        dist = outcome_distribution(rho, (mb, mb))
        equal = dist[(0, 0)] + dist[(1, 1)]
        out.append(equal if flip else 1.0 - equal)
    return out[0], out[1]


def _compose(a: float, b: float) -> float:
    return a + b - 2 * a * b


@dataclass(frozen=True)
class PairYield:
    """Expected per-pulse coincidence yield and basis error rates of one pair link."""

    q: float
    e_x: float
    e_z: float


def pair_yield(source: SourceParams, channel: ChannelParams, e_d: tuple[float, float]) -> PairYield:
    """Coincidence probability per pulse (any basis) and the sifted error rates.

    Poisson emission thinned by independent photon loss: pairs with both
    photons detected, dealer-only and player-only photons are independent
    Poisson counts with means mu*tA*tB, mu*tA*(1-tB), mu*(1-tA)*tB. Only a
    lone, fully detected pair with no dark count is a signal event (state
    error composed with misalignment); every other coincidence errs with
    probability 1/2. To leading order the yield is
    mu*tA*tB + mu^2*tA*tB + 4pd*mu*(tA+tB) + 16pd^2.
    """
    t_a = channel.mean_transmission("dealer")
    t_b = channel.mean_transmission("player")
    # log P(no dark count) per station
    lq_a = float(np.log1p(-channel.dark_probs("dealer")).sum())
    lq_b = float(np.log1p(-channel.dark_probs("player")).sum())
    mu = source.mu
    if source.pair_statistics == "poisson":
        # Q = 1 - P(A silent) - P(B silent) + P(both silent), rearranged to avoid cancellation
        none_a, none_b = math.exp(lq_a - mu * t_a), math.exp(lq_b - mu * t_b)
        click_a, click_b = -math.expm1(lq_a - mu * t_a), -math.expm1(lq_b - mu * t_b)
        q = click_a * click_b + none_a * none_b * math.expm1(mu * t_a * t_b)
        signal = mu * t_a * t_b * math.exp(lq_a + lq_b - mu * (t_a + t_b - t_a * t_b))
    else:
        dark_a, dark_b = -math.expm1(lq_a), -math.expm1(lq_b)
        click_a = t_a + (1 - t_a) * dark_a
        click_b = t_b + (1 - t_b) * dark_b
        q = mu * click_a * click_b + (1 - mu) * dark_a * dark_b
        signal = mu * t_a * t_b * math.exp(lq_a + lq_b)
    if q <= 0:
        return PairYield(0.0, 0.5, 0.5)
    accidental = q - signal
    s_x, s_z = state_error_rates(source)
    e_x = (_compose(s_x, e_d[0]) * signal + 0.5 * accidental) / q
    e_z = (_compose(s_z, e_d[1]) * signal + 0.5 * accidental) / q
    return PairYield(q, e_x, e_z)


def _misalignment(channel: ChannelParams, e_d) -> tuple[float, float]:
    if e_d is None:
        return channel.e_d_x, channel.e_d_z
    if isinstance(e_d, (int, float)):
        return float(e_d), float(e_d)
    return float(e_d[0]), float(e_d[1])


def analytic_estimation(
    sources: Sequence[SourceParams],
    channels: Sequence[ChannelParams],
    e_d: float | tuple[float, float] | None = None,
    n_pulses: float = 1e11,
) -> EstimationResult:
    if len(sources) != len(channels) or not sources:
        raise ValueError("need one source and one channel per player")
    yields = [pair_yield(s, c, _misalignment(c, e_d)) for s, c in zip(sources, channels)]
    n_x = n_pulses * min(c.p_x**2 * y.q for c, y in zip(channels, yields))
    n_z = tuple(n_pulses * (1 - c.p_x) ** 2 * y.q for c, y in zip(channels, yields))
    e_x_pair = tuple(y.e_x for y in yields)
    return EstimationResult(
        n_x=n_x,
        n_z=n_z,
        e_x_total=xor_error_composition(e_x_pair),
        e_x_pair=e_x_pair,
        e_z_pair=tuple(y.e_z for y in yields),
    )


def analytic_model(
    sources: Sequence[SourceParams],
    channels: Sequence[ChannelParams],
    sec: SecurityParams,
    n_pulses: float,
    e_d: float | tuple[float, float] | None = None,
) -> KeyReport:
    """Expected key report from closed-form yields.

    ``e_d`` overrides the channels' misalignment (a scalar applies to both bases).
    """
    est = analytic_estimation(sources, channels, e_d, n_pulses)
    return build_report(est, sec, n_pulses, channels[0].rep_rate_hz)


def rotation_for_pair_error(
    target_e_x: float,
    source: SourceParams,
    channel: ChannelParams,
    e_d: float | tuple[float, float] | None = None,
) -> float:
    """Signal-photon rotation (radians) at which the pairwise X error reaches ``target_e_x``."""
    ed = _misalignment(channel, e_d)

    def f(theta: float) -> float:
        s = SourceParams(source.mu, source.p, theta, source.base_state, source.pair_statistics)
        return pair_yield(s, channel, ed).e_x - target_e_x

    lo, hi = 0.0, math.pi / 4
    if f(lo) > 0:
        raise ValueError(f"target {target_e_x} is below the unrotated error rate {f(lo) + target_e_x:.4g}")
    if f(hi) < 0:
        raise ValueError(f"target {target_e_x} is not reachable by rotation")
    return brentq(f, lo, hi, xtol=1e-14)
