"""Parameter estimation: QBERs of postmatched rounds and phase-error bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .postmatch import RoundBatch


@dataclass(frozen=True)
class EstimationResult:
    """Counts and rates of one run.

    ``n_x`` is the X-round count (the key-sample size m) and ``n_z[j]`` the
    Z sample size k_j used against player j. Counts are floats for the
    analytic model and integers for simulated or recorded data.
    """

    n_x: float
    n_z: tuple[float, ...]
    e_x_total: float
    e_x_pair: tuple[float, ...]
    e_z_pair: tuple[float, ...]
    phi_bar: tuple[float, ...] = ()
    epsilon_bar: float | None = None
    x_errors: int | None = None
    z_errors: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        for name in ("e_x_pair", "e_z_pair", "phi_bar"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "n_z", tuple(self.n_z))
        if self.n_x < 0 or any(k < 0 for k in self.n_z):
            raise ValueError("sample counts must be non-negative")

    @property
    def n_players(self) -> int:
        return len(self.e_z_pair) + 1

    @property
    def defined(self) -> bool:
        """False when a basis had no rounds and its rates are NaN."""
        rates = (self.e_x_total, *self.e_x_pair, *self.e_z_pair)
        return not any(math.isnan(r) for r in rates)

    @property
    def max_phi_bar(self) -> float:
        return max(self.phi_bar) if self.phi_bar else float("nan")


def _rate(errors: int, total: int) -> float:
    return errors / total if total else float("nan")


def compute_qbers(
    x_rounds: RoundBatch,
    z_rounds: RoundBatch,
    z_sample_fraction: float = 1.0,
    rng: np.random.Generator | None = None,
) -> EstimationResult:
    """Multiparty X QBER, pairwise X QBERs (diagnostic) and per-player Z QBERs.

    With ``z_sample_fraction < 1`` a uniformly random subset of Z rounds is
    used for estimation (requires ``rng``).
    """
    if z_rounds.basis != "Z" or not z_rounds.aligned:
        raise ValueError("Z rounds must be flip-aligned before estimation")
    if not 0.0 < z_sample_fraction <= 1.0:
        raise ValueError("z_sample_fraction must lie in (0, 1]")
    if z_sample_fraction < 1.0:
        if rng is None:
            raise ValueError("sub-sampling Z rounds needs an rng")
        k = int(round(len(z_rounds) * z_sample_fraction))
        z_rounds = z_rounds.select(np.sort(rng.choice(len(z_rounds), size=k, replace=False)))

    m = len(x_rounds)
    parity = np.bitwise_xor.reduce(x_rounds.player_bits, axis=1) if m else np.zeros(0, np.uint8)
    x_err = int(np.count_nonzero(x_rounds.dealer_combined_bit != parity))
    x_pair_err = np.count_nonzero(x_rounds.dealer_bits != x_rounds.player_bits, axis=0)

    k = len(z_rounds)
    ref = z_rounds.dealer_combined_bit
    z_err = np.count_nonzero(z_rounds.player_bits != ref[:, None], axis=0)

    n_streams = x_rounds.n_streams
    return EstimationResult(
        n_x=m,
        n_z=(k,) * n_streams,
        e_x_total=_rate(x_err, m),
        e_x_pair=tuple(_rate(int(e), m) for e in x_pair_err),
        e_z_pair=tuple(_rate(int(e), k) for e in z_err),
        x_errors=x_err,
        z_errors=tuple(int(e) for e in z_err),
    )


def xor_error_composition(pairwise_rates: Sequence[float]) -> float:
    """Error rate of the XOR of independent bits with the given flip rates."""
    prod = 1.0
    for e in pairwise_rates:
        if not 0.0 <= e <= 0.5:
            raise ValueError(f"pairwise error rate {e} outside [0, 1/2]")
        prod *= 1.0 - 2.0 * e
    return (1.0 - prod) / 2.0


def gamma(lam: float, epsilon_bar: float, m: float, k: float) -> float:
    """Statistical-fluctuation term for random sampling without replacement.

    An observed rate of zero is replaced by one virtual error, 1/(m + k).
    A negative log term (tiny samples or large epsilon_bar) gives no penalty.
    """
    if m <= 0 or k <= 0:
        raise ValueError(f"sample sizes must be positive, got m={m}, k={k}")
    if not 0.0 < epsilon_bar < 1.0:
        raise ValueError("epsilon_bar must lie in (0, 1)")
    n = m + k
    floor = min(1.0 / n, 0.5)
    lam = min(max(lam, floor), 1.0 - floor)
    a = max(m, k)
    g = n / (m * k) * math.log(n / (2 * math.pi * m * k * lam * (1 - lam) * epsilon_bar**2))
    g = max(g, 0.0)
    num = (1 - 2 * lam) * a * g / n + math.sqrt(a * a * g * g / (n * n) + 4 * lam * (1 - lam) * g)
    return num / (2 + 2 * a * a * g / (n * n))


def phase_error_bound(e_z: float, m: float, k: float, epsilon_bar: float) -> float:
    return min(0.5, e_z + gamma(e_z, epsilon_bar, m, k))


def with_phase_bounds(result: EstimationResult, epsilon_bar: float) -> EstimationResult:
    """Attach per-player phase-error bounds; empty samples give the abort value 1/2."""
    phi = []
    for e_z, k in zip(result.e_z_pair, result.n_z):
        if result.n_x <= 0 or k <= 0 or math.isnan(e_z):
            phi.append(0.5)
        else:
            phi.append(phase_error_bound(e_z, result.n_x, k, epsilon_bar))
    return replace(result, phi_bar=tuple(phi), epsilon_bar=epsilon_bar)
