"""Event-level detection chain for one (dealer module, player) session.

Each station has four detector channels indexed ``2*basis + bit`` with
basis 0 = X (rectilinear) and 1 = Z (diagonal). Channel-level parameters
are stored in that order, dealer first then player.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .qmath import DensityMatrix, outcome_distribution
from .source import SourceParams, effective_state, sample_pair_count

BASIS_NAMES = ("X", "Z")
MEASUREMENT_BASIS = {"X": "rectilinear", "Z": "diagonal"}
BLOCK_PULSES = 1 << 22
EVENT_LOG_HEADER = ("pulse_index", "timestamp_ns", "station", "basis", "bit")


def _per_channel(value, name: str) -> tuple[float, ...]:
    vals = np.atleast_1d(np.asarray(value, dtype=float))
    if vals.size == 1:
        vals = np.repeat(vals, 8)
    elif vals.size == 4:
        vals = np.tile(vals, 2)
    elif vals.size != 8:
        raise ValueError(f"{name} needs 1, 4 or 8 values, got {vals.size}")
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return tuple(float(v) for v in vals)


@dataclass(frozen=True)
class ChannelParams:
    loss_db_dealer: float
    loss_db_player: float
    eta_d: tuple[float, ...] | float = 0.83
    p_d: tuple[float, ...] | float = 1.3e-7
    p_x: float = 0.5
    rep_rate_hz: float = 96.7e6
    window_ns: float = 5.16
    e_d_x: float = 0.0
    e_d_z: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta_d", _per_channel(self.eta_d, "eta_d"))
        object.__setattr__(self, "p_d", _per_channel(self.p_d, "p_d"))
        if self.loss_db_dealer < 0 or self.loss_db_player < 0:
            raise ValueError("channel loss must be >= 0 dB")
        if not 0.0 <= self.p_x <= 1.0:
            raise ValueError(f"p_x must lie in [0, 1], got {self.p_x}")
        if self.window_ns <= 0:
            raise ValueError("coincidence window must be positive")
        if self.rep_rate_hz <= 0:
            raise ValueError("repetition rate must be positive")
        if not (0.0 <= self.e_d_x <= 0.5 and 0.0 <= self.e_d_z <= 0.5):
            raise ValueError("misalignment error rates must lie in [0, 1/2]")

    @property
    def period_ns(self) -> float:
        return 1e9 / self.rep_rate_hz

    def channel_transmission(self, station: str) -> np.ndarray:
        """Per-channel survival probability 10^(-loss/10) * eta."""
        if station == "dealer":
            return 10 ** (-self.loss_db_dealer / 10) * np.array(self.eta_d[:4])
        return 10 ** (-self.loss_db_player / 10) * np.array(self.eta_d[4:])

    def dark_probs(self, station: str) -> np.ndarray:
        return np.array(self.p_d[:4] if station == "dealer" else self.p_d[4:])

    def mean_transmission(self, station: str) -> float:
        return float(self.channel_transmission(station).mean())

    def station_dark_prob(self, station: str) -> float:
        """Summed dark-click probability of the four channels of a station."""
        return float(self.dark_probs(station).sum())


@dataclass(frozen=True)
class DetectionEvent:
    pulse_index: int
    timestamp_ns: float
    station: str
    basis: str
    bit: int


@dataclass(frozen=True)
class MatchedPair:
    pulse_index: int
    basis: str
    dealer_bit: int
    player_bit: int
    player_id: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Column store of one station's clicks, time-ordered."""

    station: str
    pulse_index: np.ndarray
    timestamp_ns: np.ndarray
    basis: np.ndarray
    bit: np.ndarray

    def __len__(self) -> int:
        return len(self.pulse_index)

    @classmethod
    def empty(cls, station: str) -> "EventStream":
        return cls(station, np.zeros(0, np.int64), np.zeros(0), np.zeros(0, np.uint8), np.zeros(0, np.uint8))

    @classmethod
    def from_events(cls, events: Sequence[DetectionEvent], station: str | None = None) -> "EventStream":
        if station is None:
            station = events[0].station if events else "?"
        return cls(
            station,
            np.array([e.pulse_index for e in events], dtype=np.int64),
            np.array([e.timestamp_ns for e in events], dtype=float),
            np.array([BASIS_NAMES.index(e.basis) for e in events], dtype=np.uint8),
            np.array([e.bit for e in events], dtype=np.uint8),
        )

    def events(self) -> list[DetectionEvent]:
        return [
            DetectionEvent(int(p), float(t), self.station, BASIS_NAMES[b], int(x))
            for p, t, b, x in zip(self.pulse_index, self.timestamp_ns, self.basis, self.bit)
        ]

    @classmethod
    def concatenate(cls, parts: Sequence["EventStream"], station: str) -> "EventStream":
        if not parts:
            return cls.empty(station)
        return cls(
            station,
            np.concatenate([p.pulse_index for p in parts]),
            np.concatenate([p.timestamp_ns for p in parts]),
            np.concatenate([p.basis for p in parts]),
            np.concatenate([p.bit for p in parts]),
        )


# ------------------------------------------------------------ simulation

def _joint_cumulative(state: DensityMatrix) -> np.ndarray:
    """cum[c, o] for basis combo c = 2*b_dealer + b_player, outcome o = 2*bit_d + bit_p."""
    cum = np.zeros((4, 4))
    for bd in range(2):
        for bp in range(2):
            dist = outcome_distribution(
                state, (MEASUREMENT_BASIS[BASIS_NAMES[bd]], MEASUREMENT_BASIS[BASIS_NAMES[bp]])
            )
            probs = [dist[(i >> 1, i & 1)] for i in range(4)]
            cum[2 * bd + bp] = np.cumsum(probs)
    cum[:, -1] = 1.0
    return cum


def _collapse_clicks(pulses: np.ndarray, channels: np.ndarray, rng: np.random.Generator):
    """Merge detections per pulse; more than one detection -> random bit.

    Every detected photon or dark count counts as a separate detection, even
    when two land in the same channel. When the detections span both bases
    the reported basis is random as well.
    """
    if pulses.size == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.uint8), np.zeros(0, np.uint8)
    order = np.lexsort((channels, pulses))
    p, ch = pulses[order], channels[order].astype(np.uint8)
    uniq, start, counts = np.unique(p, return_index=True, return_counts=True)
    basis = (ch[start] >> 1).astype(np.uint8)
    bit = (ch[start] & 1).astype(np.uint8)
    multi = np.flatnonzero(counts > 1)
    if multi.size:
        b = ch >> 1
        bmin = np.minimum.reduceat(b, start)[multi]
        bmax = np.maximum.reduceat(b, start)[multi]
        rand_basis = rng.integers(0, 2, multi.size, dtype=np.uint8)
        basis[multi] = np.where(bmin != bmax, rand_basis, bmin)
        bit[multi] = rng.integers(0, 2, multi.size, dtype=np.uint8)
    return uniq, basis, bit


def simulate_block(
    state: DensityMatrix,
    pair_counts: np.ndarray,
    params: ChannelParams,
    rng: np.random.Generator,
    pulse_offset: int = 0,
    stations: tuple[str, str] = ("A1", "B1"),
) -> tuple[EventStream, EventStream]:
    """Detection events for a block of pulses with the given pair numbers."""
    pair_counts = np.asarray(pair_counts)
    n_pulses = pair_counts.size
    nz = np.flatnonzero(pair_counts)
    pulse_of_pair = np.repeat(nz, pair_counts[nz]).astype(np.int64)
    n = pulse_of_pair.size

    basis_d = (rng.random(n) >= params.p_x).astype(np.uint8)
    basis_p = (rng.random(n) >= params.p_x).astype(np.uint8)
    cum = _joint_cumulative(state)[2 * basis_d + basis_p]
    outcome = (rng.random(n)[:, None] >= cum[:, :3]).sum(axis=1)
    # misalignment flips the player's projected bit
    e_d = np.array([params.e_d_x, params.e_d_z])[basis_p]
    flip = (rng.random(n) < e_d).astype(np.uint8)
    chan_d = (2 * basis_d + (outcome >> 1)).astype(np.uint8)
    chan_p = (2 * basis_p + ((outcome & 1) ^ flip)).astype(np.uint8)
    keep_d = rng.random(n) < params.channel_transmission("dealer")[chan_d]
    keep_p = rng.random(n) < params.channel_transmission("player")[chan_p]

    out = []
    for which, label, keep, chan in (
        ("dealer", stations[0], keep_d, chan_d),
        ("player", stations[1], keep_p, chan_p),
    ):
        pulses = [pulse_of_pair[keep]]
        chans = [chan[keep]]
        for c, pd in enumerate(params.dark_probs(which)):
            k = rng.binomial(n_pulses, pd) if pd > 0 else 0
            if k:
                pulses.append(np.sort(rng.choice(n_pulses, size=k, replace=False)).astype(np.int64))
                chans.append(np.full(k, c, dtype=np.uint8))
        pidx, basis, bit = _collapse_clicks(np.concatenate(pulses), np.concatenate(chans), rng)
        pidx = pidx + pulse_offset
        out.append(EventStream(label, pidx, pidx * params.period_ns, basis, bit))
    return out[0], out[1]


def simulate_pulse(
    state: DensityMatrix,
    pair_count: int,
    params: ChannelParams,
    rng: np.random.Generator,
    pulse_index: int = 0,
    stations: tuple[str, str] = ("A1", "B1"),
) -> list[DetectionEvent]:
    dealer, player = simulate_block(state, np.array([pair_count]), params, rng, pulse_index, stations)
    return dealer.events() + player.events()


def worker_count() -> int:
    env = os.environ.get("QSS_SIM_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, cap)


def block_rng(seed: int, session: int, block: int) -> np.random.Generator:
    """Independent stream for one pulse block: root seed, spawn key (session, block)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(session, block)))


def simulate_session(
    source: SourceParams,
    channel: ChannelParams,
    n_pulses: int,
    seed: int,
    session: int = 0,
    stations: tuple[str, str] = ("A1", "B1"),
    block_pulses: int = BLOCK_PULSES,
    workers: int | None = None,
) -> tuple[EventStream, EventStream]:
    """Simulate ``n_pulses`` in fixed-size blocks; output does not depend on ``workers``."""
    state = effective_state(source)
    starts = list(range(0, n_pulses, block_pulses))

    def run(b: int):
        start = starts[b]
        size = min(block_pulses, n_pulses - start)
        rng = block_rng(seed, session, b)
        counts = sample_pair_count(source, rng, size=size)
        return simulate_block(state, counts, channel, rng, start, stations)

    workers = workers or worker_count()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(starts))))
    else:
        parts = [run(b) for b in range(len(starts))]
    return (
        EventStream.concatenate([p[0] for p in parts], stations[0]),
        EventStream.concatenate([p[1] for p in parts], stations[1]),
    )


# -------------------------------------------------------------- matching

def greedy_pairs(t_dealer: np.ndarray, t_player: np.ndarray, window_ns: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy first-fit pairing in time order; each event is used at most once."""
    td = np.asarray(t_dealer, dtype=float)
    tp = np.asarray(t_player, dtype=float)
    if np.any(np.diff(td) < 0) or np.any(np.diff(tp) < 0):
        raise ValueError("event streams must be sorted by timestamp")
    tpl = tp.tolist()
    n_p = len(tpl)
    ii, jj = [], []
    j = 0
    for i, t in enumerate(td.tolist()):
        lo = t - window_ns
        while j < n_p and tpl[j] < lo:
            j += 1
        if j < n_p and tpl[j] <= t + window_ns:
            ii.append(i)
            jj.append(j)
            j += 1
    return np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Coincidences:
    """Same-basis coincidences of one session plus the discarded-basis tally."""

    player_id: int
    pulse_index: np.ndarray
    basis: np.ndarray
    dealer_bit: np.ndarray
    player_bit: np.ndarray
    n_coincidences: int
    n_basis_mismatch: int

    def __len__(self) -> int:
        return len(self.pulse_index)

    def pairs(self) -> list[MatchedPair]:
        return [
            MatchedPair(int(p), BASIS_NAMES[b], int(a), int(c), self.player_id)
            for p, b, a, c in zip(self.pulse_index, self.basis, self.dealer_bit, self.player_bit)
        ]


def match_streams(dealer: EventStream, player: EventStream, window_ns: float, player_id: int = 1) -> Coincidences:
    i, j = greedy_pairs(dealer.timestamp_ns, player.timestamp_ns, window_ns)
    same = dealer.basis[i] == player.basis[j]
    i, j = i[same], j[same]
    return Coincidences(
        player_id,
        dealer.pulse_index[i],
        dealer.basis[i],
        dealer.bit[i],
        player.bit[j],
        n_coincidences=int(same.size),
        n_basis_mismatch=int(same.size - same.sum()),
    )


def match_coincidences(
    dealer_events: Sequence[DetectionEvent],
    player_events: Sequence[DetectionEvent],
    window_ns: float,
    player_id: int = 1,
) -> list[MatchedPair]:
    d = EventStream.from_events(dealer_events, "A")
    p = EventStream.from_events(player_events, "B")
    return match_streams(d, p, window_ns, player_id).pairs()


# ------------------------------------------------------------- event logs

def write_event_log(path: str | Path, streams: Iterable[EventStream]) -> None:
    rows = []
    for s in streams:
        for p, t, b, x in zip(s.pulse_index.tolist(), s.timestamp_ns.tolist(), s.basis.tolist(), s.bit.tolist()):
            rows.append((t, s.station, p, BASIS_NAMES[b], x))
    rows.sort()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_LOG_HEADER)
        for t, station, p, b, x in rows:
            w.writerow((p, repr(t), station, b, x))


def read_event_log(path: str | Path) -> dict[str, EventStream]:
    """Parse an event log into per-station streams, each sorted by time."""
    cols: dict[str, list[list]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EVENT_LOG_HEADER:
            raise ValueError(f"{path}: expected header {','.join(EVENT_LOG_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                p, t, station, b, x = row
                rec = (int(p), float(t), BASIS_NAMES.index(b.strip()), int(x))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed event row {row!r}") from None
            if rec[3] not in (0, 1):
                raise ValueError(f"{path}:{lineno}: bit must be 0 or 1")
            cols.setdefault(station.strip(), []).append(rec)
    out = {}
    for station, recs in cols.items():
        recs.sort(key=lambda r: (r[1], r[0]))
        arr = list(zip(*recs))
        out[station] = EventStream(
            station,
            np.array(arr[0], dtype=np.int64),
            np.array(arr[1], dtype=float),
            np.array(arr[2], dtype=np.uint8),
            np.array(arr[3], dtype=np.uint8),
        )
    return out
