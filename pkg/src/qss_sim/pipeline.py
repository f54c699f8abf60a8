"""End-to-end runs: Monte-Carlo simulation and analysis of recorded event logs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .detection import ChannelParams, EventStream, simulate_session
from .estimation import compute_qbers
from .keyrate import KeyReport, SecurityParams, build_report
from .postmatch import RoundBatch, build_rounds, dataset_postmatch, streams_from_sessions
from .source import SourceParams

# spawn key reserved for the Z sub-sampling stream
_ESTIMATION_STREAM = 1 << 20


@dataclass(frozen=True, eq=False)
class RunResult:
    report: KeyReport
    x_rounds: RoundBatch
    z_rounds: RoundBatch
    sessions: tuple[tuple[EventStream, EventStream], ...] = ()


def _estimate(x, z, sec, n_pulses, rep_rate_hz, seed, z_sample_fraction) -> KeyReport:
    rng = None
    if z_sample_fraction < 1.0:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_ESTIMATION_STREAM,)))
    est = compute_qbers(x, z, z_sample_fraction, rng)
    return build_report(est, sec, n_pulses, rep_rate_hz)


def run_montecarlo(
    sources: Sequence[SourceParams],
    channels: Sequence[ChannelParams],
    sec: SecurityParams,
    n_pulses: int,
    seed: int,
    z_sample_fraction: float = 1.0,
    workers: int | None = None,
) -> RunResult:
    """Simulate one session per player (session j uses spawn key (j, block))."""
    if len(sources) != len(channels) or len(sources) < 2:
        raise ValueError("need one source and one channel for each of at least two players")
    n_players = len(sources) + 1
    sessions = tuple(
        simulate_session(src, ch, n_pulses, seed, session=j, stations=(f"A{j + 1}", f"B{j + 1}"), workers=workers)
        for j, (src, ch) in enumerate(zip(sources, channels))
    )
    streams = streams_from_sessions(sessions, [s.base_state for s in sources], channels[0].window_ns)
    x, z = build_rounds(streams, n_players)
    report = _estimate(x, z, sec, n_pulses, channels[0].rep_rate_hz, seed, z_sample_fraction)
    return RunResult(report, x, z, sessions)


def run_analysis(
    event_logs: Sequence[Mapping[str, EventStream]],
    n_players: int,
    sec: SecurityParams,
    n_pulses: int | None,
    rep_rate_hz: float,
    window_ns: float = 5.16,
    base_states: Sequence[str] | str = "psi_minus",
    seed: int = 0,
    z_sample_fraction: float = 1.0,
) -> RunResult:
    """Full pipeline on recorded sessions; ``n_pulses`` defaults to the largest pulse index + 1."""
    x, z = dataset_postmatch(event_logs, n_players, window_ns, base_states)
    if n_pulses is None:
        last = [int(s.pulse_index.max()) for log in event_logs[: n_players - 1] for s in log.values() if len(s)]
        n_pulses = max(last, default=0) + 1
    report = _estimate(x, z, sec, n_pulses, rep_rate_hz, seed, z_sample_fraction)
    return RunResult(report, x, z)
