"""Postmatching: turn pairwise dealer/player coincidences into n-party GHZ rounds.

X rounds: the dealer keeps the XOR of its bits across the n-1 pair streams;
each player keeps their own bit. Z rounds: the dealer announces
v_j = a_1 XOR a_j and player j flips their bit when v_j = 1, after which
every player's bit equals a_1.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .detection import BASIS_NAMES, Coincidences, EventStream, match_streams, read_event_log

# dealer-side bit flips (flip X, flip Z) that map each Bell state onto phi_plus statistics
FRAME_FLIPS = {
    "psi_minus": (True, True),
    "psi_plus": (True, False),
    "phi_minus": (False, True),
    "phi_plus": (False, False),
}


def _bits(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint8)
    if a.size and a.max() > 1:
        raise ValueError("bits must be 0 or 1")
    return a


@dataclass(frozen=True, eq=False)
class SiftedStream:
    player_id: int
    basis: str
    dealer_bits: np.ndarray
    player_bits: np.ndarray

    def __post_init__(self) -> None:
        if self.basis not in BASIS_NAMES:
            raise ValueError(f"basis must be X or Z, got {self.basis!r}")
        d, p = _bits(self.dealer_bits), _bits(self.player_bits)
        if d.shape != p.shape or d.ndim != 1:
            raise ValueError("dealer and player bit strings must have equal length")
        object.__setattr__(self, "dealer_bits", d)
        object.__setattr__(self, "player_bits", p)

    def __len__(self) -> int:
        return self.dealer_bits.size

    def error_rate(self) -> float:
        return float(np.mean(self.dealer_bits != self.player_bits)) if len(self) else float("nan")


def sift(coincidences: Coincidences) -> dict[str, SiftedStream]:
    """Split same-basis coincidences into per-basis streams (pulse order preserved)."""
    out = {}
    for b, name in enumerate(BASIS_NAMES):
        m = coincidences.basis == b
        out[name] = SiftedStream(
            coincidences.player_id, name, coincidences.dealer_bit[m], coincidences.player_bit[m]
        )
    return out


def frame_correct(stream: SiftedStream, source_state: str) -> SiftedStream:
    """Dealer-side classical flips equivalent to the local unitaries taking the source to phi_plus."""
    try:
        flip_x, flip_z = FRAME_FLIPS[source_state]
    except KeyError:
        raise ValueError(f"unsupported Bell state {source_state!r}") from None
    flip = flip_x if stream.basis == "X" else flip_z
    if not flip:
        return stream
    return SiftedStream(stream.player_id, stream.basis, stream.dealer_bits ^ 1, stream.player_bits)


@dataclass(frozen=True)
class GhzRound:
    basis: str
    dealer_combined_bit: int
    player_bits: tuple[int, ...]
    dealer_bits: tuple[int, ...] = ()
    announcements: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class RoundBatch:
    """Postmatched rounds of one basis; arrays are (rounds, n_players - 1).

    For Z batches ``player_bits`` holds the raw b_j until :func:`apply_flip`
    has been applied (``aligned`` is then True).
    """

    basis: str
    dealer_bits: np.ndarray
    player_bits: np.ndarray
    announcements: np.ndarray
    aligned: bool = True

    def __len__(self) -> int:
        return self.dealer_bits.shape[0]

    @property
    def n_streams(self) -> int:
        return self.dealer_bits.shape[1]

    @property
    def dealer_combined_bit(self) -> np.ndarray:
        if self.basis == "X":
            return np.bitwise_xor.reduce(self.dealer_bits, axis=1) if self.n_streams else np.zeros(len(self), np.uint8)
        return self.dealer_bits[:, 0]

    def __iter__(self):
        combined = self.dealer_combined_bit
        for i in range(len(self)):
            yield GhzRound(
                self.basis,
                int(combined[i]),
                tuple(int(b) for b in self.player_bits[i]),
                tuple(int(b) for b in self.dealer_bits[i]),
                tuple(int(b) for b in self.announcements[i]) if self.basis == "Z" else (),
            )

    def rounds(self) -> list[GhzRound]:
        return list(self)

    @classmethod
    def from_rounds(cls, rounds: Sequence[GhzRound], basis: str, n_streams: int | None = None) -> "RoundBatch":
        """Rebuild a batch from round objects that carry per-stream dealer bits.

        ``n_streams`` fixes the width when ``rounds`` may be empty.
        """
        rows = [r for r in rounds if r.basis == basis]
        width = len(rows[0].player_bits) if rows else (n_streams or 0)
        dealer = np.array([r.dealer_bits for r in rows], dtype=np.uint8).reshape(len(rows), width)
        player = np.array([r.player_bits for r in rows], dtype=np.uint8).reshape(len(rows), width)
        if basis == "Z":
            ann = np.array([r.announcements for r in rows], dtype=np.uint8).reshape(len(rows), width)
        else:
            ann = np.zeros_like(dealer)
        return cls(basis, dealer, player, ann)

    def select(self, idx: np.ndarray) -> "RoundBatch":
        return RoundBatch(self.basis, self.dealer_bits[idx], self.player_bits[idx], self.announcements[idx], self.aligned)


def postmatch_rounds(streams: Sequence[SiftedStream], n_players: int) -> tuple[RoundBatch, RoundBatch]:
    """Group the i-th sifted entry of every player into round i, per basis.

    Returns ``(x_rounds, z_rounds)``; the Z batch carries announcements but is
    not yet flipped.
    """
    if n_players < 3:
        raise ValueError("secret sharing needs at least 3 participants")
    by_key: dict[tuple[int, str], SiftedStream] = {}
    for s in streams:
        by_key[(s.player_id, s.basis)] = s
    players = range(1, n_players)
    missing = [(j, b) for j in players for b in BASIS_NAMES if (j, b) not in by_key]
    if missing:
        raise ValueError(f"missing sifted streams for (player, basis): {missing}")

    batches = []
    for basis in BASIS_NAMES:
        ss = [by_key[(j, basis)] for j in players]
        n = min(len(s) for s in ss)
        dealer = np.stack([s.dealer_bits[:n] for s in ss], axis=1).astype(np.uint8)
        player = np.stack([s.player_bits[:n] for s in ss], axis=1).astype(np.uint8)
        if basis == "Z":
            ann = dealer[:, :1] ^ dealer
            batches.append(RoundBatch(basis, dealer, player, ann, aligned=False))
        else:
            batches.append(RoundBatch(basis, dealer, player, np.zeros_like(dealer)))
    return batches[0], batches[1]


def apply_flip(z_rounds: RoundBatch, announcements: np.ndarray | None = None) -> RoundBatch:
    """b~_j = b_j XOR v_j."""
    if z_rounds.basis != "Z":
        raise ValueError("flips apply to Z rounds only")
    if z_rounds.aligned:
        raise ValueError("Z rounds are already aligned")
    ann = z_rounds.announcements if announcements is None else _bits(announcements)
    if ann.shape != z_rounds.player_bits.shape:
        raise ValueError(
            f"announcement shape {ann.shape} does not match rounds {z_rounds.player_bits.shape}"
        )
    return RoundBatch("Z", z_rounds.dealer_bits, z_rounds.player_bits ^ ann, ann, aligned=True)


def build_rounds(streams: Sequence[SiftedStream], n_players: int) -> tuple[RoundBatch, RoundBatch]:
    x, z = postmatch_rounds(streams, n_players)
    return x, apply_flip(z)


def streams_from_sessions(
    sessions: Sequence[tuple[EventStream, EventStream]],
    base_states: Sequence[str],
    window_ns: float,
) -> list[SiftedStream]:
    """Coincidence-match, sift and frame-correct one (dealer, player) session per player."""
    out = []
    for j, ((dealer, player), state) in enumerate(zip(sessions, base_states), start=1):
        for s in sift(match_streams(dealer, player, window_ns, player_id=j)).values():
            out.append(frame_correct(s, state))
    return out


def _log_fingerprint(log: Mapping[str, EventStream]) -> str:
    h = hashlib.sha256()
    for station in sorted(log):
        s = log[station]
        for a in (s.pulse_index, s.timestamp_ns, s.basis, s.bit):
            h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def split_session(log: Mapping[str, EventStream]) -> tuple[EventStream, EventStream]:
    """Dealer (station A*) and player (station B*) streams of one session log."""
    dealers = [s for k, s in log.items() if k.startswith("A")]
    players = [s for k, s in log.items() if k.startswith("B")]
    if len(dealers) > 1 or len(players) > 1:
        raise ValueError(f"session log must hold one dealer and one player station, got {sorted(log)}")
    dealer = dealers[0] if dealers else EventStream.empty("A")
    player = players[0] if players else EventStream.empty("B")
    return dealer, player


def dataset_postmatch(
    event_logs: Sequence[Mapping[str, EventStream] | str | Path],
    n_players: int,
    window_ns: float = 5.16,
    base_states: Sequence[str] | str = "psi_minus",
) -> tuple[RoundBatch, RoundBatch]:
    """Postmatch independently recorded sessions, the j-th log supplying player j.

    Logs beyond the first ``n_players - 1`` are ignored. The same session may
    not appear twice.
    """
    need = n_players - 1
    if len(event_logs) < need:
        raise ValueError(f"{n_players} participants need {need} session logs, got {len(event_logs)}")
    logs = [read_event_log(x) if isinstance(x, (str, Path)) else x for x in event_logs[:need]]
    prints = [_log_fingerprint(l) for l in logs]
    if len(set(prints)) != len(prints):
        raise ValueError("session logs must be distinct; the same log was supplied twice")
    if isinstance(base_states, str):
        base_states = [base_states] * need
    sessions = [split_session(l) for l in logs]
    return build_rounds(streams_from_sessions(sessions, base_states, window_ns), n_players)


TRANSCRIPT_HEADER = ("round_index", "basis", "dealer_bit", "player_bits", "announcements")


def _bitstring(row: Iterable[int]) -> str:
    return "".join(str(int(b)) for b in row)


def write_transcript(path: str | Path, batches: Sequence[RoundBatch]) -> None:
    """One row per round; round_index counts within each basis."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSCRIPT_HEADER)
        for batch in batches:
            combined = batch.dealer_combined_bit
            for i in range(len(batch)):
                ann = _bitstring(batch.announcements[i]) if batch.basis == "Z" else ""
                w.writerow((i, batch.basis, int(combined[i]), _bitstring(batch.player_bits[i]), ann))


def read_transcript(path: str | Path) -> list[GhzRound]:
    rounds = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRANSCRIPT_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRANSCRIPT_HEADER)}")
        for row in reader:
            rounds.append(
                GhzRound(
                    row["basis"],
                    int(row["dealer_bit"]),
                    tuple(int(c) for c in row["player_bits"]),
                    announcements=tuple(int(c) for c in row["announcements"]),
                )
            )
    return rounds
