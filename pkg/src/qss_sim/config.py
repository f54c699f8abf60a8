"""Run configuration: line-oriented ``key = value`` files with dotted sections.

Keys under ``source.`` and ``channel.`` set defaults for every pair link;
``sourceJ.`` / ``channelJ.`` (J = 1 .. n_players - 1) override them for
link J. Blank lines and ``#`` comments are ignored.

    mode = analytic
    n_players = 3
    n_pulses = 1e11
    source.mu = 0.022
    source2.mu = 0.021
    channel.loss_db = 7.6
    channel.p_x = 0.9
    channel.e_d = 0.01
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .detection import ChannelParams
from .keyrate import SecurityParams
from .qmath import BELL_KINDS
from .source import PAIR_STATISTICS, SourceParams, werner_weight_from_fidelity

MODES = ("analytic", "montecarlo", "analyze")
DEFAULT_PULSES = {"analytic": 10**11, "montecarlo": 10**7}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key, self.line, self.message = key, line, message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key:
            where.append(key)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


# ------------------------------------------------------------- value types

def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(s: str) -> int:
    v = float(s)
    if not v.is_integer():
        raise ValueError("must be an integer")
    return int(v)


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be true or false")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(p) for p in s.split(","))


def _choice(options) -> Callable[[str], str]:
    def conv(s: str) -> str:
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s

    return conv


def _paths(s: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in s.split(",") if p.strip())


SOURCE_FIELDS: dict[str, Callable] = {
    "mu": _float,
    "p": _float,
    "fidelity": _float,
    "rotation_theta": _float,
    "base_state": _choice(BELL_KINDS),
    "pair_statistics": _choice(PAIR_STATISTICS),
}
CHANNEL_FIELDS: dict[str, Callable] = {
    "loss_db": _float,
    "loss_db_dealer": _float,
    "loss_db_player": _float,
    "eta_d": _floats,
    "p_d": _floats,
    "p_x": _float,
    "rep_rate_hz": _float,
    "window_ns": _float,
    "e_d": _float,
    "e_d_x": _float,
    "e_d_z": _float,
}
SCALAR_FIELDS: dict[str, Callable] = {
    "mode": _choice(MODES),
    "n_players": _int,
    "n_pulses": _int,
    "seed": _int,
    "security.epsilon_c": _float,
    "security.epsilon_prime": _float,
    "security.epsilon_bar": _float,
    "security.f_e": _float,
    "security.q": _float,
    "estimation.z_sample_fraction": _float,
    "sweep.parameter": str,
    "sweep.start": _float,
    "sweep.stop": _float,
    "sweep.step": _float,
    "analyze.logs": _paths,
    "tomography.counts": str,
    "tomography.target": _choice(BELL_KINDS),
    "output.dir": str,
    "output.emit_events": _bool,
    "output.emit_transcript": _bool,
}
# shorthand accepted as a sweep parameter or override key
ALIASES = {
    "loss_db": "channel.loss_db",
    "p_x": "channel.p_x",
    "e_d": "channel.e_d",
    "eta_d": "channel.eta_d",
    "p_d": "channel.p_d",
    "mu": "source.mu",
    "p": "source.p",
    "fidelity": "source.fidelity",
    "rotation_theta": "source.rotation_theta",
}
# composite keys and the canonical fields they set
_CHANNEL_EXPANSION = {"loss_db": ("loss_db_dealer", "loss_db_player"), "e_d": ("e_d_x", "e_d_z")}
_SECTION_RE = re.compile(r"^(source|channel)(\d*)\.(\w+)$")


# ------------------------------------------------------------- data model

@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    step: float

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError("sweep step must be positive")
        if self.stop < self.start:
            raise ValueError("sweep range is empty (stop < start)")

    def values(self) -> list[float]:
        """Inclusive grid start, start + step, ... up to stop."""
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(n)]


@dataclass(frozen=True)
class RunConfig:
    mode: str = "analytic"
    n_players: int = 3
    n_pulses: int | None = None
    seed: int | None = None
    sources: tuple[SourceParams, ...] = ()
    channels: tuple[ChannelParams, ...] = ()
    security: SecurityParams = field(default_factory=SecurityParams)
    z_sample_fraction: float = 1.0
    sweep: SweepSpec | None = None
    logs: tuple[str, ...] = ()
    tomography_counts: str | None = None
    tomography_target: str = "psi_minus"
    out_dir: str = "out"
    emit_events: bool = False
    emit_transcript: bool = False

    @property
    def pulses(self) -> int | None:
        """Configured pulse count, or the mode default (None: infer from logs)."""
        if self.n_pulses is not None:
            return self.n_pulses
        return DEFAULT_PULSES.get(self.mode)


# ------------------------------------------------------------- parsing

Entries = dict[str, tuple[str, int | None]]


def _read_entries(text: str) -> Entries:
    entries: Entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=lineno)
        if key in entries:
            raise ConfigError(f"duplicate key (first set on line {entries[key][1]})", key, lineno)
        entries[key] = (value, lineno)
    return entries


def _convert(key: str, conv: Callable, value: str, line: int | None):
    try:
        return conv(value)
    except ValueError as exc:
        raise ConfigError(f"invalid value {value!r} ({exc})", key, line) from None


def _link_fields(entries: Entries, section: str, n_links: int, fields: Mapping[str, Callable]) -> list[dict]:
    """Per-link field values, specific ``sectionJ.`` keys layered over ``section.``."""
    links: list[dict] = [{} for _ in range(n_links)]
    specific = []
    for key, (value, line) in entries.items():
        m = _SECTION_RE.match(key)
        if not m or m.group(1) != section:
            continue
        idx, name = m.group(2), m.group(3)
        if name not in fields:
            raise ConfigError(f"unknown {section} field {name!r}", key, line)
        v = _convert(key, fields[name], value, line)
        if idx == "":
            for link in links:
                _put(link, section, name, (v, key, line))
        else:
            j = int(idx)
            if not 1 <= j <= n_links:
                raise ConfigError(f"{section} index must lie in 1..{n_links}", key, line)
            specific.append((j, name, v, key, line))
    for j, name, v, key, line in specific:
        _put(links[j - 1], section, name, (v, key, line))
    return links


def _put(link: dict, section: str, name: str, value: tuple) -> None:
    """Set a field; composite channel keys set their parts (later keys win)."""
    parts = _CHANNEL_EXPANSION.get(name, (name,)) if section == "channel" else (name,)
    for part in parts:
        link[part] = value


def _build(what: str, j: int, spec: dict, make: Callable):
    where = max(spec.values(), key=lambda t: t[2] or 0, default=(None, f"{what}{j}", None))
    try:
        return make({k: v[0] for k, v in spec.items()})
    except ValueError as exc:
        raise ConfigError(str(exc), where[1], where[2]) from None


def _make_source(f: dict) -> SourceParams:
    if "p" in f and "fidelity" in f:
        raise ValueError("set either p or fidelity, not both")
    p = werner_weight_from_fidelity(f["fidelity"]) if "fidelity" in f else f.get("p", 1.0)
    return SourceParams(
        mu=f.get("mu", 0.022),
        p=p,
        rotation_theta=f.get("rotation_theta", 0.0),
        base_state=f.get("base_state", "psi_minus"),
        pair_statistics=f.get("pair_statistics", "poisson"),
    )


def _make_channel(f: dict) -> ChannelParams:
    kw = dict(f)
    return ChannelParams(
        loss_db_dealer=kw.pop("loss_db_dealer", 7.6),
        loss_db_player=kw.pop("loss_db_player", 7.6),
        **kw,
    )


def parse_entries(entries: Entries) -> RunConfig:
    for key, (value, line) in entries.items():
        if key not in SCALAR_FIELDS and not _SECTION_RE.match(key):
            raise ConfigError("unknown key", key, line)
    scal = {
        k: _convert(k, SCALAR_FIELDS[k], v, line) for k, (v, line) in entries.items() if k in SCALAR_FIELDS
    }

    def line_of(k: str) -> int | None:
        return entries[k][1] if k in entries else None

    n_players = scal.get("n_players", 3)
    if n_players < 3:
        raise ConfigError("need at least 3 participants (a dealer and two players)", "n_players", line_of("n_players"))
    n_links = n_players - 1
    src_specs = _link_fields(entries, "source", n_links, SOURCE_FIELDS)
    ch_specs = _link_fields(entries, "channel", n_links, CHANNEL_FIELDS)
    sources = tuple(_build("source", j, s, _make_source) for j, s in enumerate(src_specs, start=1))
    channels = tuple(_build("channel", j, c, _make_channel) for j, c in enumerate(ch_specs, start=1))

    sec_kw = {k.split(".", 1)[1]: v for k, v in scal.items() if k.startswith("security.")}
    try:
        security = SecurityParams(**sec_kw)
    except ValueError as exc:
        key = next((k for k in entries if k.startswith("security.")), "security")
        raise ConfigError(str(exc), key, line_of(key)) from None

    sweep = None
    sweep_keys = [k for k in SCALAR_FIELDS if k.startswith("sweep.")]
    present = [k for k in sweep_keys if k in scal]
    if present:
        missing = [k for k in sweep_keys if k not in scal]
        if missing:
            raise ConfigError(f"incomplete sweep, missing {', '.join(missing)}", present[0], line_of(present[0]))
        param = scal["sweep.parameter"]
        try:
            _expand_key(param, n_links)
            sweep = SweepSpec(param, scal["sweep.start"], scal["sweep.stop"], scal["sweep.step"])
        except ValueError as exc:
            raise ConfigError(str(exc), "sweep.parameter", line_of("sweep.parameter")) from None

    if "n_pulses" in scal and scal["n_pulses"] <= 0:
        raise ConfigError("must be positive", "n_pulses", line_of("n_pulses"))
    frac = scal.get("estimation.z_sample_fraction", 1.0)
    if not 0.0 < frac <= 1.0:
        raise ConfigError("must lie in (0, 1]", "estimation.z_sample_fraction", line_of("estimation.z_sample_fraction"))

    return RunConfig(
        mode=scal.get("mode", "analytic"),
        n_players=n_players,
        n_pulses=scal.get("n_pulses"),
        seed=scal.get("seed"),
        sources=sources,
        channels=channels,
        security=security,
        z_sample_fraction=frac,
        sweep=sweep,
        logs=scal.get("analyze.logs", ()),
        tomography_counts=scal.get("tomography.counts"),
        tomography_target=scal.get("tomography.target", "psi_minus"),
        out_dir=scal.get("output.dir", "out"),
        emit_events=scal.get("output.emit_events", False),
        emit_transcript=scal.get("output.emit_transcript", False),
    )


def parse_config(text: str) -> RunConfig:
    return parse_entries(_read_entries(text))


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


# ------------------------------------------------------------- serialization

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _compact(values: tuple[float, ...]):
    return values[0] if len(set(values)) == 1 else values


def to_mapping(cfg: RunConfig) -> dict[str, str]:
    """Canonical fully-explicit key/value form (every link spelled out)."""
    out: dict[str, str] = {"mode": cfg.mode, "n_players": str(cfg.n_players)}
    if cfg.n_pulses is not None:
        out["n_pulses"] = str(cfg.n_pulses)
    if cfg.seed is not None:
        out["seed"] = str(cfg.seed)
    for j, s in enumerate(cfg.sources, start=1):
        for name in ("mu", "p", "rotation_theta", "base_state", "pair_statistics"):
            out[f"source{j}.{name}"] = _fmt(getattr(s, name))
    for j, c in enumerate(cfg.channels, start=1):
        for name in ("loss_db_dealer", "loss_db_player", "p_x", "rep_rate_hz", "window_ns", "e_d_x", "e_d_z"):
            out[f"channel{j}.{name}"] = _fmt(getattr(c, name))
        out[f"channel{j}.eta_d"] = _fmt(_compact(c.eta_d))
        out[f"channel{j}.p_d"] = _fmt(_compact(c.p_d))
    for name in ("epsilon_c", "epsilon_prime", "epsilon_bar", "f_e", "q"):
        out[f"security.{name}"] = _fmt(getattr(cfg.security, name))
    out["estimation.z_sample_fraction"] = _fmt(cfg.z_sample_fraction)
    if cfg.sweep is not None:
        out["sweep.parameter"] = cfg.sweep.parameter
        for name in ("start", "stop", "step"):
            out[f"sweep.{name}"] = _fmt(getattr(cfg.sweep, name))
    if cfg.logs:
        out["analyze.logs"] = ",".join(cfg.logs)
    if cfg.tomography_counts is not None:
        out["tomography.counts"] = cfg.tomography_counts
    out["tomography.target"] = cfg.tomography_target
    out["output.dir"] = cfg.out_dir
    out["output.emit_events"] = _fmt(cfg.emit_events)
    out["output.emit_transcript"] = _fmt(cfg.emit_transcript)
    return out


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in to_mapping(cfg).items())


def echo(cfg: RunConfig) -> str:
    """Single-line parameter echo (``;``-separated ``key=value``) for report rows.

    Output settings are left out so the echo depends only on the run itself.
    """
    return ";".join(f"{k}={v}" for k, v in to_mapping(cfg).items() if not k.startswith("output."))


# ------------------------------------------------------------- overrides

def _expand_key(key: str, n_links: int) -> list[str]:
    """Canonical keys touched by setting ``key`` (aliases and composites resolved)."""
    key = ALIASES.get(key, key)
    if key in SCALAR_FIELDS:
        return [key]
    m = _SECTION_RE.match(key)
    if not m:
        raise ValueError(f"unknown parameter {key!r}")
    section, idx, name = m.groups()
    fields = SOURCE_FIELDS if section == "source" else CHANNEL_FIELDS
    if name not in fields:
        raise ValueError(f"unknown {section} field {name!r}")
    links = range(1, n_links + 1) if idx == "" else [int(idx)]
    if idx and not 1 <= int(idx) <= n_links:
        raise ValueError(f"{section} index must lie in 1..{n_links}")
    names = _CHANNEL_EXPANSION.get(name, (name,)) if section == "channel" else (name,)
    if name == "fidelity":
        names = ("p",)
    return [f"{section}{j}.{n}" for j in links for n in names]


def with_overrides(cfg: RunConfig, overrides: Mapping[str, object]) -> RunConfig:
    """Apply ``key -> value`` overrides (aliases such as ``loss_db`` accepted)."""
    mapping = to_mapping(cfg)
    entries: Entries = {k: (v, None) for k, v in mapping.items()}
    for key, value in overrides.items():
        text = value if isinstance(value, str) else _fmt(value)
        canonical_key = ALIASES.get(key, key)
        try:
            targets = _expand_key(canonical_key, cfg.n_players - 1)
        except ValueError as exc:
            raise ConfigError(str(exc), key) from None
        if canonical_key.endswith(".fidelity"):
            f = _convert(key, _float, text, None)
            try:
                text = repr(werner_weight_from_fidelity(f))
            except ValueError as exc:
                raise ConfigError(str(exc), key) from None
        if canonical_key == "n_players":
            # new links inherit link 1 settings
            n_new = _convert(key, _int, text, None)
            for j in range(cfg.n_players, n_new):
                for k, v in mapping.items():
                    m = _SECTION_RE.match(k)
                    if m and m.group(2) == "1":
                        entries[f"{m.group(1)}{j}.{m.group(3)}"] = (v, None)
            for k in list(entries):
                m = _SECTION_RE.match(k)
                if m and m.group(2) and int(m.group(2)) >= n_new:
                    del entries[k]
        for t in targets:
            entries[t] = (text, None)
    return parse_entries(entries)


def sweep_configs(cfg: RunConfig) -> list[tuple[float, RunConfig]]:
    if cfg.sweep is None:
        raise ConfigError("no sweep.* keys configured", "sweep.parameter")
    return [(v, with_overrides(cfg, {cfg.sweep.parameter: v})) for v in cfg.sweep.values()]
