import pytest
from hypothesis import given, settings, strategies as st

from qss_sim.config import (
    ConfigError,
    SweepSpec,
    parse_config,
    serialize,
    sweep_configs,
    with_overrides,
)

BASE = """\
# operating point
mode = analytic
n_players = 3
n_pulses = 1e11
source.mu = 0.023
source2.mu = 0.021
channel.loss_db = 7.6
channel.p_x = 0.9
channel.e_d = 0.01
"""


def test_section_defaults_and_overrides():
    cfg = parse_config(BASE)
    assert [s.mu for s in cfg.sources] == [0.023, 0.021]
    assert all(c.loss_db_dealer == c.loss_db_player == 7.6 for c in cfg.channels)
    assert cfg.channels[1].e_d_x == cfg.channels[1].e_d_z == 0.01
    assert cfg.n_pulses == 10**11 and cfg.pulses == 10**11


def test_defaults_by_mode():
    assert parse_config("").pulses == 10**11
    assert parse_config("mode = montecarlo").pulses == 10**7
    assert parse_config("mode = analyze").pulses is None


def test_per_link_composite_and_specific_keys():
    cfg = parse_config("channel2.loss_db = 3\nchannel.loss_db_dealer = 1\nchannel.eta_d = 0.8,0.81,0.82,0.83")
    assert cfg.channels[1].loss_db_player == 3.0
    assert cfg.channels[0].loss_db_dealer == 1.0
    assert cfg.channels[0].eta_d[:4] == (0.8, 0.81, 0.82, 0.83)


def test_fidelity_key():
    cfg = parse_config("source.fidelity = 0.97")
    assert cfg.sources[0].p == pytest.approx((4 * 0.97 - 1) / 3)
    with pytest.raises(ConfigError):
        parse_config("source.fidelity = 0.97\nsource.p = 0.9")


@pytest.mark.parametrize(
    "text, key, line",
    [
        ("n_players = 2", "n_players", 1),
        ("\nsource3.mu = 0.1", "source3.mu", 2),
        ("bogus = 1", "bogus", 1),
        ("source.colour = red", "source.colour", 1),
        ("source.mu = abc", "source.mu", 1),
        ("\n\nchannel1.p_x = 2", "channel1.p_x", 3),
        ("seed = 1\nseed = 2", "seed", 2),
        ("security.f_e = 0.5", "security.f_e", 1),
        ("sweep.parameter = loss_db", "sweep.parameter", 1),
        ("sweep.parameter = nonsense\nsweep.start=0\nsweep.stop=1\nsweep.step=1", "sweep.parameter", 1),
        ("sweep.parameter = mu\nsweep.start=1\nsweep.stop=0\nsweep.step=1", "sweep.parameter", 1),
        ("estimation.z_sample_fraction = 0", "estimation.z_sample_fraction", 1),
        ("n_pulses = 0", "n_pulses", 1),
        ("n_pulses = 1.5", "n_pulses", 1),
        ("output.emit_events = maybe", "output.emit_events", 1),
    ],
)
def test_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.key == key and exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_malformed_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("mode = analytic\njust words")
    assert exc.value.line == 2


def test_round_trip_idempotent():
    text = BASE + "sweep.parameter = loss_db\nsweep.start = 0\nsweep.stop = 25\nsweep.step = 0.5\nseed = 4\n"
    cfg = parse_config(text)
    once = serialize(cfg)
    assert parse_config(once) == cfg
    assert serialize(parse_config(once)) == once


@settings(max_examples=50, deadline=None)
@given(
    st.integers(3, 6),
    st.floats(0.0, 1.0),
    st.floats(0.0, 40.0),
    st.floats(0.0, 1.0),
    st.one_of(st.none(), st.integers(0, 2**31)),
    st.booleans(),
)
def test_round_trip_property(n, mu, loss, p_x, seed, emit):
    text = f"n_players = {n}\nsource.mu = {mu!r}\nchannel.loss_db = {loss!r}\nchannel.p_x = {p_x!r}\noutput.emit_events = {emit}\n"
    if seed is not None:
        text += f"seed = {seed}\n"
    cfg = parse_config(text)
    assert parse_config(serialize(cfg)) == cfg


def test_sweep_grid_inclusive():
    spec = SweepSpec("loss_db", 0.0, 25.0, 0.5)
    vals = spec.values()
    assert len(vals) == 51 and vals[0] == 0.0 and vals[-1] == 25.0
    assert len(SweepSpec("mu", 0.01, 0.03, 0.01).values()) == 3


def test_sweep_configs_apply_alias():
    cfg = parse_config(BASE + "sweep.parameter = loss_db\nsweep.start = 5\nsweep.stop = 6\nsweep.step = 0.5\n")
    pts = sweep_configs(cfg)
    assert [v for v, _ in pts] == [5.0, 5.5, 6.0]
    assert all(c.channels[1].loss_db_dealer == v for v, c in pts)
    with pytest.raises(ConfigError):
        sweep_configs(parse_config(BASE))


def test_overrides():
    cfg = parse_config(BASE)
    assert with_overrides(cfg, {"mu": 0.05}).sources[1].mu == 0.05
    assert with_overrides(cfg, {"source2.mu": 0.05}).sources[0].mu == 0.023
    assert with_overrides(cfg, {"seed": "7"}).seed == 7
    assert with_overrides(cfg, {"e_d": 0.0}).channels[0].e_d_z == 0.0
    assert with_overrides(cfg, {"fidelity": 1.0}).sources[0].p == 1.0
    grown = with_overrides(cfg, {"n_players": 5})
    assert len(grown.sources) == 4 and grown.sources[3].mu == 0.023
    shrunk = with_overrides(grown, {"n_players": 3})
    assert len(shrunk.channels) == 2
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"warp": 1})
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"channel.p_x": 3})


def test_specific_composite_beats_generic_part():
    cfg = parse_config("channel.loss_db_dealer = 2\nchannel1.loss_db = 5")
    assert cfg.channels[0].loss_db_dealer == 5.0 and cfg.channels[1].loss_db_dealer == 2.0
    cfg = parse_config("channel.loss_db = 5\nchannel1.loss_db_dealer = 2")
    assert cfg.channels[0].loss_db_dealer == 2.0 and cfg.channels[0].loss_db_player == 5.0
