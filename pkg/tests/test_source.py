import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qss_sim.qmath import bell_state, fidelity, outcome_distribution
from qss_sim.source import (
    SourceParams,
    effective_state,
    multi_pair_ratio,
    sample_pair_count,
    werner_weight_from_fidelity,
)


def test_param_validation():
    for kw in [dict(mu=-0.1), dict(mu=0.1, p=1.5), dict(mu=0.1, base_state="ghz"),
               dict(mu=0.1, pair_statistics="thermal"), dict(mu=2.0, pair_statistics="single")]:
        with pytest.raises(ValueError):
            SourceParams(**kw)


@given(st.floats(0.25, 1.0))
def test_fidelity_inversion(f):
    p = werner_weight_from_fidelity(f)
    assert fidelity(effective_state(SourceParams(0.02, p)), bell_state("psi_minus")) == pytest.approx(f, abs=1e-12)


def test_from_fidelity_rejects_unphysical():
    with pytest.raises(ValueError):
        SourceParams.from_fidelity(0.02, 0.2)
    assert SourceParams.from_fidelity(0.02, 0.97).p == pytest.approx((4 * 0.97 - 1) / 3)


def test_rotation_changes_error_rate():
    s = SourceParams(0.02, rotation_theta=0.1)
    dist = outcome_distribution(effective_state(s), ("rectilinear", "rectilinear"))
    assert dist[(0, 0)] + dist[(1, 1)] == pytest.approx(math.sin(0.1) ** 2, abs=1e-14)


def test_poisson_sampling_moments():
    rng = np.random.default_rng(0)
    k = sample_pair_count(SourceParams(0.05), rng, size=2_000_000)
    assert k.mean() == pytest.approx(0.05, rel=0.01)
    # P(0) closed form
    assert np.mean(k == 0) == pytest.approx(math.exp(-0.05), abs=5e-4)


def test_single_statistics_never_emits_two_pairs():
    rng = np.random.default_rng(0)
    k = sample_pair_count(SourceParams(0.5, pair_statistics="single"), rng, size=100_000)
    assert set(np.unique(k)) <= {0, 1}
    assert isinstance(sample_pair_count(SourceParams(0.5, pair_statistics="single"), rng), int)


def test_multi_pair_ratio():
    assert multi_pair_ratio(0.0) == 0.0
    mu = 0.022
    direct = (1 - math.exp(-mu) - mu * math.exp(-mu)) / (mu * math.exp(-mu))
    assert multi_pair_ratio(mu) == pytest.approx(direct, rel=1e-12)
    assert multi_pair_ratio(mu) == pytest.approx(mu / 2, rel=0.01)
