import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qss_sim.qmath import (
    BELL_KINDS,
    HADAMARD,
    PAULI_X,
    PAULI_Z,
    DensityMatrix,
    LocalGate,
    QuantumStateError,
    StateVector,
    TOMOGRAPHY_SETTINGS,
    apply_local,
    bell_state,
    clip_to_physical,
    expected_counts,
    fidelity,
    fringe_visibility,
    ghz_state,
    half_wave_plate,
    outcome_distribution,
    polarization_fringe,
    read_counts_csv,
    rotation,
    tomographic_reconstruction,
    visibility,
    werner_state,
    write_counts_csv,
)


def test_state_vector_rejects_bad_norm_and_dimension():
    with pytest.raises(QuantumStateError):
        StateVector(np.array([1.0, 1.0]))
    with pytest.raises(QuantumStateError):
        StateVector(np.array([1.0, 0.0, 0.0]))


def test_state_vector_is_read_only():
    s = bell_state("phi_plus")
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0


def test_density_matrix_invariants():
    with pytest.raises(QuantumStateError):
        DensityMatrix(np.diag([0.5, 0.6, 0.0, 0.0]))
    with pytest.raises(QuantumStateError):
        DensityMatrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(QuantumStateError):
        DensityMatrix(np.diag([1.2, -0.2]))
    assert DensityMatrix.maximally_mixed(4).n_qubits == 2


@pytest.mark.parametrize("kind", BELL_KINDS)
def test_bell_states_orthonormal(kind):
    for other in BELL_KINDS:
        ov = abs(bell_state(kind).overlap(bell_state(other)))
        assert ov == pytest.approx(1.0 if other == kind else 0.0, abs=1e-15)


def test_psi_minus_is_anticorrelated_in_every_linear_basis():
    psi = bell_state("psi_minus")
    for basis in ("rectilinear", "diagonal", "circular"):
        dist = outcome_distribution(psi, (basis, basis))
        assert dist[(0, 0)] + dist[(1, 1)] == pytest.approx(0.0, abs=1e-15)


def test_phi_plus_correlations():
    phi = bell_state("phi_plus")
    for basis in ("rectilinear", "diagonal"):
        dist = outcome_distribution(phi, (basis, basis))
        assert dist[(0, 1)] + dist[(1, 0)] == pytest.approx(0.0, abs=1e-15)
    # circular basis is anticorrelated for phi_plus
    dist = outcome_distribution(phi, ("circular", "circular"))
    assert dist[(0, 0)] + dist[(1, 1)] == pytest.approx(0.0, abs=1e-15)


def test_local_pauli_maps_between_bell_states():
    psi_m = bell_state("psi_minus")
    # X on qubit 0 then Z on qubit 0: psi_minus -> phi_plus up to phase
    out = apply_local(psi_m, [LocalGate(0, PAULI_X), LocalGate(0, PAULI_Z)])
    assert out.equivalent(bell_state("phi_plus"))
    out = apply_local(psi_m, [LocalGate(1, PAULI_X)])
    assert out.equivalent(bell_state("phi_minus"))


def test_gate_order_first_acts_first():
    plus = StateVector(np.array([1, 0], dtype=complex))
    # H then Z gives |->; Z then H gives |+>
    a = apply_local(plus, [LocalGate(0, HADAMARD), LocalGate(0, PAULI_Z)])
    b = apply_local(plus, [LocalGate(0, PAULI_Z), LocalGate(0, HADAMARD)])
    assert a.equivalent(StateVector(np.array([1, -1]) / np.sqrt(2)))
    assert b.equivalent(StateVector(np.array([1, 1]) / np.sqrt(2)))


def test_local_gate_validation():
    with pytest.raises(QuantumStateError):
        LocalGate(0, np.array([[1, 1], [0, 1]]))
    with pytest.raises(QuantumStateError):
        LocalGate(3, PAULI_X).embed(2)


def test_half_wave_plate_rotates_by_twice_the_axis():
    hwp = half_wave_plate(np.pi / 8)
    out = hwp @ np.array([1, 0])
    assert np.allclose(out, [np.sqrt(0.5), np.sqrt(0.5)])


def test_outcome_distribution_errors():
    with pytest.raises(ValueError):
        outcome_distribution(bell_state("phi_plus"), ("rectilinear", "bogus"))
    with pytest.raises(ValueError):
        outcome_distribution(bell_state("phi_plus"), ("rectilinear",))


@pytest.mark.parametrize("n", [3, 4, 5])
def test_ghz_parity_correlations(n):
    ghz = ghz_state(n)
    xs = outcome_distribution(ghz, ("diagonal",) * n)
    for bits, p in xs.items():
        if p > 1e-12:
            assert sum(bits) % 2 == 0
    zs = outcome_distribution(ghz, ("rectilinear",) * n)
    assert set(b for b, p in zs.items() if p > 1e-12) == {(0,) * n, (1,) * n}


@given(st.floats(0.0, 1.0))
def test_werner_fidelity_closed_form(p):
    rho = werner_state(p)
    assert fidelity(rho, bell_state("psi_minus")) == pytest.approx((3 * p + 1) / 4, abs=1e-12)


def test_fidelity_properties():
    a = werner_state(0.7)
    b = werner_state(0.3, "phi_plus")
    assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-12)
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(bell_state("psi_minus"), bell_state("phi_plus")) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        fidelity(a, ghz_state(3))


def test_visibility():
    assert visibility(100, 0) == 1.0
    assert visibility(3, 1) == 0.5
    for args in [(-1, 0), (0, 0), (1, 2)]:
        with pytest.raises(ValueError):
            visibility(*args)


@pytest.mark.parametrize("basis", ["rectilinear", "diagonal"])
def test_fringe_visibility(basis):
    assert fringe_visibility(bell_state("psi_minus"), basis) == pytest.approx(1.0, abs=1e-12)
    # Werner(p) fringes have visibility p
    assert fringe_visibility(werner_state(0.8), basis) == pytest.approx(0.8, abs=1e-9)


def test_polarization_fringe_shape():
    f = polarization_fringe(bell_state("psi_minus"), 0.0, [0.0, np.pi / 2])
    assert f == pytest.approx([0.0, 0.5], abs=1e-15)


def test_rotated_state_error_is_sin_squared():
    theta = 0.2
    rho = werner_state(1.0).conjugate_by(np.kron(rotation(theta), np.eye(2)))
    for basis in ("rectilinear", "diagonal"):
        dist = outcome_distribution(rho, (basis, basis))
        assert dist[(0, 0)] + dist[(1, 1)] == pytest.approx(np.sin(theta) ** 2, abs=1e-14)


@pytest.mark.parametrize("kind", BELL_KINDS)
@pytest.mark.parametrize("p", [1.0, 0.9, 0.5, 0.0])
def test_tomography_round_trip_exact(kind, p):
    rho = werner_state(p, kind)
    est = tomographic_reconstruction(expected_counts(rho, 1e5))
    assert np.max(np.abs(est.entries - rho.entries)) < 1e-9


def test_tomography_random_mixed_states():
    rng = np.random.default_rng(5)
    for _ in range(10):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        m = g @ g.conj().T
        rho = DensityMatrix(m / np.trace(m).real)
        est = tomographic_reconstruction(expected_counts(rho, 1234.0))
        assert np.max(np.abs(est.entries - rho.entries)) < 1e-9


def test_tomography_errors():
    counts = expected_counts(werner_state(1.0), 100)
    bad = dict(counts)
    del bad[("H", "H")]
    with pytest.raises(ValueError):
        tomographic_reconstruction(bad)
    bad = dict(counts, **{})
    bad[("H", "H")] = -1
    with pytest.raises(ValueError):
        tomographic_reconstruction(bad)
    with pytest.raises(ValueError):
        tomographic_reconstruction({k: 0 for k in TOMOGRAPHY_SETTINGS})


def test_clip_to_physical_removes_negative_eigenvalues():
    m = np.diag([0.7, 0.5, -0.2, 0.0]).astype(complex)
    rho = clip_to_physical(m)
    assert np.linalg.eigvalsh(rho.entries).min() >= 0
    assert np.trace(rho.entries).real == pytest.approx(1.0)


def test_noisy_counts_reconstruct_physical_state():
    rng = np.random.default_rng(1)
    exact = expected_counts(werner_state(0.95), 2000)
    noisy = {k: rng.poisson(v) for k, v in exact.items()}
    rho = tomographic_reconstruction(noisy)
    assert fidelity(rho, bell_state("psi_minus")) > 0.9


def test_counts_csv_round_trip(tmp_path):
    counts = {k: i for i, k in enumerate(TOMOGRAPHY_SETTINGS)}
    path = tmp_path / "c.csv"
    write_counts_csv(path, counts)
    assert read_counts_csv(path) == counts


def test_counts_csv_errors(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_counts_csv(path)
    path.write_text("projector_signal,projector_idler,count\nH,Q,3\n")
    with pytest.raises(ValueError):
        read_counts_csv(path)
    path.write_text("projector_signal,projector_idler,count\nH,H,x\n")
    with pytest.raises(ValueError):
        read_counts_csv(path)


@settings(max_examples=30)
@given(st.floats(-np.pi, np.pi), st.sampled_from(["rectilinear", "diagonal"]))
def test_outcome_distribution_normalized(theta, basis):
    rho = werner_state(0.6).conjugate_by(np.kron(rotation(theta), np.eye(2)))
    dist = outcome_distribution(rho, (basis, basis))
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(v >= 0 for v in dist.values())
    assert set(dist) == set(itertools.product((0, 1), repeat=2))
