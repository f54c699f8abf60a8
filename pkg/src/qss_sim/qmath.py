"""Two-qubit polarization toolbox.

Computational basis convention: H -> 0, V -> 1, qubit 0 is the most
significant (signal / dealer side) qubit. Measurement bases map the first
basis vector to bit 0:

    rectilinear  H / V
    diagonal     D / A     D = (H + V)/sqrt2
    circular     R / L     R = (H - iV)/sqrt2
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PURE_TOL = 1e-12
MATRIX_TOL = 1e-9

_S2 = 1.0 / np.sqrt(2.0)

# single-photon polarization kets
KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, -1j * _S2], dtype=complex),
    "L": np.array([_S2, 1j * _S2], dtype=complex),
}

BASES = {
    "rectilinear": ("H", "V"),
    "diagonal": ("D", "A"),
    "circular": ("R", "L"),
}

BELL_KINDS = ("psi_minus", "psi_plus", "phi_minus", "phi_plus")

TOMOGRAPHY_PROJECTORS = ("H", "V", "D", "R")


class QuantumStateError(ValueError):
    """Raised when a state or gate violates its physical invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _n_qubits(dim: int) -> int:
    if dim < 2 or dim & (dim - 1):
        raise QuantumStateError(f"dimension {dim} is not a power of 2")
    return dim.bit_length() - 1


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = _readonly(np.ravel(self.amplitudes))
        _n_qubits(amps.size)
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > PURE_TOL:
            raise QuantumStateError(f"state norm^2 is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.dim)

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def equivalent(self, other: "StateVector", tol: float = PURE_TOL) -> bool:
        """True when the states differ at most by a global phase."""
        return self.dim == other.dim and abs(abs(self.overlap(other)) - 1.0) <= tol

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self) -> None:
        rho = _readonly(self.entries)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise QuantumStateError(f"density matrix must be square, got {rho.shape}")
        _n_qubits(rho.shape[0])
        if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
            raise QuantumStateError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-10:
            raise QuantumStateError(f"trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(rho).min() < -MATRIX_TOL:
            raise QuantumStateError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.dim)

    @classmethod
    def maximally_mixed(cls, dim: int = 4) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim)

    def conjugate_by(self, unitary: np.ndarray) -> "DensityMatrix":
        u = np.asarray(unitary, dtype=complex)
        return DensityMatrix(u @ self.entries @ u.conj().T)


State = StateVector | DensityMatrix


def as_density(state: State) -> DensityMatrix:
    return state.density() if isinstance(state, StateVector) else state


# ---------------------------------------------------------------- gates

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _S2


def rotation(theta: float) -> np.ndarray:
    """Rotate linear polarization by ``theta`` radians (H -> cos H + sin V)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def half_wave_plate(fast_axis: float) -> np.ndarray:
    """Jones matrix of a half-wave plate; rotates linear polarization by 2*fast_axis."""
    c, s = np.cos(2 * fast_axis), np.sin(2 * fast_axis)
    return np.array([[c, s], [s, -c]], dtype=complex)


@dataclass(frozen=True, eq=False)
class LocalGate:
    qubit: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.qubit < 0:
            raise QuantumStateError("qubit index must be non-negative")
        u = _readonly(self.matrix)
        if u.shape != (2, 2):
            raise QuantumStateError("local gates act on a single qubit (2x2)")
        if np.max(np.abs(u @ u.conj().T - I2)) > PURE_TOL:
            raise QuantumStateError("gate matrix is not unitary")
        object.__setattr__(self, "matrix", u)

    def embed(self, n_qubits: int) -> np.ndarray:
        if self.qubit >= n_qubits:
            raise QuantumStateError(
                f"gate on qubit {self.qubit} but state has {n_qubits} qubits"
            )
        ops = [I2] * n_qubits
        ops[self.qubit] = self.matrix
        out = ops[0]
        for op in ops[1:]:
            out = np.kron(out, op)
        return out


def bell_state(kind: str) -> StateVector:
    s = _S2
    amps = {
        "psi_minus": (0, s, -s, 0),
        "psi_plus": (0, s, s, 0),
        "phi_minus": (s, 0, 0, -s),
        "phi_plus": (s, 0, 0, s),
    }
    try:
        return StateVector(np.array(amps[kind], dtype=complex))
    except KeyError:
        raise ValueError(f"unknown Bell state {kind!r}; expected one of {BELL_KINDS}") from None


def ghz_state(n_qubits: int) -> StateVector:
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = amps[-1] = _S2
    return StateVector(amps)


def werner_state(p: float, kind: str = "psi_minus") -> DensityMatrix:
    """p * |bell><bell| + (1 - p) * I/4."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Werner weight must lie in [0, 1], got {p}")
    bell = bell_state(kind).density().entries
    return DensityMatrix(p * bell + (1 - p) * np.eye(4) / 4)


def apply_local(state: StateVector, gates: Sequence[LocalGate]) -> StateVector:
    """Apply single-qubit gates in the order given (first element acts first)."""
    amps = state.amplitudes
    n = state.n_qubits
    for gate in gates:
        amps = gate.embed(n) @ amps
    return StateVector(amps)


# ------------------------------------------------------------ measurement

def _projector(label: str) -> np.ndarray:
    k = KETS[label]
    return np.outer(k, k.conj())


def outcome_distribution(state: State, basis_per_qubit: Sequence[str]) -> dict[tuple[int, ...], float]:
    """Joint outcome probabilities for a local projective measurement."""
    rho = as_density(state).entries
    n = _n_qubits(rho.shape[0])
    if len(basis_per_qubit) != n:
        raise ValueError(f"need {n} basis tags, got {len(basis_per_qubit)}")
    for b in basis_per_qubit:
        if b not in BASES:
            raise ValueError(f"invalid basis tag {b!r}")

    table = {}
    for bits in itertools.product((0, 1), repeat=n):
        proj = np.array([[1.0]], dtype=complex)
        for b, bit in zip(basis_per_qubit, bits):
            proj = np.kron(proj, _projector(BASES[b][bit]))
        table[bits] = float(np.trace(proj @ rho).real)
    # clip rounding noise, then renormalize
    total = sum(max(v, 0.0) for v in table.values())
    return {k: max(v, 0.0) / total for k, v in table.items()}


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    # eigenvalues at rounding level would otherwise turn into ~1e-8 after sqrt
    w = np.where(w > 1e-14 * max(w.max(), 1.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: State, sigma: State) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    A pure argument reduces this to <psi|rho|psi>, evaluated directly.
    """
    if isinstance(rho, StateVector) and isinstance(sigma, StateVector):
        if rho.dim != sigma.dim:
            raise ValueError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
        return abs(rho.overlap(sigma)) ** 2
    if isinstance(rho, StateVector):
        rho, sigma = sigma, rho
    a = as_density(rho).entries
    if isinstance(sigma, StateVector):
        psi = sigma.amplitudes
        if psi.size != a.shape[0]:
            raise ValueError(f"dimension mismatch: {a.shape} vs {psi.size}")
        return float(min(1.0, np.vdot(psi, a @ psi).real))
    b = sigma.entries
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # tr|sqrt(a) sqrt(b)| equals the square-root fidelity
    nuclear = np.linalg.svd(_sqrt_psd(a) @ _sqrt_psd(b), compute_uv=False).sum()
    return float(min(1.0, nuclear**2))


def visibility(n_max: float, n_min: float) -> float:
    if n_max < 0 or n_min < 0:
        raise ValueError("coincidence counts must be non-negative")
    if n_max + n_min == 0:
        raise ValueError("visibility undefined for zero counts")
    if n_min > n_max:
        raise ValueError("n_min exceeds n_max")
    return (n_max - n_min) / (n_max + n_min)


def polarization_fringe(state: State, fixed_angle: float, angles: Iterable[float]) -> np.ndarray:
    """Coincidence probability vs. signal analyzer angle, idler analyzer fixed.

    Both analyzers project onto linear polarization (cos a, sin a).
    """
    rho = as_density(state).entries
    idler = np.array([np.cos(fixed_angle), np.sin(fixed_angle)], dtype=complex)
    p_idler = np.outer(idler, idler)
    out = []
    for a in angles:
        sig = np.array([np.cos(a), np.sin(a)], dtype=complex)
        proj = np.kron(np.outer(sig, sig), p_idler)
        out.append(np.trace(proj @ rho).real)
    return np.array(out)


def fringe_visibility(state: State, basis: str = "rectilinear", n_points: int = 721) -> float:
    """Visibility of the analytic fringe with the idler at H (rectilinear) or D (diagonal)."""
    fixed = {"rectilinear": 0.0, "diagonal": np.pi / 4}[basis]
    fringe = polarization_fringe(state, fixed, np.linspace(0.0, np.pi, n_points))
    return visibility(float(fringe.max()), float(max(fringe.min(), 0.0)))


# ------------------------------------------------------------- tomography

_PAULIS = (I2, PAULI_X, PAULI_Y, PAULI_Z)
_PAULI_PAIRS = [np.kron(a, b) for a in _PAULIS for b in _PAULIS]
TOMOGRAPHY_SETTINGS = tuple(itertools.product(TOMOGRAPHY_PROJECTORS, repeat=2))


def _tomography_matrix() -> np.ndarray:
    rows = []
    for s, i in TOMOGRAPHY_SETTINGS:
        proj = np.kron(_projector(s), _projector(i))
        rows.append([np.trace(proj @ p).real / 4 for p in _PAULI_PAIRS])
    return np.array(rows)


_TOMO_A = _tomography_matrix()


def expected_counts(state: State, total: float = 1.0) -> dict[tuple[str, str], float]:
    """Noise-free coincidence counts for the 16 projector settings."""
    rho = as_density(state).entries
    return {
        (s, i): total * float(np.trace(np.kron(_projector(s), _projector(i)) @ rho).real)
        for s, i in TOMOGRAPHY_SETTINGS
    }


def clip_to_physical(m: np.ndarray) -> DensityMatrix:
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise QuantumStateError("reconstruction has no positive part")
    w = w / w.sum()
    return DensityMatrix((v * w) @ v.conj().T)


def tomographic_reconstruction(counts: Mapping[tuple[str, str], float]) -> DensityMatrix:
    """Linear-inversion state estimate from {H,V,D,R} x {H,V,D,R} coincidences.

    Negative eigenvalues of the raw estimate are set to zero and the trace
    renormalized.
    """
    missing = [k for k in TOMOGRAPHY_SETTINGS if k not in counts]
    if missing:
        raise ValueError(f"missing tomography settings: {missing}")
    n = np.array([float(counts[k]) for k in TOMOGRAPHY_SETTINGS])
    if np.any(n < 0):
        raise ValueError("tomography counts must be non-negative")
    if n.sum() == 0:
        raise ValueError("all tomography counts are zero")
    coeffs = np.linalg.solve(_TOMO_A, n)
    # coeffs[0] is the overall count scale (identity component)
    raw = sum(c * p for c, p in zip(coeffs, _PAULI_PAIRS)) / (4 * coeffs[0])
    return clip_to_physical(raw)


def read_counts_csv(path: str | Path) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"projector_signal", "projector_idler", "count"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            key = (row["projector_signal"].strip(), row["projector_idler"].strip())
            if key[0] not in TOMOGRAPHY_PROJECTORS or key[1] not in TOMOGRAPHY_PROJECTORS:
                raise ValueError(f"{path}:{lineno}: unknown projector pair {key}")
            try:
                c = int(row["count"])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: count {row['count']!r} is not an integer") from None
            if c < 0:
                raise ValueError(f"{path}:{lineno}: negative count")
            counts[key] = counts.get(key, 0) + c
    return counts


def write_counts_csv(path: str | Path, counts: Mapping[tuple[str, str], float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["projector_signal", "projector_idler", "count"])
        for s, i in TOMOGRAPHY_SETTINGS:
            w.writerow([s, i, int(round(counts[(s, i)]))])
