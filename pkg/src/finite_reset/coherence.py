"""Qubit density matrices under level shifts that may rotate the eigenbasis."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

TOL = 1e-12


class ProtocolPreconditionWarning(UserWarning):
    """The state was not diagonal in the initial Hamiltonian's eigenbasis."""


def _as_matrix(m) -> np.ndarray:
    arr = np.asarray(m, dtype=complex)
    if arr.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def _hermitian(arr: np.ndarray, what: str) -> np.ndarray:
    if np.max(np.abs(arr - arr.conj().T)) > TOL * max(1.0, np.max(np.abs(arr))):
        raise ValueError(f"{what} is not Hermitian")
    # rebuild from lower triangle and real diagonal
    off = arr[1, 0]
    return np.array([[arr[0, 0].real, np.conj(off)], [off, arr[1, 1].real]], dtype=complex)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


@dataclass(frozen=True, eq=False)
class Hamiltonian2:
    matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", _hermitian(_as_matrix(self.matrix), "Hamiltonian"))

    @classmethod
    def from_levels(cls, e1: float, e2: float, theta: float = 0.0) -> "Hamiltonian2":
        """Levels (e1, e2) on the basis (cos t, sin t), (-sin t, cos t)."""
        r = rotation(theta)
        return cls(r @ np.diag([e1, e2]).astype(complex) @ r.conj().T)

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Ascending energies and eigenvectors (columns) with the phase convention applied."""
        energies, vecs = np.linalg.eigh(self.matrix)
        return energies, _fix_phases(vecs)

    @property
    def energies(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_degenerate(self) -> bool:
        e = self.energies
        return abs(e[1] - e[0]) <= TOL * max(1.0, float(np.max(np.abs(e))))


@dataclass(frozen=True, eq=False)
class DensityMatrix2:
    matrix: np.ndarray

    def __post_init__(self) -> None:
        rho = _hermitian(_as_matrix(self.matrix), "density matrix")
        if abs(np.trace(rho).real - 1.0) > TOL:
            raise ValueError(f"trace is {np.trace(rho).real!r}, not 1")
        if np.min(np.linalg.eigvalsh(rho)) < -TOL:
            raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def diagonal(cls, p_lower: float, p_upper: float) -> "DensityMatrix2":
        return cls(np.diag([p_lower, p_upper]).astype(complex))

    @classmethod
    def in_basis(cls, populations, basis: np.ndarray) -> "DensityMatrix2":
        return cls(basis @ np.diag(populations).astype(complex) @ basis.conj().T)

    def is_diagonal_in(self, basis: np.ndarray) -> bool:
        m = basis.conj().T @ self.matrix @ basis
        return abs(m[0, 1]) <= TOL


@dataclass(frozen=True, eq=False)
class Unitary2:
    matrix: np.ndarray

    def __post_init__(self) -> None:
        u = _as_matrix(self.matrix)
        if np.max(np.abs(u @ u.conj().T - np.eye(2))) > TOL:
            raise ValueError("matrix is not unitary")
        object.__setattr__(self, "matrix", u)

    def conjugate(self, state: DensityMatrix2) -> DensityMatrix2:
        u = self.matrix
        return DensityMatrix2(u @ state.matrix @ u.conj().T)


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    out = vecs.astype(complex).copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        lead = col[np.argmax(np.abs(col) > TOL)]
        out[:, j] = col * (abs(lead) / lead)
    return out


def diagonal_path_step(state: DensityMatrix2, n: int, step_energy: float, tau: float) -> DensityMatrix2:
    """Evolve across one stage of a commuting (diagonal) Hamiltonian path.

    The propagator is diag(1, exp(-i * step_energy * (n + 1/2) * tau)).
    """
    phi = step_energy * (n + 0.5) * tau
    return Unitary2(np.diag([1.0, np.exp(-1j * phi)])).conjugate(state)


def sudden_quench_work(state: DensityMatrix2, h_old: Hamiltonian2, h_new: Hamiltonian2) -> float:
    """Tr(rho H_new) - Tr(rho H_old)."""
    rho = state.matrix
    return float(np.trace(rho @ h_new.matrix).real - np.trace(rho @ h_old.matrix).real)


def coherent_average_work(p_a: float, p_b: float, p_a_to_bprime: float,
                          e_b: float, e_bprime: float) -> float:
    """Mean two-measurement work of a quench with ground energies pinned at zero."""
    if abs(p_a + p_b - 1.0) > TOL:
        raise ValueError("p_a + p_b must equal 1")
    if not 0.0 <= p_a_to_bprime <= 1.0:
        raise ValueError("transition probability must lie in [0, 1]")
    return p_b * (e_bprime - e_b) + (p_a - p_b) * p_a_to_bprime * e_bprime


def correction_unitary(h_old: Hamiltonian2, h_new: Hamiltonian2) -> Unitary2:
    """U with U|E_i> = |E~_i>, eigenvectors paired by ascending energy."""
    for name, h in (("h_old", h_old), ("h_new", h_new)):
        if h.is_degenerate():
            raise ValueError(f"{name} has a degenerate spectrum; eigenbasis pairing is ambiguous")
    _, v_old = h_old.eigh()
    _, v_new = h_new.eigh()
    return Unitary2(v_new @ v_old.conj().T)


def corrected_quench_work(state: DensityMatrix2, h_old: Hamiltonian2, h_new: Hamiltonian2) -> float:
    """Quench followed by the correcting unitary: Tr(U rho U^dag H_new) - Tr(rho H_old)."""
    _, v_old = h_old.eigh()
    if not state.is_diagonal_in(v_old):
        warnings.warn("protocol precondition violated: state carries coherences in the "
                      "initial eigenbasis", ProtocolPreconditionWarning, stacklevel=2)
    corrected = correction_unitary(h_old, h_new).conjugate(state)
    return float(np.trace(corrected.matrix @ h_new.matrix).real
                 - np.trace(state.matrix @ h_old.matrix).real)


def transition_probability(h_old: Hamiltonian2, h_new: Hamiltonian2, i: int, j: int) -> float:
    """|<E~_j|E_i>|^2 in ascending-energy labelling."""
    _, v_old = h_old.eigh()
    _, v_new = h_new.eigh()
    return float(abs(np.vdot(v_new[:, j], v_old[:, i])) ** 2)
