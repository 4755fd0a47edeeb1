"""Truncated Fock-space linear algebra for two storage modes and an
optional lossy reservoir mode.

Flat indices are row-major with the first mode outermost, so for two
modes ``idx = n_a * (cutoff_b + 1) + n_b``.  All operators are dense
complex matrices wrapped in :class:`Operator`; everything here is a pure
function of its inputs and safe to share between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.linalg import expm

__all__ = [
    "TwoModeBasis",
    "ThreeModeBasis",
    "Operator",
    "StateVector",
    "DensityMatrix",
    "annihilation_op",
    "number_op",
    "pnd_op",
    "joint_parity_op",
    "displacement_op",
    "displace_pair",
    "pcs_normalization",
    "pcs_state",
    "pcs_mean_photon",
    "pcs_pair_weight_sum",
    "suggest_cutoffs",
    "fock_state",
    "vacuum_state",
    "coherent_state",
    "fidelity",
    "trace_distance",
    "MAX_PCS_GAMMA",
]

# Series overflow guard: I_0(2*20) is still comfortably inside float range.
MAX_PCS_GAMMA = 20.0


@dataclass(frozen=True)
class TwoModeBasis:
    """Index scheme for the joint Fock space of storage modes a and b.

    ``cutoff_a``/``cutoff_b`` are the largest retained Fock indices
    (inclusive).
    """

    cutoff_a: int
    cutoff_b: int

    def __post_init__(self):
        if self.cutoff_a < 0 or self.cutoff_b < 0:
            raise ValueError("Fock cutoffs must be non-negative")

    @property
    def modes(self) -> tuple[str, ...]:
        return ("a", "b")

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return (self.cutoff_a + 1, self.cutoff_b + 1)

    @property
    def dimension(self) -> int:
        return (self.cutoff_a + 1) * (self.cutoff_b + 1)

    def index(self, n_a: int, n_b: int) -> int:
        if not (0 <= n_a <= self.cutoff_a and 0 <= n_b <= self.cutoff_b):
            raise IndexError(f"({n_a}, {n_b}) outside basis {self.mode_dims}")
        return n_a * (self.cutoff_b + 1) + n_b

    def label(self, index: int) -> tuple[int, int]:
        if not (0 <= index < self.dimension):
            raise IndexError(f"flat index {index} outside basis")
        return divmod(index, self.cutoff_b + 1)

    def labels(self) -> Iterator[tuple[int, int]]:
        for n_a in range(self.cutoff_a + 1):
            for n_b in range(self.cutoff_b + 1):
                yield (n_a, n_b)


@dataclass(frozen=True)
class ThreeModeBasis:
    """Joint Fock space of storage modes a, b and the reservoir mode r.

    Same row-major convention, with the reservoir innermost:
    ``idx = (n_a * dim_b + n_b) * dim_r + n_r``.
    """

    cutoff_a: int
    cutoff_b: int
    cutoff_r: int

    def __post_init__(self):
        if min(self.cutoff_a, self.cutoff_b, self.cutoff_r) < 0:
            raise ValueError("Fock cutoffs must be non-negative")

    @property
    def modes(self) -> tuple[str, ...]:
        return ("a", "b", "r")

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return (self.cutoff_a + 1, self.cutoff_b + 1, self.cutoff_r + 1)

    @property
    def dimension(self) -> int:
        da, db, dr = self.mode_dims
        return da * db * dr

    def storage_basis(self) -> TwoModeBasis:
        return TwoModeBasis(self.cutoff_a, self.cutoff_b)

    def index(self, n_a: int, n_b: int, n_r: int) -> int:
        da, db, dr = self.mode_dims
        if not (0 <= n_a < da and 0 <= n_b < db and 0 <= n_r < dr):
            raise IndexError(f"({n_a}, {n_b}, {n_r}) outside basis {self.mode_dims}")
        return (n_a * db + n_b) * dr + n_r


Basis = TwoModeBasis | ThreeModeBasis


@dataclass(frozen=True)
class Operator:
    """Dense operator acting on a truncated Fock basis."""

    basis: Basis
    matrix: np.ndarray

    def __post_init__(self):
        d = self.basis.dimension
        if self.matrix.shape != (d, d):
            raise ValueError(f"matrix shape {self.matrix.shape} != basis dimension {d}")

    def dag(self) -> "Operator":
        return Operator(self.basis, self.matrix.conj().T)

    def herm_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def __matmul__(self, other: "Operator") -> "Operator":
        _require_same_basis(self.basis, other.basis)
        return Operator(self.basis, self.matrix @ other.matrix)

    def __add__(self, other: "Operator") -> "Operator":
        _require_same_basis(self.basis, other.basis)
        return Operator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _require_same_basis(self.basis, other.basis)
        return Operator(self.basis, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.basis, scalar * self.matrix)

    __rmul__ = __mul__


def _require_same_basis(b1: Basis, b2: Basis) -> None:
    if b1 != b2:
        raise ValueError(f"basis mismatch: {b1} vs {b2}")


@dataclass(frozen=True)
class StateVector:
    basis: Basis
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (self.basis.dimension,):
            raise ValueError("amplitude vector does not match basis dimension")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.basis, np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "StateVector") -> complex:
        _require_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityMatrix:
    basis: Basis
    matrix: np.ndarray

    def __post_init__(self):
        d = self.basis.dimension
        if self.matrix.shape != (d, d):
            raise ValueError("density matrix does not match basis dimension")

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def herm_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def validate(self, trace_tol: float = 1e-8, herm_tol: float = 1e-10,
                 eig_floor: float = -1e-8) -> "DensityMatrix":
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace} deviates from 1 beyond {trace_tol}")
        if self.herm_defect() > herm_tol:
            raise ValueError(f"Hermiticity defect {self.herm_defect():.3e} beyond {herm_tol}")
        if self.min_eigenvalue() < eig_floor:
            raise ValueError(f"eigenvalue {self.min_eigenvalue():.3e} below {eig_floor}")
        return self


# ---------------------------------------------------------------------------
# elementary operators

def _lowering_matrix(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def _embed(basis: Basis, single: np.ndarray, mode: str) -> np.ndarray:
    dims = basis.mode_dims
    idx = basis.modes.index(mode)
    mats = [np.eye(d, dtype=complex) for d in dims]
    mats[idx] = single
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def annihilation_op(basis: Basis, mode: str) -> Operator:
    """Lowering operator of one mode, identity on the others.

    The top Fock level of the selected mode annihilates outward, which is
    where truncation error enters.
    """
    if mode not in basis.modes:
        raise ValueError(f"mode {mode!r} not in basis modes {basis.modes}")
    dim = basis.mode_dims[basis.modes.index(mode)]
    return Operator(basis, _embed(basis, _lowering_matrix(dim), mode))


def number_op(basis: Basis, mode: str) -> Operator:
    if mode not in basis.modes:
        raise ValueError(f"mode {mode!r} not in basis modes {basis.modes}")
    dim = basis.mode_dims[basis.modes.index(mode)]
    single = np.diag(np.arange(dim, dtype=float)).astype(complex)
    return Operator(basis, _embed(basis, single, mode))


def pnd_op(basis: TwoModeBasis) -> Operator:
    """Photon-number-difference operator n_a - n_b (diagonal)."""
    diag = np.array([n_a - n_b for n_a, n_b in basis.labels()], dtype=complex)
    return Operator(basis, np.diag(diag))


def joint_parity_op(basis: TwoModeBasis) -> Operator:
    """Joint photon-number parity, (-1)^(n_a + n_b) on each Fock label."""
    diag = np.array([(-1.0) ** (n_a + n_b) for n_a, n_b in basis.labels()], dtype=complex)
    return Operator(basis, np.diag(diag))


def _single_mode_displacement(dim: int, alpha: complex) -> np.ndarray:
    low = _lowering_matrix(dim)
    gen = alpha * low.conj().T - np.conj(alpha) * low
    return expm(gen)


def displacement_op(basis: Basis, mode: str, alpha: complex) -> Operator:
    """Phase-space displacement of one mode.

    Computed as the matrix exponential of the truncated generator, so the
    result is exactly unitary on the truncated space; truncation shows up
    as population pressed against the top Fock level rather than as norm
    loss (see :func:`boundary_occupancy`).
    """
    if mode not in basis.modes:
        raise ValueError(f"mode {mode!r} not in basis modes {basis.modes}")
    dim = basis.mode_dims[basis.modes.index(mode)]
    return Operator(basis, _embed(basis, _single_mode_displacement(dim, alpha), mode))


def displace_pair(basis: TwoModeBasis, alpha: complex, beta: complex) -> Operator:
    """D_a(alpha) D_b(beta) as a single operator (the factors commute)."""
    da, db = basis.mode_dims
    mat = np.kron(_single_mode_displacement(da, alpha),
                  _single_mode_displacement(db, beta))
    return Operator(basis, mat)


def boundary_occupancy(rho_matrix: np.ndarray, basis: TwoModeBasis) -> float:
    """Population on the top Fock shell (n_a = cutoff_a or n_b = cutoff_b).

    Used as the truncation-leakage warning metric for displaced states.
    """
    diag = np.real(np.diag(rho_matrix))
    occ = 0.0
    for idx, (n_a, n_b) in enumerate(basis.labels()):
        if n_a == basis.cutoff_a or n_b == basis.cutoff_b:
            occ += diag[idx]
    return float(occ)


# ---------------------------------------------------------------------------
# pair coherent states

def pcs_pair_weight_sum(gamma: complex, delta: int) -> float:
    """Sum_n |gamma|^(2n+|delta|) / (n! (n+|delta|)!) by stable recurrence.

    This is I_|delta|(2|gamma|) written as its defining series; terms are
    accumulated until the relative term drops below 1e-16.
    """
    g = abs(gamma)
    if g > MAX_PCS_GAMMA:
        raise ValueError(f"|gamma| = {g} outside supported range (max {MAX_PCS_GAMMA})")
    d = abs(delta)
    if g == 0.0:
        return 1.0 if d == 0 else 0.0
    # t_0 = g^d / d!
    term = math.exp(d * math.log(g) - math.lgamma(d + 1)) if d else 1.0
    total = term
    n = 1
    while True:
        term *= g * g / (n * (n + d))
        total += term
        if term < 1e-16 * total:
            return total
        n += 1
        if n > 100000:  # unreachable for |gamma| <= 20
            raise RuntimeError("pair-weight series failed to converge")


def pcs_normalization(gamma: complex, delta: int) -> float:
    """Normalization N of the pair coherent state written with amplitudes
    N * gamma^(n+delta/2) / sqrt(n! (n+delta)!)."""
    if abs(gamma) == 0.0:
        if delta == 0:
            return 1.0
        raise ValueError("normalization diverges at gamma=0 for delta != 0; "
                         "the limit state is the Fock state |delta, 0>")
    return 1.0 / math.sqrt(pcs_pair_weight_sum(gamma, delta))


def suggest_cutoffs(gamma: complex, delta: int = 0) -> tuple[int, int]:
    """Cutoffs keeping the pair-coherent-state tail below ~1e-8."""
    g = abs(gamma)
    base = math.ceil(g * g + 5.0 * g + 4.0)
    return (base + max(delta, 0), base + max(-delta, 0))


def pcs_state(gamma: complex, delta: int, basis: TwoModeBasis,
              tail_tol: float = 1e-8) -> StateVector:
    """Pair coherent state |gamma, delta> on a truncated basis.

    Amplitudes N gamma^(n+delta/2)/sqrt(n!(n+delta)!) sit at |n+delta, n>
    for delta >= 0; negative delta mirrors the two modes.  Rejects bases
    whose truncated tail probability exceeds ``tail_tol``.
    """
    g = abs(gamma)
    if g > MAX_PCS_GAMMA:
        raise ValueError(f"|gamma| = {g} outside supported range (max {MAX_PCS_GAMMA})")
    d = abs(delta)
    vec = np.zeros(basis.dimension, dtype=complex)
    if g == 0.0:
        n_a, n_b = (d, 0) if delta >= 0 else (0, d)
        if n_a > basis.cutoff_a or n_b > basis.cutoff_b:
            raise ValueError("basis too small for requested delta")
        vec[basis.index(n_a, n_b)] = 1.0
        return StateVector(basis, vec)

    if delta >= 0:
        n_max = min(basis.cutoff_a - d, basis.cutoff_b)
    else:
        n_max = min(basis.cutoff_a, basis.cutoff_b - d)
    if n_max < 0:
        raise ValueError(f"basis {basis.mode_dims} too small for delta={delta}")

    log_g = np.log(complex(gamma))
    truncated_weight = 0.0
    amps = np.empty(n_max + 1, dtype=complex)
    for n in range(n_max + 1):
        log_amp = (n + d / 2.0) * log_g - 0.5 * (math.lgamma(n + 1) + math.lgamma(n + d + 1))
        amps[n] = np.exp(log_amp)
        truncated_weight += abs(amps[n]) ** 2

    full_weight = pcs_pair_weight_sum(gamma, delta)
    tail = 1.0 - truncated_weight / full_weight
    if tail > tail_tol:
        raise ValueError(
            f"pair-coherent-state tail {tail:.2e} beyond tolerance {tail_tol:.1e}; "
            f"suggested cutoffs {suggest_cutoffs(gamma, delta)}")

    amps /= math.sqrt(truncated_weight)
    for n in range(n_max + 1):
        n_a, n_b = (n + d, n) if delta >= 0 else (n, n + d)
        vec[basis.index(n_a, n_b)] = amps[n]
    return StateVector(basis, vec)


def pcs_mean_photon(gamma: complex, delta: int, mode: str) -> float:
    """Mean photon number of a pair coherent state, by the Bessel-series
    ratio n_b = |gamma| I_(d+1)(2|gamma|)/I_d(2|gamma|), n_a = n_b + delta."""
    if mode not in ("a", "b"):
        raise ValueError("mode must be 'a' or 'b'")
    g = abs(gamma)
    if g > MAX_PCS_GAMMA:
        raise ValueError(f"|gamma| = {g} outside supported range (max {MAX_PCS_GAMMA})")
    d = abs(delta)
    if g == 0.0:
        n_low = 0.0
    else:
        n_low = g * pcs_pair_weight_sum(gamma, d + 1) / pcs_pair_weight_sum(gamma, d)
    n_high = n_low + d
    if delta >= 0:
        return n_high if mode == "a" else n_low
    return n_low if mode == "a" else n_high


# ---------------------------------------------------------------------------
# auxiliary states and metrics

def fock_state(basis: Basis, *ns: int) -> StateVector:
    vec = np.zeros(basis.dimension, dtype=complex)
    vec[basis.index(*ns)] = 1.0
    return StateVector(basis, vec)


def vacuum_state(basis: Basis) -> StateVector:
    return fock_state(basis, *([0] * len(basis.modes)))


def coherent_state(basis: Basis, mode: str, alpha: complex) -> StateVector:
    """Truncated coherent state of one mode (vacuum in the others)."""
    vac = vacuum_state(basis)
    disp = displacement_op(basis, mode, alpha)
    return StateVector(basis, disp.matrix @ vac.amplitudes)


def _as_matrix(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.density().matrix
    if isinstance(state, DensityMatrix):
        return state.matrix
    raise TypeError(f"expected StateVector or DensityMatrix, got {type(state)}")


def fidelity(state1, state2) -> float:
    """Uhlmann fidelity; reduces to |<psi|phi>|^2 / <psi|rho|psi> for pure
    arguments."""
    if isinstance(state1, StateVector) and isinstance(state2, StateVector):
        return float(abs(state1.overlap(state2)) ** 2)
    if isinstance(state1, StateVector):
        psi, rho = state1, state2
    elif isinstance(state2, StateVector):
        psi, rho = state2, state1
    else:
        a = _as_matrix(state1)
        b = _as_matrix(state2)
        w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
        sqrt_a = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
        inner = sqrt_a @ b @ sqrt_a
        vals = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
        return float(np.sum(np.sqrt(np.clip(vals, 0.0, None))) ** 2)
    _require_same_basis(psi.basis, rho.basis)
    return float(np.real(np.vdot(psi.amplitudes, _as_matrix(rho) @ psi.amplitudes)))


def trace_distance(state1, state2) -> float:
    diff = _as_matrix(state1) - _as_matrix(state2)
    vals = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.sum(np.abs(vals)))
