"""Lindblad master-equation engine.

Models are assembled once into a sparse superoperator acting on the
row-major vectorized density matrix; time evolution is a fixed-step RK4
on that vector with the step chosen from a spectral-radius estimate of
the generator, Hermitian symmetrization each step, and trace-drift
monitoring with adaptive step halving.  Purely diagonal generators
(e.g. Kerr-only evolution) are propagated exactly.

No randomness enters any evolution: identical inputs produce identical
trajectories bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import (
    Basis,
    DensityMatrix,
    Operator,
    StateVector,
    ThreeModeBasis,
    TwoModeBasis,
    annihilation_op,
    number_op,
)
from .model import DerivedRates, DriveConfig, SystemParams, build_full_model_hamiltonian, \
    build_storage_hamiltonian, derive_rates

__all__ = [
    "JumpOperator",
    "OpenSystemModel",
    "RecordingPolicy",
    "Trajectory",
    "build_reduced_model",
    "build_full_model",
    "liouvillian",
    "evolve",
    "steady_state",
    "expectation",
    "partial_trace_reservoir",
    "EvolutionError",
    "SteadyStateError",
]

TRACE_DRIFT_BOUND = 1e-6
STEADY_RESIDUAL_FACTOR = 1e-9
MODE_A_MAX_DIM = 150


class EvolutionError(RuntimeError):
    pass


class SteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class JumpOperator:
    """A pre-scaled Lindblad operator: the full L appearing in D[L]."""

    operator: Operator


@dataclass(frozen=True)
class OpenSystemModel:
    hamiltonian: Operator
    jumps: tuple[JumpOperator, ...]
    basis: Basis

    def __post_init__(self):
        if self.hamiltonian.herm_defect() > 1e-9 * max(1.0, float(np.max(np.abs(self.hamiltonian.matrix)))):
            raise ValueError("Hamiltonian is not Hermitian")
        for j in self.jumps:
            if j.operator.basis != self.basis:
                raise ValueError("jump operator basis mismatch")
        if self.hamiltonian.basis != self.basis:
            raise ValueError("Hamiltonian basis mismatch")


@dataclass(frozen=True)
class RecordingPolicy:
    """What to keep along a trajectory.

    Observables are recorded by default; full states only on request, to
    bound memory on long runs.
    """

    n_records: int = 50
    observables: dict = field(default_factory=dict)  # name -> Operator
    keep_states: bool = True


@dataclass
class Trajectory:
    times: np.ndarray                      # seconds, strictly increasing
    observables: dict                      # name -> complex ndarray
    states: list | None                    # list[DensityMatrix] or None
    final_state: DensityMatrix
    dt: float
    steps: int
    max_trace_drift: float

    def observable(self, name: str) -> np.ndarray:
        return self.observables[name]


# ---------------------------------------------------------------------------
# model builders

def build_reduced_model(params: SystemParams, rates: DerivedRates,
                        basis: TwoModeBasis, include_drive: bool = True,
                        include_zeta: bool = True,
                        include_single_photon_loss: bool = True,
                        grouped_kerr: bool = False) -> OpenSystemModel:
    """Two-mode reduced model: storage Kerr + pair drive, a composite jump
    sqrt(kappa_ab) ab + zeta_a n_a + zeta_b n_b, and single-photon losses.

    Flags zero the dephasing contributions and the losses to recover the
    ideal pair-loss model.
    """
    H = build_storage_hamiltonian(params, rates, basis, include_drive=include_drive,
                                  grouped_kerr=grouped_kerr)
    a = annihilation_op(basis, "a").matrix
    b = annihilation_op(basis, "b").matrix
    jumps = []
    composite = np.zeros_like(a)
    if rates.kappa_ab > 0.0:
        # carries the mixing phase so the relative phase against zeta is physical
        phase = np.conj(rates.g_ab) / abs(rates.g_ab) if rates.g_ab else 1.0
        composite = composite + math.sqrt(rates.kappa_ab) * phase * (a @ b)
    if include_zeta and (rates.zeta_a != 0 or rates.zeta_b != 0):
        composite = composite + rates.zeta_a * number_op(basis, "a").matrix \
            + rates.zeta_b * number_op(basis, "b").matrix
    if np.any(composite):
        jumps.append(JumpOperator(Operator(basis, composite)))
    if include_single_photon_loss:
        if params.kappa_a > 0.0:
            jumps.append(JumpOperator(Operator(basis, math.sqrt(params.kappa_a) * a)))
        if params.kappa_b > 0.0:
            jumps.append(JumpOperator(Operator(basis, math.sqrt(params.kappa_b) * b)))
    return OpenSystemModel(H, tuple(jumps), basis)


def build_full_model(params: SystemParams, drive: DriveConfig,
                     basis3: ThreeModeBasis,
                     rates: DerivedRates | None = None) -> OpenSystemModel:
    """Three-mode model with the lossy reservoir kept explicit."""
    if rates is None:
        rates = derive_rates(params, drive)
    H = build_full_model_hamiltonian(params, drive, basis3, rates=rates)
    jumps = [JumpOperator(Operator(basis3, math.sqrt(params.kappa_r)
                                   * annihilation_op(basis3, "r").matrix))]
    if params.kappa_a > 0.0:
        jumps.append(JumpOperator(Operator(basis3, math.sqrt(params.kappa_a)
                                           * annihilation_op(basis3, "a").matrix)))
    if params.kappa_b > 0.0:
        jumps.append(JumpOperator(Operator(basis3, math.sqrt(params.kappa_b)
                                           * annihilation_op(basis3, "b").matrix)))
    return OpenSystemModel(H, tuple(jumps), basis3)


# ---------------------------------------------------------------------------
# superoperator assembly

def liouvillian(model: OpenSystemModel) -> sp.csr_matrix:
    """Sparse generator on the row-major vectorized density matrix:
    vec(A rho B) = (A kron B^T) vec(rho)."""
    H = sp.csr_matrix(model.hamiltonian.matrix)
    dim = H.shape[0]
    ident = sp.identity(dim, dtype=complex, format="csr")
    L = -1j * (sp.kron(H, ident, format="csr") - sp.kron(ident, H.T, format="csr"))
    for jump in model.jumps:
        J = sp.csr_matrix(jump.operator.matrix)
        JdJ = (J.conj().T @ J).tocsr()
        L = L + sp.kron(J, J.conj(), format="csr") \
            - 0.5 * (sp.kron(JdJ, ident, format="csr") + sp.kron(ident, JdJ.T, format="csr"))
    L = L.tocsr()
    L.eliminate_zeros()
    return L


def _spectral_radius(L: sp.csr_matrix, iters: int = 40) -> float:
    """Power-iteration estimate of the dominant |eigenvalue|, padded 15%.

    Deterministic (fixed seed); an underestimate is caught later by the
    trace-drift guard.
    """
    n = L.shape[0]
    rng = np.random.default_rng(7)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rad = 0.0
    for _ in range(iters):
        w = L @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        rad = nw
        v = w / nw
    return 1.15 * rad


def _is_diagonal(L: sp.csr_matrix) -> bool:
    coo = L.tocoo()
    return bool(np.all(coo.row == coo.col))


# ---------------------------------------------------------------------------
# time evolution

def evolve(model: OpenSystemModel, rho0: DensityMatrix, t_final: float,
           policy: RecordingPolicy | None = None, dt: float | None = None,
           stability_factor: float = 0.7) -> Trajectory:
    """Integrate d rho/dt = -i[H, rho] + sum_j D[L_j] rho up to ``t_final``.

    Records ``policy.n_records + 1`` evenly spaced states/observables
    including t = 0 and t = t_final.  Aborts (EvolutionError) on trace
    drift beyond 1e-6 that persists through six step halvings, or on step
    underflow.
    """
    if rho0.basis != model.basis:
        raise ValueError("initial state basis mismatch")
    if t_final < 0.0:
        raise ValueError("t_final must be non-negative")
    policy = policy or RecordingPolicy()
    L = liouvillian(model)
    dim = model.basis.dimension

    obs_vecs = {name: np.asarray(op.matrix).T.reshape(-1)
                for name, op in policy.observables.items()}

    if t_final == 0.0:
        return _package(model, [0.0], [rho0.matrix.copy()], obs_vecs, policy, 0.0, 0, 0.0)

    if _is_diagonal(L):
        return _evolve_diagonal(model, L, rho0, t_final, policy, obs_vecs)

    rad = _spectral_radius(L)
    if dt is not None:
        base_dt = dt
    elif rad == 0.0:
        base_dt = t_final
    else:
        base_dt = stability_factor / rad

    n_rec = max(1, policy.n_records)
    interval = t_final / n_rec

    for attempt in range(7):
        try:
            return _rk4_run(model, L, rho0, interval, n_rec, base_dt, obs_vecs, policy)
        except _RetryWithSmallerStep as exc:
            base_dt /= 2.0
            if base_dt < t_final * 1e-12:
                raise EvolutionError(
                    f"step-size underflow at dt={base_dt:.3e}: {exc}") from exc
    raise EvolutionError(
        f"trace drift stayed beyond {TRACE_DRIFT_BOUND} after repeated step halving "
        f"(last dt {base_dt:.3e})")


class _RetryWithSmallerStep(Exception):
    pass


def _rk4_run(model, L, rho0, interval, n_rec, base_dt, obs_vecs, policy) -> Trajectory:
    dim = model.basis.dimension
    steps_per_rec = max(1, math.ceil(interval / base_dt))
    dt = interval / steps_per_rec
    check_every = min(200, steps_per_rec)

    v = rho0.matrix.astype(complex).reshape(-1).copy()
    times = [0.0]
    snapshots = [v.copy()]
    max_drift = 0.0
    total_steps = 0
    sixth = dt / 6.0

    for rec in range(1, n_rec + 1):
        for step in range(steps_per_rec):
            k1 = L @ v
            k2 = L @ (v + (0.5 * dt) * k1)
            k3 = L @ (v + (0.5 * dt) * k2)
            k4 = L @ (v + dt * k3)
            v = v + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            m = v.reshape(dim, dim)
            m += m.conj().T
            m *= 0.5
            v = m.reshape(-1)
            total_steps += 1
            if (step + 1) % check_every == 0 or step + 1 == steps_per_rec:
                tr = v.reshape(dim, dim).trace()
                drift = abs(tr - 1.0)
                if not np.isfinite(drift) or drift > TRACE_DRIFT_BOUND:
                    raise _RetryWithSmallerStep(
                        f"trace drift {drift:.3e} at t={rec * interval:.3e}")
                max_drift = max(max_drift, drift)
        times.append(rec * interval)
        snapshots.append(v.copy())

    return _package(model, times, [s.reshape(dim, dim) for s in snapshots],
                    obs_vecs, policy, dt, total_steps, max_drift)


def _evolve_diagonal(model, L, rho0, t_final, policy, obs_vecs) -> Trajectory:
    """Exact propagation when the generator is diagonal in the Fock basis
    (diagonal Hamiltonian, diagonal jumps)."""
    dim = model.basis.dimension
    diag = np.asarray(L.diagonal())
    n_rec = max(1, policy.n_records)
    times = np.linspace(0.0, t_final, n_rec + 1)
    v0 = rho0.matrix.astype(complex).reshape(-1)
    snapshots = [(np.exp(diag * t) * v0).reshape(dim, dim) for t in times]
    drift = max(abs(s.trace() - 1.0) for s in snapshots)
    return _package(model, list(times), snapshots, obs_vecs, policy, t_final / n_rec,
                    n_rec, float(drift))


def _package(model, times, mats, obs_vecs, policy, dt, steps, max_drift) -> Trajectory:
    observables = {name: np.array([w @ m.reshape(-1) for m in mats])
                   for name, w in obs_vecs.items()}
    states = [DensityMatrix(model.basis, m) for m in mats] if policy.keep_states else None
    return Trajectory(
        times=np.asarray(times, dtype=float),
        observables=observables,
        states=states,
        final_state=DensityMatrix(model.basis, mats[-1]),
        dt=dt,
        steps=steps,
        max_trace_drift=max_drift,
    )


# ---------------------------------------------------------------------------
# steady states

def steady_state(model: OpenSystemModel, rho0: DensityMatrix | None = None,
                 mode: str = "auto", max_time: float | None = None,
                 residual_factor: float = STEADY_RESIDUAL_FACTOR) -> DensityMatrix:
    """Stationary state of the model.

    mode "A": inverse iteration on the sparse vectorized generator (only
    for dimension <= 150); the seed rho0 selects among degenerate steady
    states.  mode "B": long-time evolution until the generator residual
    ||d rho/dt||_1 falls below ``residual_factor`` times the dominant rate.
    "auto" picks A when the dimension allows it.
    """
    dim = model.basis.dimension
    if mode == "auto":
        mode = "A" if dim <= MODE_A_MAX_DIM else "B"
    if mode == "A":
        if dim > MODE_A_MAX_DIM:
            raise SteadyStateError(f"mode A limited to dimension {MODE_A_MAX_DIM}, got {dim}")
        return _steady_state_nullspace(model, rho0, residual_factor)
    if mode == "B":
        return _steady_state_longtime(model, rho0, max_time, residual_factor)
    raise ValueError(f"unknown steady-state mode {mode!r}")


def _steady_state_nullspace(model, rho0, residual_factor) -> DensityMatrix:
    L = liouvillian(model).tocsc()
    dim = model.basis.dimension
    rad = _spectral_radius(L)
    if rad == 0.0:
        # trivial generator: anything is stationary
        if rho0 is None:
            raise SteadyStateError("zero generator and no seed state supplied")
        return rho0
    shift = rad * 1e-12
    lu = spla.splu(L + shift * sp.identity(L.shape[0], dtype=complex, format="csc"))
    if rho0 is not None:
        v = rho0.matrix.astype(complex).reshape(-1).copy()
    else:
        v = (np.eye(dim, dtype=complex) / dim).reshape(-1)
    residual = math.inf
    for _ in range(8):
        v = lu.solve(v)
        m = v.reshape(dim, dim)
        m = 0.5 * (m + m.conj().T)
        tr = m.trace()
        if abs(tr) < 1e-300:
            raise SteadyStateError("inverse iteration lost all trace; bad seed state")
        m = m / tr
        v = m.reshape(-1)
        residual = float(np.linalg.norm(L @ v, 1))
        if residual < residual_factor * rad:
            return DensityMatrix(model.basis, v.reshape(dim, dim))
    raise SteadyStateError(
        f"nullspace iteration did not converge: residual {residual:.3e} "
        f"vs tolerance {residual_factor * rad:.3e}")


def _steady_state_longtime(model, rho0, max_time, residual_factor) -> DensityMatrix:
    if rho0 is None:
        raise SteadyStateError("mode B requires an initial state")
    if max_time is None:
        raise SteadyStateError("mode B requires a max_time budget")
    L = liouvillian(model)
    rad = _spectral_radius(L)
    if rad == 0.0:
        return rho0
    tol = residual_factor * rad
    n_chunks = 24
    chunk = max_time / n_chunks
    rho = rho0
    policy = RecordingPolicy(n_records=1, keep_states=False)
    residual = math.inf
    for _ in range(n_chunks):
        traj = evolve(model, rho, chunk, policy=policy)
        rho = traj.final_state
        residual = float(np.linalg.norm(L @ rho.matrix.reshape(-1), 1))
        if residual < tol:
            return rho
    raise SteadyStateError(
        f"no convergence within time budget {max_time}: residual {residual:.3e} "
        f"vs tolerance {tol:.3e}")


# ---------------------------------------------------------------------------
# expectations and reductions

def expectation(rho: DensityMatrix, op: Operator):
    """Tr[rho O]; returns a real number for Hermitian O (asserting the
    imaginary residue is below 1e-9), complex otherwise."""
    if rho.basis != op.basis:
        raise ValueError("basis mismatch between state and operator")
    val = complex(np.trace(rho.matrix @ op.matrix))
    scale = max(1.0, float(np.max(np.abs(op.matrix))))
    if op.herm_defect() <= 1e-12 * scale:
        if abs(val.imag) > 1e-9 * scale:
            raise AssertionError(f"imaginary residue {val.imag:.3e} on Hermitian expectation")
        return val.real
    return val


def partial_trace_reservoir(rho3: DensityMatrix) -> DensityMatrix:
    """Trace out the reservoir of a three-mode state."""
    basis = rho3.basis
    if not isinstance(basis, ThreeModeBasis):
        raise ValueError("partial_trace_reservoir expects a three-mode state")
    da, db, dr = basis.mode_dims
    t = rho3.matrix.reshape(da, db, dr, da, db, dr)
    reduced = np.einsum("abrcdr->abcd", t).reshape(da * db, da * db)
    return DensityMatrix(basis.storage_basis(), reduced)
