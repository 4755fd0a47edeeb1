"""Device parameters, drive configuration and the rate derivations that
connect them: pump-induced mixing, displaced-reservoir amplitude, the
effective pair drive/loss rates, the dephasing coefficients inherited
from reservoir cross-Kerr, semiclassical steady state, and adiabaticity
diagnostics.

All rates here are angular (rad/s).  Config parsing is the single place
where ordinary-frequency (/2pi Hz) values are converted.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .hilbert import (
    Basis,
    Operator,
    ThreeModeBasis,
    TwoModeBasis,
    annihilation_op,
    number_op,
)

__all__ = [
    "SystemParams",
    "DriveConfig",
    "DerivedRates",
    "Process",
    "derive_rates",
    "steady_state_amplitude",
    "build_storage_hamiltonian",
    "build_full_model_hamiltonian",
    "langevin_steady_state",
    "adiabaticity_report",
    "AdiabaticityReport",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Measured device constants (angular rad/s).

    Kerr constants are stored as the positive magnitudes that appear
    after the minus signs of the static Hamiltonian; the builders insert
    the signs.  ``chi_override`` maps joint Fock labels (j, k) to a full
    dispersive shift chi_jk, superseding the per-photon chi's where present.
    """

    chi_qa: float = 0.0
    chi_qb: float = 0.0
    chi_qr: float = 0.0
    K_aa: float = 0.0
    K_bb: float = 0.0
    K_ab: float = 0.0
    K_ar: float = 0.0
    K_br: float = 0.0
    K_rr: float = 0.0
    kappa_a: float = 0.0
    kappa_b: float = 0.0
    kappa_r: float = 0.0
    omega_a: float = 0.0
    omega_b: float = 0.0
    omega_r: float = 0.0
    omega_q: float = 0.0
    chi_override: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("kappa_a", "kappa_b", "kappa_r"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def K_eff(self) -> float:
        """Combined storage Kerr constant -(K_ab + K_aa/2 + K_bb/2)."""
        return -(self.K_ab + 0.5 * self.K_aa + 0.5 * self.K_bb)

    def chi_shift(self, n_a: int, n_b: int) -> float:
        """Dispersive shift of the ancilla for joint Fock state |n_a n_b>."""
        if (n_a, n_b) in self.chi_override:
            return self.chi_override[(n_a, n_b)]
        return n_a * self.chi_qa + n_b * self.chi_qb


@dataclass(frozen=True)
class DriveConfig:
    """Stabilization drive settings.

    Exactly one of ``eps_p`` (pump amplitude, requires ``mixing_coefficient``
    to convert the displaced pump into a four-wave mixing rate) or ``g_ab``
    (the mixing rate itself) must be supplied.
    """

    eps_d: complex = 0.0
    g_ab: complex | None = None
    eps_p: complex | None = None
    detuning_d: float = 0.0
    detuning_p: float = 0.0
    mixing_coefficient: float | None = None

    def __post_init__(self):
        if (self.g_ab is None) == (self.eps_p is None):
            raise ValueError("exactly one of g_ab / eps_p must define the mixing rate")
        if self.eps_p is not None and self.mixing_coefficient is None:
            raise ValueError("eps_p route requires mixing_coefficient "
                             "(junction zero-point factor product)")


@dataclass(frozen=True)
class DerivedRates:
    """Rates computed from a SystemParams/DriveConfig pair (rad/s)."""

    xi_p: complex
    r_0: complex
    g_ab: complex
    eps_ab: complex
    kappa_ab: float
    zeta_a: complex
    zeta_b: complex
    K_eff: float

    def replace(self, **kw) -> "DerivedRates":
        return replace(self, **kw)


def derive_rates(params: SystemParams, drive: DriveConfig) -> DerivedRates:
    """Displaced-reservoir and adiabatic-elimination rates.

    xi_p   = -i eps_p / (kappa_r/2 + i (omega_r - omega_p))
    r_0    = 2 eps_d / (i kappa_r - 2 Delta_d)
    eps_ab = g_ab r_0
    kappa_ab = 4 |g_ab|^2 / kappa_r
    zeta_m = -2 K_mr r_0 / sqrt(kappa_r)
    """
    if params.kappa_r <= 0.0:
        raise ValueError("kappa_r must be positive to derive reservoir rates")
    if drive.eps_p is not None:
        xi_p = -1j * drive.eps_p / (params.kappa_r / 2.0 + 1j * drive.detuning_p)
        g_ab = drive.mixing_coefficient * xi_p
    else:
        xi_p = 0.0 + 0.0j
        g_ab = complex(drive.g_ab)
    r_0 = 2.0 * drive.eps_d / (1j * params.kappa_r - 2.0 * drive.detuning_d)
    sqrt_kr = math.sqrt(params.kappa_r)
    return DerivedRates(
        xi_p=xi_p,
        r_0=r_0,
        g_ab=g_ab,
        eps_ab=g_ab * r_0,
        kappa_ab=4.0 * abs(g_ab) ** 2 / params.kappa_r,
        zeta_a=-2.0 * params.K_ar * r_0 / sqrt_kr,
        zeta_b=-2.0 * params.K_br * r_0 / sqrt_kr,
        K_eff=params.K_eff,
    )


class Process(str, Enum):
    SINGLE_PHOTON = "single_photon"
    SINGLE_MODE_TWO_PHOTON = "single_mode_two_photon"
    PAIR_PHOTON = "pair_photon"


def steady_state_amplitude(process: Process | str, drive_amp: complex,
                           loss_rate: float, kerr: float = 0.0,
                           detuning: float = 0.0) -> complex:
    """Steady-state complex amplitude of the three driven-dissipative
    process families:

      single photon:        alpha = eps / (i kappa/2 - Delta)
      one-mode two-photon:  alpha = sqrt(eps2 / (i kappa2/2 - K_a))
      pair photon:          gamma = eps_ab / (i kappa_ab/2 - K_eff)
    """
    process = Process(process)
    if process is Process.SINGLE_PHOTON:
        denom = 1j * loss_rate / 2.0 - detuning
    else:
        denom = 1j * loss_rate / 2.0 - kerr
    if denom == 0:
        raise ZeroDivisionError("degenerate steady state: zero loss and zero confinement")
    if process is Process.SINGLE_MODE_TWO_PHOTON:
        return cmath.sqrt(drive_amp / denom)
    return drive_amp / denom


# ---------------------------------------------------------------------------
# Hamiltonian builders

def build_storage_hamiltonian(params: SystemParams, rates: DerivedRates,
                              basis: TwoModeBasis, include_drive: bool = True,
                              grouped_kerr: bool = False) -> Operator:
    """Two-mode storage Hamiltonian.

    Default form: -(K_aa/2) n_a^2 - (K_bb/2) n_b^2 - K_ab n_a n_b, plus the
    pair drive eps_ab a'b' + h.c. when requested.  ``grouped_kerr`` selects
    the single-constant confinement form K_eff n_a n_b used by the ideal
    reduced model.
    """
    n_a = number_op(basis, "a").matrix
    n_b = number_op(basis, "b").matrix
    if grouped_kerr:
        H = rates.K_eff * (n_a @ n_b)
    else:
        H = (-0.5 * params.K_aa * (n_a @ n_a)
             - 0.5 * params.K_bb * (n_b @ n_b)
             - params.K_ab * (n_a @ n_b))
    if include_drive and rates.eps_ab != 0:
        a = annihilation_op(basis, "a").matrix
        b = annihilation_op(basis, "b").matrix
        pair_raise = a.conj().T @ b.conj().T
        H = H + rates.eps_ab * pair_raise + np.conj(rates.eps_ab) * pair_raise.conj().T
    return Operator(basis, H)


def build_full_model_hamiltonian(params: SystemParams, drive: DriveConfig,
                                 basis: ThreeModeBasis,
                                 rates: DerivedRates | None = None,
                                 detuning_a: float | None = None,
                                 detuning_b: float | None = None) -> Operator:
    """Three-mode Hamiltonian before reservoir elimination.

    Storage detunings default to the calibrated cancellation
    Delta_a = K_ar |r_0|^2, Delta_b = K_br |r_0|^2 (with Delta_d applied to
    the reservoir as configured), so that the displaced-frame storage
    dynamics carry no residual linear terms.
    """
    if rates is None:
        rates = derive_rates(params, drive)
    r0_sq = abs(rates.r_0) ** 2
    if detuning_a is None:
        detuning_a = params.K_ar * r0_sq
    if detuning_b is None:
        detuning_b = params.K_br * r0_sq

    n_a = number_op(basis, "a").matrix
    n_b = number_op(basis, "b").matrix
    n_r = number_op(basis, "r").matrix
    a = annihilation_op(basis, "a").matrix
    b = annihilation_op(basis, "b").matrix
    r = annihilation_op(basis, "r").matrix

    H = (drive.detuning_d * n_r + detuning_a * n_a + detuning_b * n_b
         - 0.5 * params.K_rr * (n_r @ n_r)
         - 0.5 * params.K_aa * (n_a @ n_a)
         - 0.5 * params.K_bb * (n_b @ n_b)
         - params.K_ab * (n_a @ n_b)
         - params.K_ar * (n_a @ n_r)
         - params.K_br * (n_b @ n_r))
    inter = rates.g_ab * (a.conj().T @ b.conj().T @ r) + drive.eps_d * r.conj().T
    H = H + inter + inter.conj().T
    return Operator(basis, H)


# ---------------------------------------------------------------------------
# semiclassical reservoir analysis

def langevin_steady_state(params: SystemParams, drive: DriveConfig,
                          rates: DerivedRates | None = None) -> tuple[complex, complex]:
    """Steady state (r, s) of the semiclassical equations

        0 = -i eps_d - (kappa_r/2 + i Delta_d) r - i g* s^2
        0 = -2i g s* r + 2i K_eff |s|^2 s

    with s the classical pair amplitude.  For g_ab = 0 the pumped branch
    degenerates and the uncoupled reservoir response (r_0, 0) is returned.
    """
    if rates is None:
        rates = derive_rates(params, drive)
    g = rates.g_ab
    if g == 0:
        return rates.r_0, 0.0 + 0.0j
    if rates.K_eff == 0.0:
        raise ValueError("pumped Langevin branch requires K_eff != 0")
    denom = (params.kappa_r / 2.0 + 1j * drive.detuning_d) * rates.K_eff / g + 1j * np.conj(g)
    s_sq = -1j * drive.eps_d / denom
    s = cmath.sqrt(s_sq)
    r = rates.K_eff * s_sq / g
    return r, s


def langevin_residuals(params: SystemParams, drive: DriveConfig, r: complex,
                       s: complex, rates: DerivedRates | None = None) -> tuple[float, float]:
    if rates is None:
        rates = derive_rates(params, drive)
    g = rates.g_ab
    res1 = -1j * drive.eps_d - (params.kappa_r / 2.0 + 1j * drive.detuning_d) * r \
        - 1j * np.conj(g) * s * s
    res2 = -2j * g * np.conj(s) * r + 2j * rates.K_eff * abs(s) ** 2 * s
    return abs(res1), abs(res2)


ADIABATICITY_THRESHOLD = 0.2


@dataclass(frozen=True)
class AdiabaticityReport:
    """Dimensionless ratios that must stay small for the reservoir to be
    eliminable, with a pass/warn flag at 0.2 per ratio."""

    kerr_pull: float        # gamma (K_ar + K_br) / kappa_r
    kerr_confinement: float  # |g_ab|^2 / (|K_eff| kappa_r)
    mixing: float           # |g_ab| / kappa_r
    threshold: float = ADIABATICITY_THRESHOLD

    @property
    def ratios(self) -> dict[str, float]:
        return {
            "kerr_pull": self.kerr_pull,
            "kerr_confinement": self.kerr_confinement,
            "mixing": self.mixing,
        }

    @property
    def passed(self) -> bool:
        return all(v < self.threshold for v in self.ratios.values())


def adiabaticity_report(params: SystemParams, rates: DerivedRates,
                        gamma_estimate: float) -> AdiabaticityReport:
    kr = params.kappa_r
    if kr <= 0.0:
        raise ValueError("kappa_r must be positive")
    confinement = abs(rates.g_ab) ** 2 / (abs(rates.K_eff) * kr) if rates.K_eff else math.inf
    if rates.g_ab == 0:
        confinement = 0.0
    return AdiabaticityReport(
        kerr_pull=abs(gamma_estimate) * (params.K_ar + params.K_br) / kr,
        kerr_confinement=confinement,
        mixing=abs(rates.g_ab) / kr,
    )
