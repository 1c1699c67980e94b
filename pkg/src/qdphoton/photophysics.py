"""Scalar photophysics models used for temperature series and ensembles."""

from dataclasses import dataclass

import numpy as np

from .constants import HC_EV_NM, KB_MEV_PER_K


@dataclass(frozen=True)
class ArrheniusParams:
    i0: float = 1.0
    a_coupling: float = 100.0
    e_act: float = 16.7  # meV

    def __post_init__(self):
        if not (self.i0 > 0 and self.a_coupling >= 0 and self.e_act > 0):
            raise ValueError("need i0 > 0, a_coupling >= 0, e_act > 0")


@dataclass(frozen=True)
class LinewidthParams:
    gamma0: float = 38.0  # ueV
    gamma_ac: float = 0.0  # ueV/K
    a_opt: float = 0.0  # ueV
    e_ph: float = 21.6  # meV

    def __post_init__(self):
        if min(self.gamma0, self.gamma_ac, self.a_opt, self.e_ph) < 0:
            raise ValueError("linewidth parameters must be non-negative")


@dataclass(frozen=True)
class ConfinementParams:
    e_offset: float  # eV
    c_conf: float  # eV nm^2

    def __post_init__(self):
        if not self.c_conf > 0:
            raise ValueError("c_conf must be positive")


def arrhenius_intensity(T, p):
    """Thermally quenched intensity I0 / (1 + A exp(-E / kT))."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    return p.i0 / (1.0 + p.a_coupling * np.exp(-p.e_act / (KB_MEV_PER_K * T)))


def bose_occupation(energy_mev, T):
    """1 / (exp(E/kT) - 1), zero at T = 0."""
    T = np.asarray(T, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        x = np.where(T > 0, energy_mev / (KB_MEV_PER_K * np.where(T > 0, T, 1.0)), np.inf)
        return np.where(np.isfinite(x), 1.0 / np.expm1(x), 0.0)


def linewidth(T, p):
    """gamma0 + gamma_ac T + a / (exp(E/kT) - 1), in ueV."""
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ValueError("temperature must be non-negative")
    return p.gamma0 + p.gamma_ac * T + p.a_opt * bose_occupation(p.e_ph, T)


def visibility(delay, t2):
    """Gaussian coherence envelope exp(-(delay/T2)^2); T2 is the 1/e delay."""
    if not t2 > 0:
        raise ValueError("t2 must be positive")
    delay = np.asarray(delay, dtype=float)
    return np.exp(-((delay / t2) ** 2))


def emission_energy(d, p):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("thickness must be positive")
    return p.e_offset + p.c_conf / d**2


def emission_wavelength(d, p):
    """Emission wavelength (nm) for infill thickness ``d`` (nm)."""
    return HC_EV_NM / emission_energy(d, p)


def confinement_through(d_ref, wavelength_ref, e_offset):
    """ConfinementParams whose curve passes through (d_ref, wavelength_ref)."""
    c = (HC_EV_NM / wavelength_ref - e_offset) * d_ref**2
    return ConfinementParams(e_offset, c)


@dataclass(frozen=True)
class EnsembleSummary:
    mean: float
    sample_std: float
    n: int


def summarize_ensemble(values):
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 2:
        raise ValueError("need at least two values")
    return EnsembleSummary(float(values.mean()), float(values.std(ddof=1)), int(values.size))
