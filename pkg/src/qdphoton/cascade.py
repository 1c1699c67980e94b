"""Biexciton-exciton cascade: two-photon state, mixed density matrix,
polarization-resolved cross-correlation curves and fidelity measures.

Delays are in ps, the fine structure splitting in ueV.  Positive delay means
the X photon arrives after the XX photon.
"""

from dataclasses import dataclass

import numpy as np

from . import quantum
from ._numerics import as_grid, bin_average, cubic_interp_uniform, normal_cdf
from .constants import HBAR_EV_S, fss_angular_frequency, fss_phase, fwhm_to_sigma

__all__ = [
    "HBAR_EV_S",
    "CascadeParams",
    "PairIrf",
    "pure_state_at",
    "mixed_rho",
    "analyzer_operator",
    "joint_prob",
    "joint_prob_array",
    "outcome_probabilities",
    "cross_correlation_curve",
    "fidelity_phase_tracked",
    "fidelity_time_averaged",
]


@dataclass(frozen=True)
class CascadeParams:
    alpha: float = 1.0
    fss: float = 0.0  # ueV
    tau_x: float = 368.0  # ps
    theta: float = 0.0  # rad
    peak_amp: float = 1.0
    dip_depth: float = 0.0
    tau_neg: float = 368.0  # ps

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.tau_x > 0:
            raise ValueError(f"tau_x must be positive, got {self.tau_x}")
        if not self.tau_neg > 0:
            raise ValueError(f"tau_neg must be positive, got {self.tau_neg}")
        if not 0.0 <= self.dip_depth <= 1.0:
            raise ValueError(f"dip_depth must lie in [0, 1], got {self.dip_depth}")
        if not self.peak_amp >= 0:
            raise ValueError(f"peak_amp must be non-negative, got {self.peak_amp}")
        if not (np.isfinite(self.fss) and np.isfinite(self.theta)):
            raise ValueError("fss and theta must be finite")


@dataclass(frozen=True)
class PairIrf:
    """Gaussian coincidence response of a detector pair (std in ps)."""

    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"IRF sigma must be >= 0, got {self.sigma}")

    @classmethod
    def from_fwhm(cls, fwhm_ps):
        return cls(fwhm_to_sigma(fwhm_ps))

    @classmethod
    def from_detector_sigma(cls, detector_sigma_ps):
        # difference of two independent Gaussian jitters
        return cls(np.sqrt(2.0) * detector_sigma_ps)


def pure_state_at(t, fss):
    """(|HH> + exp(-i S t / hbar)|VV>)/sqrt(2) in the dot frame."""
    if t < 0:
        raise ValueError(f"exciton dwell time must be >= 0, got {t}")
    s = 1.0 / np.sqrt(2.0)
    return np.array([s, 0.0, 0.0, s * np.exp(-1j * fss_phase(fss, t))], dtype=complex)


def mixed_rho(t, p):
    psi = pure_state_at(t, p.fss)
    return p.alpha * np.outer(psi, psi.conj()) + (1.0 - p.alpha) * quantum.RHO_CLASSICAL


def analyzer_operator(mu, nu, theta):
    """Lab-frame analyzer pair P_mu (x) P_nu expressed in the dot frame."""
    pm = quantum.rotate_frame(quantum.projector(quantum.basis_state(mu)), -theta)
    pn = quantum.rotate_frame(quantum.projector(quantum.basis_state(nu)), -theta)
    return quantum.tensor(pm, pn)


def joint_prob(t, p, mu, nu):
    """Probability that XX passes analyzer mu and X passes nu, given dwell t."""
    val = np.trace(mixed_rho(t, p) @ analyzer_operator(mu, nu, p.theta))
    return float(val.real)


def _prob_coefficients(p, mu, nu):
    # jp(t) = c0 + alpha * Re(m03 * exp(-i S t / hbar))
    m = analyzer_operator(mu, nu, p.theta)
    return 0.5 * (m[0, 0].real + m[3, 3].real), m[0, 3]


def joint_prob_array(t, p, mu, nu):
    """Vectorized :func:`joint_prob` over an array of dwell times."""
    t = np.asarray(t, dtype=float)
    c0, m03 = _prob_coefficients(p, mu, nu)
    return c0 + p.alpha * np.real(m03 * np.exp(-1j * fss_phase(p.fss, t)))


def outcome_probabilities(t, p, mu, nu):
    """Joint pass/absorb probabilities for the four analyzer outcomes.

    Columns are (mu nu, mu nu_perp, mu_perp nu, mu_perp nu_perp); rows sum
    to one.
    """
    mu_p, nu_p = quantum.orthogonal_label(mu), quantum.orthogonal_label(nu)
    cols = [
        joint_prob_array(t, p, a, b)
        for a, b in ((mu, nu), (mu, nu_p), (mu_p, nu), (mu_p, nu_p))
    ]
    return np.clip(np.stack(cols, axis=-1), 0.0, 1.0)


# -- cross-correlation curve ----------------------------------------------

def _excess_terms(p, mu, nu):
    """g - 1 = Re(a0 e^{-t/tau_x} + a1 e^{-gamma t}) for t >= 0."""
    c0, m03 = _prob_coefficients(p, mu, nu)
    a0 = 2.0 * p.peak_amp * c0 - p.dip_depth
    a1 = 2.0 * p.peak_amp * p.alpha * m03
    gamma = 1.0 / p.tau_x + 1j * fss_angular_frequency(p.fss)
    return a0, a1, gamma


def _excess_point(t, p, mu, nu):
    a0, a1, gamma = _excess_terms(p, mu, nu)
    pos = np.maximum(t, 0.0)
    plus = a0 * np.exp(-pos / p.tau_x) + np.real(a1 * np.exp(-gamma * pos))
    minus = -p.dip_depth * np.exp(np.minimum(t, 0.0) / p.tau_neg)
    return np.where(t >= 0, plus, minus)


def _excess_integral(lo, hi, p, mu, nu):
    """Exact integral of g - 1 over [lo, hi] (arrays, lo <= hi)."""
    a0, a1, gamma = _excess_terms(p, mu, nu)
    tx, tn = p.tau_x, p.tau_neg
    # negative branch on [lo, min(hi, 0)]
    nlo, nhi = np.minimum(lo, 0.0), np.minimum(hi, 0.0)
    neg = -p.dip_depth * tn * (np.exp(nhi / tn) - np.exp(nlo / tn))
    # positive branch on [max(lo, 0), hi]
    plo, phi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    pos = a0 * tx * (np.exp(-plo / tx) - np.exp(-phi / tx))
    pos += np.real(a1 * (np.exp(-gamma * plo) - np.exp(-gamma * phi)) / gamma)
    return neg + pos


def _internal_step(p, sigma):
    limits = [sigma / 5.0, p.tau_x / 20.0, p.tau_neg / 20.0]
    omega = abs(fss_angular_frequency(p.fss))
    if omega > 0:
        limits.append(2.0 * np.pi / omega / 40.0)
    return 0.5 * min(limits)


def gaussian_cell_kernel(sigma, step, cutoff=6.0):
    """Cell-integrated unit-area Gaussian on a grid of the given step."""
    half = int(np.ceil(cutoff * sigma / step))
    m = np.arange(-half, half + 1, dtype=float)
    k = normal_cdf((m + 0.5) * step / sigma) - normal_cdf((m - 0.5) * step / sigma)
    return k / k.sum()


def cross_correlation_curve(p, irf, mu, nu, grid, bin_width=None, step=None,
                            max_cells=5_000_000):
    """Normalized cross-correlation g(tau) for analyzers (mu on XX, nu on X).

    The unconvolved model is

        tau >= 0:  1 + exp(-tau/tau_x) * (peak_amp * 2 * jp(tau) - dip_depth)
        tau <  0:  1 - dip_depth * exp(tau/tau_neg)

    and is convolved with the Gaussian pair IRF on an internal uniform grid
    of exact cell integrals, then interpolated (four-point Lagrange) back
    onto ``grid``.  With ``bin_width`` the curve is averaged over
    bins centred on ``grid`` (matching histogrammed data) instead of being
    point-sampled.  ``step`` overrides the internal grid spacing, so that a
    fit can keep it fixed while the parameters move.
    """
    grid = as_grid(grid)
    sigma = irf.sigma
    if sigma == 0:
        if bin_width is None:
            return 1.0 + _excess_point(grid, p, mu, nu)
        half = 0.5 * bin_width
        return 1.0 + _excess_integral(grid - half, grid + half, p, mu, nu) / bin_width

    if step is None:
        step = _internal_step(p, sigma)
    elif not 0 < step <= sigma:
        raise ValueError(f"step must lie in (0, sigma], got {step}")
    # cell means and the cell-integrated kernel together add a triangle of
    # variance step^2/6; shrink the Gaussian to cancel it at leading order
    kernel = gaussian_cell_kernel(np.sqrt(sigma**2 - step**2 / 6.0), step)
    half_k = kernel.size // 2
    pad = (half_k + 2) * step + (bin_width or 0.0)
    k_lo = int(np.floor((grid[0] - pad) / step))
    k_hi = int(np.ceil((grid[-1] + pad) / step))
    if k_hi - k_lo > max_cells:
        raise ValueError(
            f"internal convolution grid too large ({k_hi - k_lo} cells); "
            "check tau_x, tau_neg and the IRF width"
        )
    edges = np.arange(k_lo, k_hi + 1) * step
    cell_mean = _excess_integral(edges[:-1], edges[1:], p, mu, nu) / step
    conv = np.convolve(cell_mean, kernel, mode="same")
    first_center = edges[0] + 0.5 * step

    # the discrete cell sum misses -J h^2/12 G'(t) from the jump J at t = 0
    jump = float(_excess_point(np.array([0.0]), p, mu, nu)[0]) + p.dip_depth
    jump_coef = jump * step**2 / 12.0 / (np.sqrt(2.0 * np.pi) * sigma**3)

    def evaluate(t):
        smooth = cubic_interp_uniform(t, first_center, step, conv)
        return 1.0 + smooth - jump_coef * t * np.exp(-0.5 * (t / sigma) ** 2)

    if bin_width is None:
        return evaluate(grid)
    return bin_average(evaluate, grid, bin_width)


# -- fidelities ------------------------------------------------------------

def fidelity_phase_tracked(alpha):
    """Fidelity to the phase-evolving Bell state, (1 + alpha)/2."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return 0.5 * (1.0 + alpha)


def fidelity_time_averaged(alpha, fss, tau_x):
    """Fidelity to fixed Phi+ of the lifetime-weighted average state."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if not tau_x > 0:
        raise ValueError(f"tau_x must be positive, got {tau_x}")
    x = fss_phase(fss, tau_x)
    return 0.5 * (1.0 - alpha) + 0.5 * alpha * (1.0 + 1.0 / (1.0 + x * x))


def fidelity_time_averaged_gradient(alpha, fss, tau_x):
    """Partial derivatives of :func:`fidelity_time_averaged` (alpha, fss, tau_x)."""
    x = fss_phase(fss, tau_x)
    w = 1.0 / (1.0 + x * x)
    d_alpha = 0.5 * w
    d_x = -alpha * x * w * w
    return np.array([d_alpha, d_x * x / fss if fss else 0.0, d_x * x / tau_x])
