"""Physical constants in the unit system used throughout the package."""

HBAR_EV_S = 6.582119569e-16
KB_EV_PER_K = 8.617333262e-5
KB_MEV_PER_K = 8.617333262e-2
HC_EV_NM = 1239.841984

# FWHM of a Gaussian is this many standard deviations.
FWHM_PER_SIGMA = 2.0 * (2.0 * 0.6931471805599453) ** 0.5

# Single APD timing resolution (FWHM, ps) and the resulting two-detector
# coincidence response, which is sqrt(2) wider.
DETECTOR_FWHM_PS = 350.0
PAIR_FWHM_PS = 494.97


def fwhm_to_sigma(fwhm):
    return fwhm / FWHM_PER_SIGMA


def sigma_to_fwhm(sigma):
    return sigma * FWHM_PER_SIGMA


def fss_phase(fss_uev, t_ps):
    """Accumulated exciton phase S*t/hbar for S in ueV and t in ps."""
    return fss_uev * 1e-6 * t_ps * 1e-12 / HBAR_EV_S


def fss_angular_frequency(fss_uev):
    """S/hbar in rad/ps."""
    return fss_uev * 1e-6 * 1e-12 / HBAR_EV_S
