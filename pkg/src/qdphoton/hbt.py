"""Second-order autocorrelation model with blinking and IRF convolution.

Three algebraic forms are supported because the printed model is ambiguous
about how the antibunching and blinking terms combine (``B = (1-beta)/beta``,
``e1 = exp(-|t|/tau1)``, ``e2 = exp(-|t|/tau2)``):

* ``literal``:  1 + (g0 - 1) e1 B e2
* ``sum``:      1 + (g0 - 1) e1 + B e2
* ``product``:  (1 + (g0 - 1) e1)(1 + B e2)

Every form expands into two-sided exponentials, so the convolution with a
Gaussian IRF is evaluated in closed form.
"""

from dataclasses import dataclass

import numpy as np

from ._numerics import as_grid, bin_average, erfc_scaled

FORMS = ("literal", "sum", "product")


@dataclass(frozen=True)
class HbtParams:
    g0: float = 0.0
    tau1: float = 500.0  # ps
    tau2: float = 5000.0  # ps
    beta: float = 1.0
    form: str = "literal"

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("tau1 and tau2 must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.g0 >= 0:
            raise ValueError(f"g0 must be non-negative, got {self.g0}")

    @property
    def blink_amplitude(self):
        return (1.0 - self.beta) / self.beta


def exponential_terms(p):
    """(amplitude, decay time) pairs with g - 1 = sum A exp(-|t|/tau)."""
    b = p.blink_amplitude
    a1 = p.g0 - 1.0
    tau12 = 1.0 / (1.0 / p.tau1 + 1.0 / p.tau2)
    if p.form == "literal":
        return [(a1 * b, tau12)]
    if p.form == "sum":
        return [(a1, p.tau1), (b, p.tau2)]
    return [(a1, p.tau1), (b, p.tau2), (a1 * b, tau12)]


def g2_unconvolved(t, p):
    t = np.abs(np.asarray(t, dtype=float))
    b = p.blink_amplitude
    e1 = np.exp(-t / p.tau1)
    e2 = np.exp(-t / p.tau2)
    if p.form == "literal":
        return 1.0 + (p.g0 - 1.0) * e1 * b * e2
    if p.form == "sum":
        return 1.0 + (p.g0 - 1.0) * e1 + b * e2
    return (1.0 + (p.g0 - 1.0) * e1) * (1.0 + b * e2)


def _one_sided(t, tau, sigma):
    # exp(sigma^2/(2 tau^2) - t/tau) * erfc((sigma/tau - t/sigma)/sqrt 2),
    # rearranged so that no factor over- or underflows on its own.
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        x = (sigma / tau - t / sigma) / np.sqrt(2.0)
        gauss = np.exp(-0.5 * (t / sigma) ** 2)
        tail = gauss * erfc_scaled(np.abs(x))
        full = 2.0 * np.exp(np.minimum(0.5 * (sigma / tau) ** 2 - t / tau, 700.0))
    return np.where(x >= 0, tail, full - tail)


def exp_gauss_convolve(amplitude, tau, sigma, t):
    """Convolution of ``amplitude * exp(-|t|/tau)`` with a unit-area Gaussian.

    Closed form::

        A/2 exp(s^2/2tau^2) [ exp(-t/tau) erfc((s/tau - t/s)/sqrt2)
                            + exp( t/tau) erfc((s/tau + t/s)/sqrt2) ]

    ``sigma == 0`` returns the unconvolved exponential.
    """
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    t = np.asarray(t, dtype=float)
    if sigma == 0:
        return amplitude * np.exp(-np.abs(t) / tau)
    return 0.5 * amplitude * (_one_sided(t, tau, sigma) + _one_sided(-t, tau, sigma))


def g2_curve(p, irf, grid, bin_width=None):
    """IRF-convolved g2 on ``grid``; optionally averaged over histogram bins."""
    grid = as_grid(grid)
    sigma = irf.sigma

    def evaluate(t):
        if sigma == 0:
            return g2_unconvolved(t, p)
        out = np.zeros_like(t)
        for amp, tau in exponential_terms(p):
            out = out + exp_gauss_convolve(amp, tau, sigma, t)
        return 1.0 + out

    if bin_width is None:
        return evaluate(grid)
    return bin_average(evaluate, grid, bin_width)
