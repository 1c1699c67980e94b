"""Synthetic photon-detection data: cw-excited XX-X cascades and single-line
emitters with blinking, detector jitter, dark counts and analyzers.

Random numbers come from numpy's Philox counter-based generator.  The
acquisition is cut into fixed time slices; slice ``i`` draws from
``Philox(SeedSequence(seed, spawn_key=(i,)))``, so the output depends only on
(parameters, config, seed) and not on how many worker threads ran.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import cascade, quantum
from .constants import DETECTOR_FWHM_PS, fwhm_to_sigma
from .dataio import TimestampStream

SLICE_PS = 1e12  # 1 s
PS_PER_S = 1e12
THREADS_ENV = "QDPHOTON_THREADS"

# a start whose XX photon comes this many tau_neg after the previous X is
# unaffected by the refractory dip to better than 1e-17
_DIP_HORIZON = 40.0


def default_threads():
    try:
        n = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        n = 1
    return max(n, 1)


@dataclass(frozen=True)
class AcquisitionConfig:
    """Acquisition settings.  Rates in 1/s, duration in s, times in ps.

    ``blink_off_tau = 0`` switches cascade blinking off.  ``analyzer_xx`` /
    ``analyzer_x`` of ``None`` means no polarizer in that arm.  ``efficiency``
    is a scalar or a (channel 0, channel 1) pair.
    """

    cascade_rate: float = 1e5
    duration: float = 60.0
    detector_sigma: float = fwhm_to_sigma(DETECTOR_FWHM_PS)
    dark_rate: float = 0.0
    blink_on_tau: float = 1e6
    blink_off_tau: float = 0.0
    analyzer_xx: object = "H"
    analyzer_x: object = "H"
    efficiency: object = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.cascade_rate > 0:
            raise ValueError(f"cascade_rate must be positive, got {self.cascade_rate}")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not self.detector_sigma >= 0:
            raise ValueError("detector_sigma must be >= 0")
        if not self.dark_rate >= 0:
            raise ValueError("dark_rate must be >= 0")
        if not self.blink_on_tau > 0:
            raise ValueError("blink_on_tau must be positive")
        if not self.blink_off_tau >= 0:
            raise ValueError("blink_off_tau must be >= 0 (0 disables blinking)")
        for label in (self.analyzer_xx, self.analyzer_x):
            if label is not None:
                quantum.basis_state(label)
        for eta in self.efficiencies:
            if not 0.0 < eta <= 1.0:
                raise ValueError(f"efficiency must lie in (0, 1], got {eta}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def efficiencies(self):
        eta = np.broadcast_to(np.asarray(self.efficiency, dtype=float), (2,))
        return float(eta[0]), float(eta[1])

    @property
    def blinking(self):
        return self.blink_off_tau > 0

    @property
    def on_fraction(self):
        if not self.blinking:
            return 1.0
        return self.blink_on_tau / (self.blink_on_tau + self.blink_off_tau)


def slice_bounds(duration_s):
    total = duration_s * PS_PER_S
    n = max(int(np.ceil(total / SLICE_PS - 1e-12)), 1)
    edges = np.minimum(np.arange(n + 1) * SLICE_PS, total)
    edges[-1] = total
    return edges


def slice_rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(index,))))


# -- telegraph blinking --------------------------------------------------------

def telegraph_states(times, tau_on, tau_off, rng):
    """Two-state telegraph process sampled at sorted ``times`` (stationary start).

    Uses the exact decomposition of the two-state Markov chain: over a gap
    dt the state is kept with probability exp(-dt/tau_c) and otherwise
    redrawn from the stationary law, with 1/tau_c = 1/tau_on + 1/tau_off.
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    f_on = tau_on / (tau_on + tau_off)
    tau_c = tau_on * tau_off / (tau_on + tau_off)
    keep_u = rng.random(n)
    fresh_val = rng.random(n) < f_on
    gaps = np.diff(times, prepend=times[0])
    fresh = keep_u >= np.exp(-gaps / tau_c)
    fresh[0] = True
    last = np.maximum.accumulate(np.where(fresh, np.arange(n), 0))
    return fresh_val[last]


def telegraph_trajectory(duration, tau_on, tau_off, rng):
    """Switching times of an explicit telegraph trajectory on [0, duration).

    Returns (switch_times, initial_state); mainly for checking occupancy.
    """
    f_on = tau_on / (tau_on + tau_off)
    state = bool(rng.random() < f_on)
    t, out = 0.0, []
    s = state
    while t < duration:
        t += rng.exponential(tau_on if s else tau_off)
        if t < duration:
            out.append(t)
        s = not s
    return np.array(out), state


def on_time_fraction(switches, initial_state, duration):
    edges = np.concatenate([[0.0], switches, [duration]])
    lengths = np.diff(edges)
    on = lengths[0::2] if initial_state else lengths[1::2]
    return float(on.sum() / duration)


# -- detection chain -----------------------------------------------------------

def _detect(times, channel, eta, sigma, rng):
    keep = rng.random(times.size) < eta
    t = times[keep]
    if sigma > 0:
        t = t + rng.normal(0.0, sigma, t.size)
    return t, np.full(t.size, channel, dtype=np.int8)


def _darks(lo, hi, rate, channel, rng):
    n = rng.poisson(rate * (hi - lo) / PS_PER_S) if rate > 0 else 0
    return rng.uniform(lo, hi, n), np.full(n, channel, dtype=np.int8)


def _finish(parts, lo, hi, total):
    t = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    t = np.rint(t)
    ok = (t >= 0) & (t < total)
    return t[ok].astype(np.int64), c[ok]


def _run_slices(worker, cfg, threads):
    edges = slice_bounds(cfg.duration)
    total = edges[-1]
    jobs = [(i, edges[i], edges[i + 1], total) for i in range(edges.size - 1)]
    threads = threads or default_threads()
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda j: worker(*j), jobs))
    else:
        results = [worker(*j) for j in jobs]
    times = np.concatenate([r[0] for r in results])
    chans = np.concatenate([r[1] for r in results])
    # stable ordering: by time, then channel, then generation order
    order = np.lexsort((chans, times))
    return TimestampStream(chans[order], times[order])


# -- cascade -------------------------------------------------------------------

def pass_probabilities(t1, p, mu, nu):
    """Four outcome probabilities (both pass, XX only, X only, neither).

    An analyzer of ``None`` passes every photon in that arm.
    """
    if mu is not None and nu is not None:
        return cascade.outcome_probabilities(t1, p, mu, nu)
    if mu is None and nu is None:
        out = np.zeros((np.size(t1), 4))
        out[:, 0] = 1.0
        return out
    # marginalize the missing arm over a complete pair of projectors
    if mu is None:
        full = cascade.outcome_probabilities(t1, p, "H", nu)
        pass_x = full[:, 0] + full[:, 2]
        return np.stack([pass_x, 1.0 - pass_x, np.zeros_like(pass_x), np.zeros_like(pass_x)], axis=-1)
    full = cascade.outcome_probabilities(t1, p, mu, "H")
    pass_xx = full[:, 0] + full[:, 1]
    return np.stack([pass_xx, np.zeros_like(pass_xx), 1.0 - pass_xx, np.zeros_like(pass_xx)], axis=-1)


def _refractory_accept(starts, x_times, p, rng):
    """Thin cascade starts closely after an earlier X emission.

    A start at s is kept with probability 1 - d exp(-(s - x_prev)/tau_neg),
    x_prev being the latest X emission among the kept earlier cascades.
    Only starts within the dip horizon of some earlier X need the
    sequential pass.
    """
    n = starts.size
    keep = np.ones(n, dtype=bool)
    if p.dip_depth == 0 or n < 2:
        return keep
    u = rng.random(n)
    prev_max = np.maximum.accumulate(x_times)
    prev_max = np.concatenate([[-np.inf], prev_max[:-1]])
    near = np.nonzero(starts - prev_max < _DIP_HORIZON * p.tau_neg)[0]
    if near.size == 0:
        return keep
    # fold kept X times into a running maximum, deciding only the near starts
    latest, cursor = -np.inf, 0
    for i in near:
        seg = x_times[cursor:i][keep[cursor:i]]
        if seg.size:
            latest = max(latest, float(seg.max()))
        cursor = i
        gap = max(starts[i] - latest, 0.0)
        keep[i] = u[i] >= p.dip_depth * np.exp(-gap / p.tau_neg)
    return keep


def simulate_cascade(p, cfg, threads=None):
    """Detection stream of a cw-pumped cascade; channel 0 = XX, 1 = X."""
    eta0, eta1 = cfg.efficiencies
    sigma = cfg.detector_sigma

    def worker(index, lo, hi, total):
        rng = slice_rng(cfg.seed, index)
        n = rng.poisson(cfg.cascade_rate * (hi - lo) / PS_PER_S)
        starts = np.sort(rng.uniform(lo, hi, n))
        if cfg.blinking:
            starts = starts[telegraph_states(starts, cfg.blink_on_tau, cfg.blink_off_tau, rng)]
        t1 = rng.exponential(p.tau_x, starts.size)
        keep = _refractory_accept(starts, starts + t1, p, rng)
        starts, t1 = starts[keep], t1[keep]
        probs = pass_probabilities(t1, p, cfg.analyzer_xx, cfg.analyzer_x)
        cum = np.cumsum(probs, axis=1)
        cum /= cum[:, -1:]
        outcome = (rng.random(starts.size)[:, None] > cum[:, :-1]).sum(axis=1)
        xx_pass = outcome <= 1
        x_pass = (outcome == 0) | (outcome == 2)
        parts = [
            _detect(starts[xx_pass], 0, eta0, sigma, rng),
            _detect((starts + t1)[x_pass], 1, eta1, sigma, rng),
            _darks(lo, hi, cfg.dark_rate, 0, rng),
            _darks(lo, hi, cfg.dark_rate, 1, rng),
        ]
        return _finish(parts, lo, hi, total)

    return _run_slices(worker, cfg, threads)


def expected_peak_amp(cfg, p=None):
    """peak_amp that makes cross_correlation_curve match :func:`simulate_cascade`.

    Valid without blinking and without the refractory dip; includes dark
    counts and efficiencies.  Polarizer marginals are 1/2 in every basis.
    """
    tau_x = (p or cascade.CascadeParams()).tau_x * 1e-12
    eta0, eta1 = cfg.efficiencies
    m0 = 0.5 if cfg.analyzer_xx is not None else 1.0
    m1 = 0.5 if cfg.analyzer_x is not None else 1.0
    r = cfg.cascade_rate
    rate0 = r * eta0 * m0 + cfg.dark_rate
    rate1 = r * eta1 * m1 + cfg.dark_rate
    # excess pair density r eta0 eta1 jp(t) e^{-t/tau}/tau over rate0*rate1
    return r * eta0 * eta1 / (2.0 * tau_x * rate0 * rate1)


# -- single-line emitter ---------------------------------------------------------

@dataclass(frozen=True)
class _Component:
    rate: float  # mean rate of the component, 1/s
    renewal_tau: float = 0.0  # 0 = Poisson
    gated: bool = False
    on_fraction: float = 1.0


def hbt_components(p, rate):
    """Independent point processes whose superposition has the g2 of ``p``.

    Building blocks: a renewal process with hypoexponential intervals
    (g2 = 1 - exp(-t/tau)), Poisson light, and gating by a telegraph process
    with on-fraction f and correlation time tau2 (g2 = 1 + (1-f)/f exp(-t/tau2)).
    """
    b = p.blink_amplitude
    if p.form == "product":
        if p.g0 > 1:
            raise ValueError("product form simulation needs g0 <= 1")
        rs = np.sqrt(1.0 - p.g0)
        return [
            _Component(rs * rate, p.tau1, True, p.beta),
            _Component((1.0 - rs) * rate, 0.0, True, p.beta),
        ]
    if p.form == "sum":
        if p.g0 > 1:
            raise ValueError("sum form simulation needs g0 <= 1")
        rs = np.sqrt(1.0 - p.g0)
        comps = [_Component(rs * rate, p.tau1)]
        if b > 0:
            if rs >= 1.0:
                raise ValueError("sum form with blinking needs g0 > 0")
            f = 1.0 / (1.0 + b / (1.0 - rs) ** 2)
            comps.append(_Component((1.0 - rs) * rate, 0.0, True, f))
        elif rs < 1.0:
            comps.append(_Component((1.0 - rs) * rate, 0.0))
        return comps
    depth = (1.0 - p.g0) * b
    if not 0.0 <= depth <= 1.0:
        raise ValueError("literal form simulation needs 0 <= (1 - g0)(1 - beta)/beta <= 1")
    rs = np.sqrt(depth)
    tau12 = 1.0 / (1.0 / p.tau1 + 1.0 / p.tau2)
    return [_Component(rs * rate, tau12), _Component((1.0 - rs) * rate, 0.0)]


def _renewal_rates(rate_ps, tau):
    # intervals Exp(a) + Exp(b):  a + b = 1/tau,  ab/(a + b) = rate
    disc = 1.0 / tau**2 - 4.0 * rate_ps / tau
    if disc < 0:
        raise ValueError(
            f"renewal rate {rate_ps * PS_PER_S:.3g}/s too high for antibunching time {tau} ps"
        )
    root = np.sqrt(disc)
    return 0.5 * (1.0 / tau + root), 0.5 * (1.0 / tau - root)


def _renewal_times(lo, hi, rate_ps, tau, rng):
    a, b = _renewal_rates(rate_ps, tau)
    # equilibrium start: the residual time to the next event
    in_b = rng.random() < (1.0 / b) / (1.0 / a + 1.0 / b)
    first = rng.exponential(1.0 / b) + (0.0 if in_b else rng.exponential(1.0 / a))
    span = hi - lo
    chunks, t = [], lo + first
    if t >= hi:
        return np.zeros(0)
    chunks.append(np.array([t]))
    while t < hi:
        m = int(rate_ps * (hi - t) * 1.05 + 6.0 * np.sqrt(rate_ps * span + 1.0) + 16)
        gaps = rng.exponential(1.0 / a, m) + rng.exponential(1.0 / b, m)
        seq = t + np.cumsum(gaps)
        chunks.append(seq)
        t = seq[-1]
    out = np.concatenate(chunks)
    return out[out < hi]


def simulate_hbt(p, cfg, threads=None):
    """Detection stream of a single-line emitter behind a 50/50 beamsplitter.

    ``cfg.cascade_rate`` is the mean photon emission rate; blinking is
    governed by (tau2, beta) of ``p``, not by the config blink fields.
    """
    eta0, eta1 = cfg.efficiencies
    sigma = cfg.detector_sigma
    comps = hbt_components(p, cfg.cascade_rate)

    def worker(index, lo, hi, total):
        rng = slice_rng(cfg.seed, index)
        free, gated = [], []
        for comp in comps:
            if comp.rate <= 0:
                continue
            # a gated component runs at rate/f while on
            r = comp.rate / PS_PER_S / (comp.on_fraction if comp.gated else 1.0)
            if comp.renewal_tau > 0:
                t = _renewal_times(lo, hi, r, comp.renewal_tau, rng)
            else:
                t = np.sort(rng.uniform(lo, hi, rng.poisson(r * (hi - lo))))
            (gated if comp.gated else free).append(t)
        if gated:
            # all gated components share one blinking trajectory
            f = next(c.on_fraction for c in comps if c.gated)
            t = np.sort(np.concatenate(gated))
            if f < 1.0:
                t = t[telegraph_states(t, p.tau2 / (1.0 - f), p.tau2 / f, rng)]
            free.append(t)
        t = np.concatenate(free) if free else np.zeros(0)
        to_one = rng.random(t.size) < 0.5
        parts = [
            _detect(t[~to_one], 0, eta0, sigma, rng),
            _detect(t[to_one], 1, eta1, sigma, rng),
            _darks(lo, hi, cfg.dark_rate, 0, rng),
            _darks(lo, hi, cfg.dark_rate, 1, rng),
        ]
        return _finish(parts, lo, hi, total)

    return _run_slices(worker, cfg, threads)


def with_analyzers(cfg, xx, x):
    return replace(cfg, analyzer_xx=xx, analyzer_x=x)
