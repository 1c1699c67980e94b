"""Fit problem definitions: g2 histograms, the six-basis cascade fit and
scalar photophysics curves."""

import numpy as np

from .. import cascade, hbt, photophysics
from .engine import MAX_ITER, FitError, FitProblem, Parameter, least_squares

CASCADE_BASES = ("VV", "VH", "DD", "DA", "RR", "RL")
CASCADE_SHARED = ("alpha", "fss", "tau_x", "theta", "peak_amp", "dip_depth", "tau_neg")

WING_FRACTION = 0.2


def normalize_histogram(hist, wing_fraction=WING_FRACTION):
    """Counts divided by the wing mean, with matching Poisson weights.

    Weights are 1/max(counts, 1) in count space, rescaled to the normalized
    ordinate.
    """
    if hist.total == 0:
        raise FitError("histogram is empty")
    level = hist.wing_mean(wing_fraction)
    if level <= 0:
        raise FitError("no counts in the histogram wings; cannot normalize")
    y = hist.counts / level
    w = level**2 / np.maximum(hist.counts, 1)
    return y, w, level


def _make_parameters(rows, initials, fixed):
    """Build Parameter objects from (name, default, lower, upper) rows."""
    initials = dict(initials or {})
    fixed = dict(fixed or {})
    unknown = (set(initials) | set(fixed)) - {row[0] for row in rows}
    if unknown:
        raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
    params = []
    for name, default, lo, hi in rows:
        if name in fixed:
            params.append(Parameter(name, fixed[name], lo, hi, fixed=True))
        else:
            params.append(Parameter(name, initials.get(name, default), lo, hi))
    return params


# -- g2 ---------------------------------------------------------------------

def fit_g2(hist, form="product", irf=None, initials=None, fixed=None,
           wing_fraction=WING_FRACTION, bin_average=True, max_iter=MAX_ITER):
    """Fit the IRF-convolved g2 model to an autocorrelation histogram.

    Free parameters are g0, tau1, tau2, beta and a normalization ``norm``.
    The literal form only depends on (g0 - 1)(1 - beta)/beta and
    1/tau1 + 1/tau2, so one parameter of each pair must be fixed.
    """
    irf = irf or cascade.PairIrf()
    y, w, level = normalize_histogram(hist, wing_fraction)
    fixed = dict(fixed or {})
    if form == "literal":
        if not ({"g0", "beta"} & set(fixed) and {"tau1", "tau2"} & set(fixed)):
            raise ValueError(
                "the literal form is degenerate: fix one of (g0, beta) and one of (tau1, tau2)"
            )
    rows = [
        ("g0", 0.2, 0.0, np.inf),
        ("tau1", 500.0, 0.0, np.inf),
        ("tau2", max(hist.window / 5.0, 1.0), 0.0, np.inf),
        ("beta", 0.8, 0.0, 1.0),
        ("norm", 1.0, 0.0, np.inf),
    ]
    params = _make_parameters(rows, initials, fixed)
    bw = hist.bin_width if bin_average else None

    def model(v, x):
        p = hbt.HbtParams(v["g0"], v["tau1"], v["tau2"], v["beta"], form)
        return v["norm"] * hbt.g2_curve(p, irf, x, bin_width=bw)

    result = least_squares(FitProblem(model, hist.bin_centers, y, w, params), max_iter)
    result.derived = {
        "form": form,
        "normalization": {"scheme": "wing_mean", "wing_fraction": wing_fraction, "level": level},
        "irf_sigma_ps": irf.sigma,
    }
    return result


# -- cascade ----------------------------------------------------------------

def _check_cascade_histograms(hists):
    labels = {k.upper(): h for k, h in hists.items()}
    if set(labels) != set(CASCADE_BASES):
        raise ValueError(f"need exactly the six bases {CASCADE_BASES}, got {sorted(labels)}")
    ref = labels[CASCADE_BASES[0]]
    for key in CASCADE_BASES[1:]:
        h = labels[key]
        if h.bin_width != ref.bin_width or not np.array_equal(h.bin_centers, ref.bin_centers):
            raise ValueError(f"histogram {key} is on a different delay grid than {CASCADE_BASES[0]}")
    return [labels[k] for k in CASCADE_BASES]


def _initial_peak(hist_vv, y_vv, irf):
    # rough inversion of the IRF smearing of a ~370 ps exponential
    smear = 1.0 + irf.sigma / 250.0
    return max(float(np.max(y_vv)) - 1.0, 0.5) * smear


def fit_cascade_global(hists, irf=None, initials=None, fss=None, fit_fss=False,
                       fixed=None, wing_fraction=WING_FRACTION, bin_average=True,
                       max_iter=MAX_ITER):
    """Simultaneous fit of the six polarization-resolved cross-correlations.

    ``hists`` maps basis labels (XX analyzer first) to histograms on a
    common grid.  The shared parameters are those of
    :class:`~qdphoton.cascade.CascadeParams`; each histogram adds its own
    normalization ``norm_<basis>``.  ``fss`` (ueV) is held fixed unless
    ``fit_fss`` is set; fixing ``dip_depth`` at 0 also freezes ``tau_neg``
    and holding ``fss`` at 0 freezes ``theta``.  The phase-tracked and time-averaged fidelities are
    attached to ``result.derived`` with delta-method uncertainties.
    """
    irf = irf or cascade.PairIrf()
    ordered = _check_cascade_histograms(hists)
    norm = [normalize_histogram(h, wing_fraction) for h in ordered]
    grid = ordered[0].bin_centers
    n = grid.size
    y = np.concatenate([a[0] for a in norm])
    w = np.concatenate([a[1] for a in norm])
    fixed = dict(fixed or {})
    if fss is not None and not fit_fss:
        fixed.setdefault("fss", float(fss))
    if fixed.get("dip_depth", None) == 0.0 and "tau_neg" not in fixed:
        # without a dip its time constant has no effect on the model
        fixed["tau_neg"] = float((initials or {}).get("tau_neg", 500.0))
    if fixed.get("fss", None) == 0.0 and "theta" not in fixed:
        # the S = 0 state is invariant under a common rotation of both analyzers
        fixed["theta"] = float((initials or {}).get("theta", 0.0))
    rows = [
        ("alpha", 0.5, 0.0, 1.0),
        ("fss", 5.0 if fss is None else max(float(fss), 0.5), 0.0, np.inf),
        ("tau_x", 400.0, 0.0, np.inf),
        ("theta", 0.05, -np.pi / 4, np.pi / 4),
        ("peak_amp", _initial_peak(ordered[0], norm[0][0], irf), 0.0, np.inf),
        ("dip_depth", 0.5, 0.0, 1.0),
        ("tau_neg", 500.0, 0.0, np.inf),
    ] + [(f"norm_{b}", 1.0, 0.0, np.inf) for b in CASCADE_BASES]
    params = _make_parameters(rows, initials, fixed)

    # one internal convolution step for the whole fit keeps chi2 smooth
    start = {p.name: p.value for p in params}
    fss_for_step = start["fss"] if "fss" in fixed else max(start["fss"], 20.0)
    step = None
    if irf.sigma > 0:
        ref = cascade.CascadeParams(
            fss=fss_for_step,
            tau_x=min(start["tau_x"], 200.0),
            tau_neg=min(start["tau_neg"], 200.0),
        )
        step = cascade._internal_step(ref, irf.sigma)
    bw = ordered[0].bin_width if bin_average else None
    x = np.arange(6 * n, dtype=float)

    def model(v, _x):
        p = cascade.CascadeParams(**{k: v[k] for k in CASCADE_SHARED})
        parts = []
        for basis in CASCADE_BASES:
            g = cascade.cross_correlation_curve(
                p, irf, basis[0], basis[1], grid, bin_width=bw, step=step
            )
            parts.append(v[f"norm_{basis}"] * g)
        return np.concatenate(parts)

    result = least_squares(FitProblem(model, x, y, w, params), max_iter)
    result.derived = {
        "fidelity": cascade_fidelities(result),
        "normalization": {
            "scheme": "wing_mean",
            "wing_fraction": wing_fraction,
            "levels": {b: a[2] for b, a in zip(CASCADE_BASES, norm)},
        },
        "irf_sigma_ps": irf.sigma,
        "bases": list(CASCADE_BASES),
    }
    return result


def cascade_fidelities(result):
    """Both fidelity measures with first-order (delta method) uncertainties."""
    v = result.values
    names = ("alpha", "fss", "tau_x")
    idx = [result.free.index(k) if k in result.free else None for k in names]

    def propagate(grad):
        var = 0.0
        for gi, i in zip(grad, idx):
            for gj, j in zip(grad, idx):
                if i is not None and j is not None:
                    var += gi * gj * result.covariance[i, j]
        return float(np.sqrt(max(var, 0.0)))

    f_pt = cascade.fidelity_phase_tracked(v["alpha"])
    f_ta = cascade.fidelity_time_averaged(v["alpha"], v["fss"], v["tau_x"])
    g_ta = cascade.fidelity_time_averaged_gradient(v["alpha"], v["fss"], v["tau_x"])
    return {
        "phase_tracked": {"value": f_pt, "uncertainty": propagate([0.5, 0.0, 0.0])},
        "time_averaged": {"value": f_ta, "uncertainty": propagate(g_ta)},
    }


# -- scalar models ------------------------------------------------------------

def _scalar_rows(model_id, x, y):
    if model_id == "arrhenius":
        return [
            ("i0", float(np.max(y)), 0.0, np.inf),
            ("a_coupling", 50.0, 0.0, np.inf),
            ("e_act", 10.0, 0.0, np.inf),
        ]
    if model_id == "linewidth":
        span = float(np.max(y) - np.min(y))
        return [
            ("gamma0", max(float(np.min(y)), 1e-3), 0.0, np.inf),
            ("gamma_ac", 0.1, 0.0, np.inf),
            ("a_opt", max(20.0 * span, 1.0), 0.0, np.inf),
            ("e_ph", 15.0, 0.0, np.inf),
        ]
    if model_id == "visibility":
        # delay at which the data first drop below 1/e
        below = np.nonzero(y < np.exp(-1.0))[0]
        guess = float(np.abs(x[below[0]])) if below.size else float(np.max(np.abs(x)))
        return [("t2", max(guess, 1e-3), 0.0, np.inf)]
    if model_id == "confinement":
        return [("e_offset", 1.5, -np.inf, np.inf), ("c_conf", 0.05, 0.0, np.inf)]
    raise ValueError(f"unknown scalar model {model_id!r}")


def scalar_model(model_id, values, x):
    if model_id == "arrhenius":
        return photophysics.arrhenius_intensity(
            x, photophysics.ArrheniusParams(values["i0"], values["a_coupling"], values["e_act"])
        )
    if model_id == "linewidth":
        return photophysics.linewidth(
            x,
            photophysics.LinewidthParams(
                values["gamma0"], values["gamma_ac"], values["a_opt"], values["e_ph"]
            ),
        )
    if model_id == "visibility":
        return photophysics.visibility(x, values["t2"])
    if model_id == "confinement":
        return photophysics.emission_wavelength(
            x, photophysics.ConfinementParams(values["e_offset"], values["c_conf"])
        )
    raise ValueError(f"unknown scalar model {model_id!r}")


SCALAR_MODELS = ("arrhenius", "linewidth", "visibility", "confinement")


def fit_scalar_model(model_id, x, y, sigma=None, initials=None, fixed=None, max_iter=MAX_ITER):
    """Fit one of the photophysics curves; ``sigma`` gives 1/sigma^2 weights."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = _scalar_rows(model_id, x, y)
    n_free = len(rows) - len(fixed or {})
    if x.size < n_free + 1:
        raise FitError(f"{model_id}: need at least {n_free + 1} points, got {x.size}")
    weights = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    params = _make_parameters(rows, initials, fixed)
    result = least_squares(
        FitProblem(lambda v, xx: scalar_model(model_id, v, xx), x, y, weights, params), max_iter
    )
    result.derived = {"model": model_id}
    return result
