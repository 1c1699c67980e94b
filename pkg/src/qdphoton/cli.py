"""Command-line front end: simulate, correlate, fit and tabulate.

Exit codes: 0 success, 2 usage or validation error, 3 fit did not converge
(the report is still written).
"""

import argparse
import csv
import io
import sys
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, cascade, dataio, hbt, montecarlo
from .constants import DETECTOR_FWHM_PS, PAIR_FWHM_PS, fwhm_to_sigma
from .fit import (
    CASCADE_BASES,
    SCALAR_MODELS,
    FitError,
    SingularMatrixError,
    fit_cascade_global,
    fit_g2,
    fit_scalar_model,
    scalar_model,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


class UsageError(Exception):
    pass


def _key_values(items, what):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise UsageError(f"{what} expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"{what} {name}: {value!r} is not a number") from None
    return out


def _tags(items):
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise UsageError(f"--tag expects key=value, got {item!r}")
        try:
            out[name] = float(value)
        except ValueError:
            out[name] = value
    return out


def _analyzer(label):
    if label.lower() == "none":
        return None
    try:
        return float(label)
    except ValueError:
        return label


def _acq_config(args, xx=None, x=None):
    sigma = args.detector_sigma_ps
    if sigma is None:
        sigma = fwhm_to_sigma(args.detector_fwhm_ps)
    return montecarlo.AcquisitionConfig(
        cascade_rate=args.rate,
        duration=args.duration_s,
        detector_sigma=sigma,
        dark_rate=args.dark_rate,
        blink_on_tau=getattr(args, "blink_on_ps", 1e6),
        blink_off_tau=getattr(args, "blink_off_ps", 0.0),
        analyzer_xx=xx,
        analyzer_x=x,
        efficiency=args.efficiency,
        seed=args.seed,
    )


def _echo(payload):
    print(dataio.dumps(payload), end="")


# -- subcommands ---------------------------------------------------------------

def cmd_simulate_cascade(args):
    p = cascade.CascadeParams(
        alpha=args.alpha,
        fss=args.fss_uev,
        tau_x=args.tau_x_ps,
        theta=args.theta_rad,
        dip_depth=args.dip_depth,
        tau_neg=args.tau_neg_ps,
    )
    cfg = _acq_config(args, _analyzer(args.xx_analyzer), _analyzer(args.x_analyzer))
    stream = montecarlo.simulate_cascade(p, cfg, threads=args.threads)
    dataio.write_timestamps(stream, args.out)
    _echo({"command": "simulate-cascade", "params": asdict(p), "config": asdict(cfg),
           "events": len(stream), "out": str(args.out)})
    return EXIT_OK


def cmd_simulate_hbt(args):
    p = hbt.HbtParams(g0=args.g0, tau1=args.tau1_ps, tau2=args.tau2_ps, beta=args.beta, form=args.form)
    cfg = _acq_config(args)
    stream = montecarlo.simulate_hbt(p, cfg, threads=args.threads)
    dataio.write_timestamps(stream, args.out)
    _echo({"command": "simulate-hbt", "params": asdict(p), "config": asdict(cfg),
           "events": len(stream), "out": str(args.out)})
    return EXIT_OK


def cmd_correlate(args):
    stream = dataio.read_timestamps(args.input)
    mode = "auto" if args.auto else "cross"
    labels = {"source": Path(args.input).name}
    if args.label:
        labels["basis"] = args.label
    hist = dataio.correlate(stream, args.window_ps, args.bin_ps, mode=mode, seed=args.split_seed,
                            labels=labels)
    dataio.write_histogram(hist, args.out)
    print(f"{hist.total} coincidences in {hist.counts.size} bins -> {args.out}")
    return EXIT_OK


def _dense_grid(hist, factor=4):
    step = hist.bin_width / factor
    n = int(round(2 * hist.window / step))
    return -hist.window + step * (np.arange(n) + 0.5)


def _write_curve(path, x, y, header=("delay_ps", "model_g2")):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for xi, yi in zip(x, y):
        buf.write(f"{float(xi)!r},{float(yi)!r}\n")
    Path(path).write_text(buf.getvalue())


def _finish_fit(result, args, kind, context, fidelity=None):
    context = dict(context)
    context.update(_tags(args.tag))
    dataio.write_fit_report(result, args.out, kind, context, fidelity)
    line = f"{kind}: " + result.summary(result.free)
    if fidelity:
        f = fidelity["phase_tracked"]
        line += f"; fidelity = {f['value']:.4f} +/- {f['uncertainty']:.2g}"
    if not result.converged:
        print(line + f" [NOT CONVERGED: {result.message}]")
        return EXIT_NOT_CONVERGED
    print(line)
    return EXIT_OK


def cmd_fit_g2(args):
    hist = dataio.read_histogram(args.input)
    irf = cascade.PairIrf.from_fwhm(args.irf_fwhm_ps)
    fixed = _key_values(args.fix, "--fix")
    result = fit_g2(hist, args.form, irf, _key_values(args.init, "--init"), fixed,
                    wing_fraction=args.wing_fraction, max_iter=args.max_iter)
    v = result.values
    p = hbt.HbtParams(v["g0"], v["tau1"], v["tau2"], v["beta"], args.form)
    if args.curve:
        grid = _dense_grid(hist)
        _write_curve(args.curve, grid, v["norm"] * hbt.g2_curve(p, irf, grid))
    context = {
        "model": {"form": args.form, "irf_fwhm_ps": args.irf_fwhm_ps, "irf_sigma_ps": irf.sigma},
        "normalization": result.derived["normalization"],
        "seed": args.seed,
        "input": Path(args.input).name,
    }
    return _finish_fit(result, args, "g2", context)


def cmd_fit_cascade(args):
    hists = {}
    for basis in CASCADE_BASES:
        path = getattr(args, basis.lower())
        if path is None:
            raise UsageError(f"missing histogram for basis {basis} (--{basis.lower()})")
        hists[basis] = dataio.read_histogram(path)
    irf = cascade.PairIrf.from_fwhm(args.irf_fwhm_ps)
    result = fit_cascade_global(
        hists, irf, _key_values(args.init, "--init"), fss=args.fss_uev, fit_fss=args.fit_fss,
        fixed=_key_values(args.fix, "--fix"), wing_fraction=args.wing_fraction,
        max_iter=args.max_iter,
    )
    if args.curve:
        v = result.values
        p = cascade.CascadeParams(**{k: v[k] for k in cascade.CascadeParams.__dataclass_fields__})
        grid = _dense_grid(hists[CASCADE_BASES[0]])
        stem = Path(args.curve)
        for basis in CASCADE_BASES:
            g = cascade.cross_correlation_curve(p, irf, basis[0], basis[1], grid)
            out = stem.with_name(f"{stem.stem}_{basis}{stem.suffix or '.csv'}")
            _write_curve(out, grid, v[f"norm_{basis}"] * g)
    context = {
        "model": {
            "bases": list(CASCADE_BASES),
            "fss_frozen": not args.fit_fss and args.fss_uev is not None,
            "irf_fwhm_ps": args.irf_fwhm_ps,
            "irf_sigma_ps": irf.sigma,
        },
        "normalization": result.derived["normalization"],
        "seed": args.seed,
        "inputs": {b: Path(getattr(args, b.lower())).name for b in CASCADE_BASES},
    }
    return _finish_fit(result, args, "cascade", context, result.derived["fidelity"])


def _read_xy(path):
    text = Path(path).read_text() if path != "-" else sys.stdin.read()
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise dataio.FormatError(f"{path}: no data")
    reader = csv.reader(rows)
    header = [h.strip() for h in next(reader)]
    for col in ("x", "y"):
        if col not in header:
            raise dataio.FormatError(f"{path}: missing column {col!r}")
    data = {h: [] for h in header}
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise dataio.FormatError(f"{path}: line {lineno}: expected {len(header)} fields")
        try:
            for h, val in zip(header, row):
                data[h].append(float(val))
        except ValueError:
            raise dataio.FormatError(f"{path}: line {lineno}: not a number") from None
    sigma = np.array(data["sigma"]) if "sigma" in data else None
    return np.array(data["x"]), np.array(data["y"]), sigma


def example_path(model_id):
    return resources.files("qdphoton").joinpath("data", f"{model_id}_example.csv")


def cmd_fit_scalar(args):
    if args.example:
        source = example_path(args.model)
        if not source.is_file():
            raise UsageError(f"no bundled example for model {args.model!r}")
        x, y, sigma = _read_xy(str(source))
        name = source.name
    elif args.input:
        x, y, sigma = _read_xy(args.input)
        name = Path(args.input).name
    else:
        raise UsageError("fit-scalar needs --in PATH or --example")
    result = fit_scalar_model(args.model, x, y, sigma, _key_values(args.init, "--init"),
                              _key_values(args.fix, "--fix"), max_iter=args.max_iter)
    if args.curve:
        grid = np.linspace(x.min(), x.max(), 200)
        _write_curve(args.curve, grid, scalar_model(args.model, result.values, grid), ("x", "model"))
    context = {
        "model": {"model_id": args.model, "weights": "1/sigma^2" if sigma is not None else "unit"},
        "normalization": {"scheme": "none"},
        "seed": args.seed,
        "input": name,
    }
    return _finish_fit(result, args, f"scalar:{args.model}", context)


def report_rows(paths):
    rows, columns = [], ["report", "kind", "converged", "reduced_chi2"]
    tag_cols, par_cols, fid_cols = [], [], []
    for path in paths:
        doc = dataio.read_fit_report(path)
        row = {
            "report": Path(path).name,
            "kind": doc["kind"],
            "converged": str(doc["converged"]).lower(),
            "reduced_chi2": doc.get("reduced_chi2"),
        }
        for key, val in sorted(doc.get("context", {}).items()):
            if isinstance(val, (int, float, str)) and not isinstance(val, bool):
                row[key] = val
                if key not in tag_cols:
                    tag_cols.append(key)
        for name, par in doc["parameters"].items():
            row[name] = par["value"]
            row[f"{name}_err"] = par["uncertainty"]
            if name not in par_cols:
                par_cols.append(name)
        for name, fid in (doc.get("fidelity") or {}).items():
            row[f"fidelity_{name}"] = fid["value"]
            row[f"fidelity_{name}_err"] = fid["uncertainty"]
            if name not in fid_cols:
                fid_cols.append(name)
        rows.append(row)
    columns += tag_cols
    for name in par_cols:
        columns += [name, f"{name}_err"]
    for name in fid_cols:
        columns += [f"fidelity_{name}", f"fidelity_{name}_err"]
    return columns, rows


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cmd_report(args):
    columns, rows = report_rows(args.reports)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _acquisition_flags(sp, rate):
    sp.add_argument("--rate", type=float, default=rate, help="mean event rate (1/s)")
    sp.add_argument("--duration-s", type=float, default=60.0)
    sp.add_argument("--detector-fwhm-ps", type=float, default=DETECTOR_FWHM_PS)
    sp.add_argument("--detector-sigma-ps", type=float, default=None,
                    help="overrides --detector-fwhm-ps")
    sp.add_argument("--dark-rate", type=float, default=0.0, help="dark counts per channel (1/s)")
    sp.add_argument("--efficiency", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--out", required=True)


def _fit_flags(sp):
    sp.add_argument("--init", action="append", metavar="NAME=VALUE")
    sp.add_argument("--fix", action="append", metavar="NAME=VALUE")
    sp.add_argument("--out", required=True, help="fit report (JSON)")
    sp.add_argument("--curve", help="model curve CSV")
    sp.add_argument("--tag", action="append", metavar="KEY=VALUE",
                    help="extra context recorded in the report, e.g. temperature_k=4")
    sp.add_argument("--seed", type=int, default=None, help="seed of the data, recorded only")
    sp.add_argument("--max-iter", type=int, default=500)


def build_parser():
    ap = _Parser(prog="qdphoton", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"qdphoton {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("simulate-cascade", help="simulate XX-X cascade detections")
    sp.add_argument("--alpha", type=float, default=0.46)
    sp.add_argument("--fss-uev", type=float, default=4.9)
    sp.add_argument("--tau-x-ps", type=float, default=368.0)
    sp.add_argument("--theta-rad", type=float, default=0.0)
    sp.add_argument("--dip-depth", type=float, default=0.0)
    sp.add_argument("--tau-neg-ps", type=float, default=368.0)
    sp.add_argument("--xx-analyzer", default="H", help="H V D A R L, an angle in rad, or none")
    sp.add_argument("--x-analyzer", default="H")
    sp.add_argument("--blink-on-ps", type=float, default=1e6)
    sp.add_argument("--blink-off-ps", type=float, default=0.0, help="0 disables blinking")
    _acquisition_flags(sp, 1e5)
    sp.set_defaults(func=cmd_simulate_cascade)

    sp = sub.add_parser("simulate-hbt", help="simulate a single-photon emitter in an HBT setup")
    sp.add_argument("--g0", type=float, default=0.07)
    sp.add_argument("--tau1-ps", type=float, default=700.0)
    sp.add_argument("--tau2-ps", type=float, default=3000.0)
    sp.add_argument("--beta", type=float, default=0.85)
    sp.add_argument("--form", choices=hbt.FORMS, default="product")
    _acquisition_flags(sp, 1e6)
    sp.set_defaults(func=cmd_simulate_hbt)

    sp = sub.add_parser("correlate", help="build a coincidence histogram")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--window-ps", type=float, required=True)
    sp.add_argument("--bin-ps", type=float, required=True)
    sp.add_argument("--auto", action="store_true", help="autocorrelation of a random 50/50 split")
    sp.add_argument("--split-seed", type=int, default=0)
    sp.add_argument("--label", help="basis label stored in the histogram metadata")
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("fit-g2", help="fit the g2 model to a histogram")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--form", choices=hbt.FORMS, default="product")
    sp.add_argument("--irf-fwhm-ps", type=float, default=PAIR_FWHM_PS)
    sp.add_argument("--wing-fraction", type=float, default=0.2)
    _fit_flags(sp)
    sp.set_defaults(func=cmd_fit_g2)

    sp = sub.add_parser("fit-cascade", help="global fit of six polarization-resolved histograms")
    for basis in CASCADE_BASES:
        sp.add_argument(f"--{basis.lower()}", metavar="PATH")
    sp.add_argument("--irf-fwhm-ps", type=float, default=PAIR_FWHM_PS)
    sp.add_argument("--fss-uev", type=float, default=None, help="measured FSS (frozen unless --fit-fss)")
    sp.add_argument("--fit-fss", action="store_true")
    sp.add_argument("--wing-fraction", type=float, default=0.2)
    _fit_flags(sp)
    sp.set_defaults(func=cmd_fit_cascade)

    sp = sub.add_parser("fit-scalar", help="fit a photophysics curve")
    sp.add_argument("--model", choices=SCALAR_MODELS, required=True)
    sp.add_argument("--in", dest="input", help="CSV with columns x,y[,sigma]")
    sp.add_argument("--example", action="store_true", help="use the bundled example data")
    _fit_flags(sp)
    sp.set_defaults(func=cmd_fit_scalar)

    sp = sub.add_parser("report", help="tabulate fit reports as CSV")
    sp.add_argument("reports", nargs="+")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"qdphoton {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularMatrixError as exc:
        print(f"qdphoton {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except FitError as exc:
        print(f"qdphoton {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
