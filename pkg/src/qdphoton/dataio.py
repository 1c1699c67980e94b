"""Timestamp streams, the coincidence correlator and on-disk formats.

File formats
------------
Timestamp CSV: optional header ``channel,time_ps``, then one ``channel,time``
row per detection with channel in {0, 1} and integer picosecond times.
Lines starting with ``#`` are comments.

Histogram CSV: ``# key=value`` metadata lines (``bin_width_ps``,
``window_ps``, ``labels`` as JSON), a ``delay_ps,counts`` header and one row
per bin.

Fit report: a JSON document; every float is written with 17 significant
digits so that re-reading reproduces the values exactly.
"""

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

CHANNELS = (0, 1)


class FormatError(ValueError):
    """Malformed or schema-violating input file."""


@dataclass
class TimestampStream:
    """Detection events ordered by time (ps)."""

    channels: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.int8)
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.channels.shape != self.times.shape or self.times.ndim != 1:
            raise ValueError("channels and times must be 1-D arrays of equal length")
        if self.channels.size and not np.all((self.channels == 0) | (self.channels == 1)):
            raise ValueError("channel ids must be 0 or 1")

    def __len__(self):
        return int(self.times.size)

    def sorted(self):
        order = np.lexsort((self.channels, self.times))
        return TimestampStream(self.channels[order], self.times[order])

    def channel(self, ch):
        return self.times[self.channels == ch]

    def shifted(self, offset_ps):
        return TimestampStream(self.channels.copy(), self.times + np.int64(offset_ps))

    @classmethod
    def merge(cls, streams):
        streams = list(streams)
        if not streams:
            return cls(np.zeros(0, np.int8), np.zeros(0, np.int64))
        ch = np.concatenate([s.channels for s in streams])
        t = np.concatenate([s.times for s in streams])
        return cls(ch, t).sorted()


def write_timestamps(stream, path):
    data = np.column_stack([stream.channels.astype(np.int64), stream.times])
    with open(path, "w", newline="\n") as fh:
        fh.write("channel,time_ps\n")
        np.savetxt(fh, data, fmt="%d", delimiter=",")


def _parse_timestamp_lines(lines):
    channels, times = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [s.strip() for s in line.split(",")]
        if not channels and parts[0].lower() == "channel":
            continue
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected 'channel,time_ps', got {line!r}")
        try:
            ch = int(parts[0])
            t = int(parts[1])
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field in {line!r}") from None
        if ch not in CHANNELS:
            raise FormatError(f"line {lineno}: channel {ch} not in {{0, 1}}")
        channels.append(ch)
        times.append(t)
    return channels, times


def read_timestamps(path):
    """Parse a timestamp CSV into a time-sorted :class:`TimestampStream`."""
    lines = Path(path).read_text().splitlines()
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if body and body[0].split(",")[0].strip().lower() == "channel":
        body = body[1:]
    if not body:
        raise FormatError(f"{path}: no events")
    try:
        data = np.loadtxt(body, delimiter=",", dtype=np.int64, ndmin=2)
        ok = data.shape[1] == 2 and np.all((data[:, 0] == 0) | (data[:, 0] == 1))
    except ValueError:
        ok = False
    if not ok:
        # slow path, only to locate the offending line
        try:
            _parse_timestamp_lines(lines)
        except FormatError as exc:
            raise FormatError(f"{path}: {exc}") from None
        raise FormatError(f"{path}: malformed timestamp file")
    return TimestampStream(data[:, 0], data[:, 1]).sorted()


# -- histograms ------------------------------------------------------------

@dataclass
class CoincidenceHistogram:
    bin_centers: np.ndarray
    counts: np.ndarray
    bin_width: float
    window: float
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bin_centers = np.asarray(self.bin_centers, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.counts.dtype.kind == "f":
            if not np.all(self.counts == np.round(self.counts)):
                raise ValueError("counts must be integers")
        self.counts = self.counts.astype(np.int64)
        if self.bin_centers.shape != self.counts.shape or self.counts.ndim != 1:
            raise ValueError("bin_centers and counts must be 1-D arrays of equal length")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.bin_centers.size > 1:
            dev = np.max(np.abs(np.diff(self.bin_centers) - self.bin_width))
            if dev > 1e-9:
                raise ValueError(f"bin centers are not uniformly spaced (deviation {dev:g} ps)")
        self.labels = dict(self.labels)

    @property
    def total(self):
        return int(self.counts.sum())

    def wing_mask(self, fraction=0.2):
        """Bins in the outer ``fraction`` of the window on either side."""
        return np.abs(self.bin_centers) >= (1.0 - fraction) * self.window

    def wing_mean(self, fraction=0.2):
        mask = self.wing_mask(fraction)
        if not mask.any():
            raise ValueError("no bins in the wing region")
        return float(self.counts[mask].mean())

    def __eq__(self, other):
        if not isinstance(other, CoincidenceHistogram):
            return NotImplemented
        return (
            np.array_equal(self.bin_centers, other.bin_centers)
            and np.array_equal(self.counts, other.counts)
            and self.bin_width == other.bin_width
            and self.window == other.window
            and self.labels == other.labels
        )


def _bin_geometry(window, bin_width):
    if not (window > 0 and bin_width > 0):
        raise ValueError("window and bin width must be positive")
    ratio = window / bin_width
    n_half = int(round(ratio))
    if n_half < 1 or abs(ratio - n_half) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"window {window} ps is not an integer multiple of bin width {bin_width} ps")
    return 2 * n_half


def _pair_delays(t0, t1, window, chunk=1 << 20):
    """Yield delays t1[j] - t0[i] for every pair with -window <= delay < window."""
    lo = np.searchsorted(t1, t0 - window, side="left")
    hi = np.searchsorted(t1, t0 + window, side="left")
    for start in range(0, t0.size, chunk):
        sl = slice(start, start + chunk)
        n = hi[sl] - lo[sl]
        total = int(n.sum())
        if total == 0:
            continue
        first = np.cumsum(n) - n
        idx = np.arange(total) - np.repeat(first - lo[sl], n)
        yield t1[idx] - np.repeat(t0[sl], n)


def correlate(stream, window, bin_width, mode="cross", seed=0, labels=None):
    """Full multi-stop coincidence histogram of channel 1 relative to channel 0.

    Every (start, stop) pair with delay in [-window, window) is counted.  The
    stop window for consecutive starts is found by a merge of the two sorted
    channels (vectorized two-pointer via ``searchsorted``).  ``mode='auto'``
    merges both channels and splits them 50/50 at random (seeded) first.
    """
    n_bins = _bin_geometry(window, bin_width)
    stream = stream.sorted()
    if mode == "cross":
        t0, t1 = stream.channel(0), stream.channel(1)
    elif mode == "auto":
        rng = np.random.Generator(np.random.Philox(seed))
        to_one = rng.random(len(stream)) < 0.5
        t0, t1 = stream.times[~to_one], stream.times[to_one]
    else:
        raise ValueError(f"mode must be 'cross' or 'auto', got {mode!r}")
    counts = np.zeros(n_bins, dtype=np.int64)
    for delays in _pair_delays(t0, t1, window):
        idx = np.floor((delays + window) / bin_width).astype(np.int64)
        counts += np.bincount(np.clip(idx, 0, n_bins - 1), minlength=n_bins)
    centers = -window + bin_width * (np.arange(n_bins) + 0.5)
    meta = {"mode": mode}
    meta.update(labels or {})
    return CoincidenceHistogram(centers, counts, float(bin_width), float(window), meta)


def write_histogram(hist, path):
    buf = io.StringIO()
    buf.write(f"# bin_width_ps={hist.bin_width!r}\n")
    buf.write(f"# window_ps={hist.window!r}\n")
    buf.write(f"# labels={json.dumps(hist.labels, sort_keys=True)}\n")
    buf.write("delay_ps,counts\n")
    for c, n in zip(hist.bin_centers.tolist(), hist.counts.tolist()):
        buf.write(f"{c!r},{n}\n")
    Path(path).write_text(buf.getvalue())


def read_histogram(path):
    meta = {}
    header = None
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = [s.strip() for s in line.split(",")]
        if header is None:
            header = parts
            for col in ("delay_ps", "counts"):
                if col not in header:
                    raise FormatError(f"{path}: missing column {col!r}")
            continue
        if len(parts) != len(header):
            raise FormatError(f"{path}: line {lineno}: expected {len(header)} fields")
        rows.append((lineno, parts))
    if header is None:
        raise FormatError(f"{path}: missing header 'delay_ps,counts'")
    if not rows:
        raise FormatError(f"{path}: no histogram rows")
    i_d, i_c = header.index("delay_ps"), header.index("counts")
    centers, counts = [], []
    for lineno, parts in rows:
        try:
            centers.append(float(parts[i_d]))
            n = int(parts[i_c])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: malformed number") from None
        if n < 0:
            raise FormatError(f"{path}: line {lineno}: negative count {n}")
        counts.append(n)
    centers = np.array(centers)
    if "bin_width_ps" in meta:
        bin_width = float(meta["bin_width_ps"])
    elif centers.size > 1:
        bin_width = float(centers[1] - centers[0])
    else:
        raise FormatError(f"{path}: cannot infer bin width")
    window = float(meta.get("window_ps", np.max(np.abs(centers)) + 0.5 * bin_width))
    labels = json.loads(meta["labels"]) if "labels" in meta else {}
    try:
        return CoincidenceHistogram(centers, np.array(counts, dtype=np.int64), bin_width, window, labels)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -- fit reports -----------------------------------------------------------

def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        text = f"{x:.17g}"
        if all(ch in "-0123456789" for ch in text):
            text += ".0"
        return text
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in seq) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with floats written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def fit_report(result, kind, context=None, fidelity=None):
    """Assemble the fit report document for a :class:`FitResult`.

    Cascade reports always carry a ``fidelity`` block (taken from
    ``result.derived`` when not given); other kinds never do.
    """
    if kind == "cascade":
        fidelity = fidelity or result.derived.get("fidelity")
        if fidelity is None:
            raise ValueError("cascade fit report needs fidelity values")
    elif fidelity is not None:
        raise ValueError(f"fidelity block is only valid for cascade fits, not {kind!r}")
    context = dict(context or {})
    doc = {
        "tool": {"name": "qdphoton", "version": __version__},
        "kind": kind,
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "chi2": float(result.chi2),
        "dof": int(result.dof),
        "reduced_chi2": float(result.chi2 / result.dof) if result.dof > 0 else None,
        "parameters": {
            name: {
                "value": float(result.values[name]),
                "uncertainty": float(result.errors[name]),
                "fixed": name not in result.free,
            }
            for name in result.names
        },
        "covariance": {"names": list(result.free), "matrix": result.covariance.tolist()},
        "model": context.pop("model", {}),
        "normalization": context.pop("normalization", {}),
        "seed": context.pop("seed", None),
        "context": context,
    }
    if kind == "cascade":
        doc["fidelity"] = fidelity
    return doc


def write_fit_report(result, path, kind, context=None, fidelity=None):
    doc = fit_report(result, kind, context, fidelity)
    text = dumps(doc)
    if path is not None:
        Path(path).write_text(text)
    return text


def read_fit_report(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable fit report ({exc})") from None
    for key in ("kind", "parameters", "converged"):
        if key not in doc:
            raise FormatError(f"{path}: fit report missing {key!r}")
    return doc
