import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdphoton import dataio as io
from qdphoton.fit import FitProblem, Parameter, least_squares


def brute_force(t0, t1, window, bw):
    n = int(round(2 * window / bw))
    counts = np.zeros(n, dtype=np.int64)
    for a in t0:
        for b in t1:
            d = b - a
            if -window <= d < window:
                counts[int(np.floor((d + window) / bw))] += 1
    return counts


def test_read_timestamps_examples(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("0,100\n1,250\n")
    s = io.read_timestamps(f)
    assert len(s) == 2 and list(s.times) == [100, 250] and list(s.channels) == [0, 1]
    f.write_text("# comment\nchannel,time_ps\n1,500\n0,20\n1,40\n")
    s = io.read_timestamps(f)
    assert list(s.times) == [20, 40, 500] and list(s.channels) == [0, 1, 1]


@pytest.mark.parametrize("text, fragment", [
    ("2,5\n", "line 1"),
    ("0,5\n0,abc\n", "line 2"),
    ("0,5\n1,6,7\n", "line 2"),
    ("", "no events"),
    ("# only a comment\n", "no events"),
])
def test_read_timestamps_errors(tmp_path, text, fragment):
    f = tmp_path / "t.csv"
    f.write_text(text)
    with pytest.raises(io.FormatError, match=fragment):
        io.read_timestamps(f)


def test_timestamp_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = io.TimestampStream(rng.integers(0, 2, 500), np.sort(rng.integers(0, 10**12, 500))).sorted()
    io.write_timestamps(s, tmp_path / "t.csv")
    back = io.read_timestamps(tmp_path / "t.csv")
    assert np.array_equal(back.times, s.times) and np.array_equal(back.channels, s.channels)
    with pytest.raises(ValueError):
        io.TimestampStream([0, 3], [1, 2])


def test_correlate_examples():
    h = io.correlate(io.TimestampStream([0, 1], [0, 100]), 1000, 200)
    assert h.counts.sum() == 1
    assert h.counts[np.argmin(np.abs(h.bin_centers - 100))] == 1
    assert h.bin_centers[0] == -900 and h.bin_centers.size == 10
    empty = io.correlate(io.TimestampStream([0, 0, 0], [0, 5, 9]), 1000, 200)
    assert empty.counts.sum() == 0 and empty.counts.size == 10
    for window, bw in ((1000, 300), (0, 100), (100, -1)):
        with pytest.raises(ValueError):
            io.correlate(io.TimestampStream([0], [0]), window, bw)
    with pytest.raises(ValueError):
        io.correlate(io.TimestampStream([0], [0]), 1000, 100, mode="other")


def test_correlate_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(5):
        n = 10**4
        t = np.sort(rng.integers(0, 2 * 10**7, n))
        ch = rng.integers(0, 2, n)
        h = io.correlate(io.TimestampStream(ch, t), 3000, 100)
        t0, t1 = t[ch == 0], t[ch == 1]
        # all n0 * n1 pairs, in row blocks
        ref = np.zeros(60, dtype=np.int64)
        for i in range(0, t0.size, 500):
            d = (t1[None, :] - t0[i:i + 500, None]).ravel()
            d = d[(d >= -3000) & (d < 3000)]
            ref += np.bincount(((d + 3000) // 100).astype(int), minlength=60)
        assert np.array_equal(h.counts, ref)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-10**12, 10**12))
def test_correlate_small_brute_force_and_translation(seed, shift):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 60))
    t = rng.integers(0, 20000, n)
    ch = rng.integers(0, 2, n)
    s = io.TimestampStream(ch, t).sorted()
    h = io.correlate(s, 2000, 250)
    assert np.array_equal(h.counts, brute_force(s.channel(0), s.channel(1), 2000, 250))
    assert np.array_equal(io.correlate(s.shifted(shift), 2000, 250).counts, h.counts)


def test_correlate_auto_mode():
    rng = np.random.default_rng(2)
    s = io.TimestampStream(np.zeros(2000, int), np.sort(rng.integers(0, 10**9, 2000)))
    a = io.correlate(s, 5000, 100, mode="auto", seed=3)
    b = io.correlate(s, 5000, 100, mode="auto", seed=3)
    assert a == b and a.labels["mode"] == "auto"
    assert a.total > 0


def test_histogram_validation():
    with pytest.raises(ValueError):
        io.CoincidenceHistogram([0, 1, 3], [1, 1, 1], 1.0, 2.0)
    with pytest.raises(ValueError):
        io.CoincidenceHistogram([0, 1], [1, -1], 1.0, 2.0)
    with pytest.raises(ValueError):
        io.CoincidenceHistogram([0, 1], [1.5, 1], 1.0, 2.0)
    h = io.CoincidenceHistogram([-150, -50, 50, 150], [1, 2, 3, 4], 100, 200)
    assert list(h.wing_mask(0.5)) == [True, False, False, True]
    assert h.wing_mean(0.5) == 2.5


def test_histogram_round_trip(tmp_path):
    h = io.CoincidenceHistogram([-100.0, 0.0, 100.0], [3, 0, 7], 100.0, 150.0, {"basis": "DD", "mode": "cross"})
    io.write_histogram(h, tmp_path / "h.csv")
    assert io.read_histogram(tmp_path / "h.csv") == h
    rng = np.random.default_rng(4)
    centers = -5000 + 0.1 * (np.arange(100000) + 0.5)
    big = io.CoincidenceHistogram(centers, rng.poisson(30, centers.size), 0.1, 5000.0)
    io.write_histogram(big, tmp_path / "big.csv")
    assert io.read_histogram(tmp_path / "big.csv") == big


@pytest.mark.parametrize("text, fragment", [
    ("delay_ps,n\n0,1\n", "counts"),
    ("time,counts\n0,1\n", "delay_ps"),
    ("delay_ps,counts\n0,1\n100,-2\n", "negative"),
    ("delay_ps,counts\n0,x\n", "malformed"),
    ("# bin_width_ps=100\n", "header"),
])
def test_histogram_read_errors(tmp_path, text, fragment):
    f = tmp_path / "h.csv"
    f.write_text(text)
    with pytest.raises(io.FormatError, match=fragment):
        io.read_histogram(f)


def _result():
    x = np.linspace(0, 1, 20)
    y = 1 / 3 + np.pi * x + 0.01 * np.sin(40 * x)
    prob = FitProblem(lambda v, t: v["a"] * t + v["b"], x, y, np.ones_like(x),
                      [Parameter("a", 1.0), Parameter("b", 0.0), Parameter("c", 2.0, fixed=True)])
    return least_squares(prob)


def test_fit_report_round_trip(tmp_path):
    res = _result()
    ctx = {"model": {"form": "product"}, "normalization": {"scheme": "wing_mean"}, "seed": 7, "tag": "x"}
    text = io.write_fit_report(res, tmp_path / "r.json", "g2", ctx)
    doc = io.read_fit_report(tmp_path / "r.json")
    assert json.loads(text) == doc
    assert doc["converged"] is True and doc["kind"] == "g2" and doc["seed"] == 7
    for name in res.names:
        assert doc["parameters"][name]["value"] == res.values[name]
        assert doc["parameters"][name]["uncertainty"] == res.errors[name]
    assert doc["parameters"]["c"]["fixed"] is True
    assert np.array_equal(np.array(doc["covariance"]["matrix"]), res.covariance)
    assert doc["chi2"] == res.chi2 and doc["dof"] == res.dof
    assert doc["tool"]["name"] == "qdphoton" and "version" in doc["tool"]
    assert doc["model"] == {"form": "product"} and doc["context"] == {"tag": "x"}


def test_fidelity_block_iff_cascade():
    res = _result()
    assert "fidelity" not in io.fit_report(res, "g2")
    fid = {"phase_tracked": {"value": 0.73, "uncertainty": 0.01}}
    assert io.fit_report(res, "cascade", fidelity=fid)["fidelity"] == fid
    res.derived = {"fidelity": fid}
    assert io.fit_report(res, "cascade")["fidelity"] == fid
    with pytest.raises(ValueError):
        io.fit_report(res, "g2", fidelity=fid)
    res.derived = {}
    with pytest.raises(ValueError):
        io.fit_report(res, "cascade")


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_encoding_exact(x):
    assert json.loads(io.dumps({"v": x}))["v"] == x


def test_read_fit_report_errors(tmp_path):
    f = tmp_path / "r.json"
    f.write_text("{not json")
    with pytest.raises(io.FormatError):
        io.read_fit_report(f)
    f.write_text('{"kind": "g2"}')
    with pytest.raises(io.FormatError, match="parameters"):
        io.read_fit_report(f)
