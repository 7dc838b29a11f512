import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regimekit import indicators as ind
from regimekit.data import PriceSeries
from regimekit.errors import InvalidSpans, InvertedSwing, LengthMismatch, WindowExceedsSeries
from regimekit.signals import crossing_flags

from conftest import random_prices
from oracles import naive_ema, naive_sma, naive_std, naive_wilder

SEEDS = st.integers(0, 100_000)


def close_only(values):
    d = np.busday_offset(np.datetime64("2020-01-02"), np.arange(len(values)), roll="forward")
    return PriceSeries("x", d, np.asarray(values, dtype=float))


def assert_close(a, b, tol=1e-10):
    a, b = np.asarray(a), np.asarray(b)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_allclose(a[~np.isnan(a)], b[~np.isnan(b)], rtol=0, atol=tol * max(1.0, np.nanmax(np.abs(b))))


def test_sma_examples():
    np.testing.assert_array_equal(ind.sma(close_only([5.0] * 10), 4).values[3:], 5.0)
    out = ind.sma(close_only([1, 2, 3]), 2).values
    assert np.isnan(out[0]) and list(out[1:]) == [1.5, 2.5]
    with pytest.raises(WindowExceedsSeries):
        ind.sma(close_only([1, 2]), 3)
    p = random_prices(0, 1000)
    assert_close(ind.sma(p, 50).values, naive_sma(p.close.tolist(), 50))


def test_ema_examples():
    np.testing.assert_array_equal(ind.ema(close_only([7.0] * 5), 3).values, 7.0)
    assert list(ind.ema(close_only([10, 20]), 3).values) == [10.0, 15.0]
    p = random_prices(1, 500)
    assert_close(ind.ema(p, 10).values, naive_ema(p.close.tolist(), 10), 1e-12)


def test_tma_examples():
    np.testing.assert_allclose(ind.triangular_ma(close_only([3.0] * 40), 10).values[10:], 3.0)
    ramp = close_only(np.arange(1, 301) * 0.5 + 10)
    tma = ind.triangular_ma(ramp, 20)
    defined = tma.values[tma.defined]
    np.testing.assert_allclose(np.diff(defined), 0.5, atol=1e-12)
    long = ind.triangular_ma(random_prices(2, 300), 250)
    first = (250 + 2) // 2 - 1 + (250 // 2 + 1) - 1
    assert long.warmup == first == 250
    assert np.isnan(long.values[first - 1]) and not np.isnan(long.values[first])
    with pytest.raises(WindowExceedsSeries):
        ind.triangular_ma(random_prices(2, 200), 250)


def test_tma_is_sma_of_sma():
    p = random_prices(3, 400)
    for n in (2, 7, 10, 51):
        a = (n + 2) // 2
        b = n // 2 + 1
        x = p.close.tolist()
        inner = naive_sma(x, a)
        outer = np.full(len(x), np.nan)
        for t in range(a - 1 + b - 1, len(x)):
            outer[t] = np.mean(inner[t - b + 1:t + 1])
        assert_close(ind.triangular_ma(p, n).values, outer)


def naive_atr(p, n):
    tr = []
    for t in range(1, len(p)):
        prev = p.close[t - 1]
        if np.isnan(p.high[t]) or np.isnan(p.low[t]):
            tr.append(abs(p.close[t] - prev))
        else:
            tr.append(max(p.high[t], prev) - min(p.low[t], prev))
    return np.r_[np.nan, naive_wilder(tr, n, 0)]


def test_atr_examples():
    flat = ind.atr(close_only([50.0] * 30), 5)
    np.testing.assert_array_equal(flat.values[5:], 0.0)
    small = ind.atr(close_only([100, 102, 99]), 2)
    np.testing.assert_array_equal(ind.true_range(close_only([100, 102, 99])), [2.0, 3.0])
    assert small.values[2] == 2.5 and np.isnan(small.values[1])
    p = random_prices(4, 300)
    assert_close(ind.atr(p, 20).values, naive_atr(p, 20))
    with pytest.raises(WindowExceedsSeries):
        ind.atr(close_only([1, 2, 3]), 3)


def test_keltner_examples():
    p = close_only([100.0] * 5)
    ma = ind.IndicatorSeries(p.dates, np.full(5, 100.0))
    two = ind.IndicatorSeries(p.dates, np.full(5, 2.0))
    band = ind.keltner(p, ma, two, 1.0)
    assert (band.lower.values[0], band.middle.values[0], band.upper.values[0]) == (98.0, 100.0, 102.0)
    zero = ind.keltner(p, ma, two * 0.0, 1.0)
    np.testing.assert_array_equal(zero.lower.values, zero.upper.values)
    with pytest.raises(LengthMismatch):
        ind.keltner(p, ma, ind.IndicatorSeries(None, np.ones(4)), 1.0)


def test_bollinger_examples():
    flat = ind.bollinger(close_only([4.0] * 30), 20, 1.5)
    np.testing.assert_array_equal(flat.lower.values[19:], flat.upper.values[19:])
    two = ind.bollinger(close_only([1, 3]), 2, 1.0)
    assert (two.lower.values[1], two.middle.values[1], two.upper.values[1]) == (1.0, 2.0, 3.0)
    p = random_prices(5, 400)
    band = ind.bollinger(p, 20, 1.5)
    x = p.close.tolist()
    mid, sd = naive_sma(x, 20), naive_std(x, 20)
    assert_close(band.middle.values, mid)
    assert_close(band.upper.values, mid + 1.5 * sd)
    assert_close(band.lower.values, mid - 1.5 * sd)


def naive_rsi(x, n):
    d = np.diff(x)
    g = naive_wilder(np.clip(d, 0, None).tolist(), n, 0)
    l = naive_wilder(np.clip(-d, 0, None).tolist(), n, 0)
    out = np.full(len(x), np.nan)
    for t in range(n, len(x)):
        gg, ll = g[t - 1], l[t - 1]
        out[t] = (50.0 if gg == 0 else 100.0) if ll == 0 else 100 - 100 / (1 + gg / ll)
    return out


def test_rsi_examples():
    up = ind.rsi(close_only(np.arange(1.0, 40.0)), 14)
    np.testing.assert_array_equal(up.values[14:], 100.0)
    down = ind.rsi(close_only(np.arange(40.0, 1.0, -1.0)), 14)
    np.testing.assert_array_equal(down.values[14:], 0.0)
    alt = close_only(100 + np.tile([0.0, 1.0], 300))
    values = ind.rsi(alt, 14).values[-100:]
    assert np.mean(values) == pytest.approx(50.0, abs=1e-6)
    assert np.all(np.abs(values - 50.0) <= 100 * 14 / 27 - 50 + 1e-9)
    p = random_prices(6, 300)
    assert_close(ind.rsi(p, 14).values, naive_rsi(p.close, 14))


def test_macd_examples():
    line, sig, hist = ind.macd(close_only([9.0] * 60))
    for s in (line, sig, hist):
        np.testing.assert_allclose(s.values, 0.0, atol=1e-12)
    with pytest.raises(InvalidSpans):
        ind.macd(close_only([1.0] * 60), 12, 12, 9)
    p = random_prices(7, 300)
    x = p.close.tolist()
    ref_line = naive_ema(x, 12) - naive_ema(x, 26)
    ref_sig = naive_ema(ref_line.tolist(), 9)
    line, sig, hist = ind.macd(p)
    assert_close(line.values, ref_line)
    assert_close(sig.values, ref_sig)
    assert_close(hist.values, ref_line - ref_sig)


def test_swing_examples():
    inc = close_only(np.arange(1.0, 100.0))
    hi, lo = ind.swing_extremes(inc, 10)
    np.testing.assert_array_equal(hi.values[9:], inc.close[9:])
    flat = close_only([3.0] * 20)
    hi, lo = ind.swing_extremes(flat, 5)
    np.testing.assert_array_equal(hi.values[4:], lo.values[4:])
    p = random_prices(8, 300)
    hi, lo = ind.swing_extremes(p, 60)
    ref_hi = [np.nan] * 59 + [max(p.close[t - 59:t + 1]) for t in range(59, 300)]
    ref_lo = [np.nan] * 59 + [min(p.close[t - 59:t + 1]) for t in range(59, 300)]
    assert_close(hi.values, ref_hi)
    assert_close(lo.values, ref_lo)


def test_fib_examples():
    levels = ind.fib_levels(0.0, 100.0)
    np.testing.assert_allclose([levels[r] for r in ind.FIB_RATIOS], [76.4, 61.8, 50.0, 38.2, 0.0], atol=1e-12)
    assert len(set(ind.fib_levels(5.0, 5.0).values())) == 1
    assert ind.fib_levels(50.0, 150.0)[0.382] == pytest.approx(111.8, abs=1e-12)
    with pytest.raises(InvertedSwing):
        ind.fib_levels(2.0, 1.0)
    p = random_prices(9, 200)
    hi, lo = ind.swing_extremes(p, 60)
    fib = ind.fib_series(hi, lo, 0.618)
    t = 150
    assert fib.values[t] == pytest.approx(ind.fib_levels(lo.values[t], hi.values[t])[0.618], abs=1e-12)


def test_warmups_are_nan_not_zero():
    p = random_prices(10, 100)
    for series in (ind.sma(p, 10), ind.atr(p, 10), ind.rsi(p, 10), ind.bollinger(p, 10).upper):
        assert np.all(np.isnan(series.values[:series.warmup]))
        assert np.all(np.isfinite(series.values[series.warmup:]))


def all_price_unit(p):
    band = ind.bollinger(p, 20, 1.5)
    hi, lo = ind.swing_extremes(p, 60)
    tma = ind.triangular_ma(p, 40)
    a = ind.atr(p, 20)
    kel = ind.keltner(p, tma, a, 1.0)
    return {
        "sma": ind.sma(p, 15).values,
        "ema": ind.ema(p, 10).values,
        "tma": tma.values,
        "bb_mid": band.middle.values,
        "kel_mid": kel.middle.values,
        "swing_hi": hi.values,
        "swing_lo": lo.values,
        "fib": ind.fib_series(hi, lo, 0.382).values,
    }


def widths(p):
    band = ind.bollinger(p, 20, 1.5)
    return {"atr": ind.atr(p, 20).values, "bb_width": band.upper.values - band.lower.values}


def shifted(p, c):
    opt = {k: getattr(p, k) + c for k in ("open", "high", "low")}
    return PriceSeries(p.symbol, p.dates, p.close + c, **opt)


def scaled(p, lam):
    opt = {k: getattr(p, k) * lam for k in ("open", "high", "low")}
    return PriceSeries(p.symbol, p.dates, p.close * lam, **opt)


@settings(max_examples=100, deadline=None)
@given(SEEDS)
def test_naive_oracles_on_random_series(seed):
    p = random_prices(seed, 160, ohlc=bool(seed % 2))
    x = p.close.tolist()
    assert_close(ind.sma(p, 20).values, naive_sma(x, 20))
    assert_close(ind.ema(p, 10).values, naive_ema(x, 10))
    assert_close(ind.atr(p, 20).values, naive_atr(p, 20))
    assert_close(ind.rsi(p, 14).values, naive_rsi(p.close, 14))
    band = ind.bollinger(p, 20, 1.5)
    assert_close(band.upper.values, naive_sma(x, 20) + 1.5 * naive_std(x, 20))


@settings(max_examples=100, deadline=None)
@given(SEEDS, st.floats(1.0, 500.0))
def test_shift_equivariance(seed, c):
    p = random_prices(seed, 160)
    q = shifted(p, c)
    base, moved = all_price_unit(p), all_price_unit(q)
    for key in base:
        assert_close(moved[key], base[key] + c, 1e-9)
    w0, w1 = widths(p), widths(q)
    for key in w0:
        np.testing.assert_allclose(w1[key], w0[key], atol=1e-8, equal_nan=True)
    # MACD is shift-invariant, so its signal crossings are too
    l0, s0, _ = ind.macd(p)
    l1, s1, _ = ind.macd(q)
    np.testing.assert_allclose(l1.values, l0.values, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(SEEDS, st.floats(0.01, 100.0))
def test_scale_equivariance(seed, lam):
    p = random_prices(seed, 160)
    q = scaled(p, lam)
    base, moved = all_price_unit(p), all_price_unit(q)
    for key in base:
        assert_close(moved[key], base[key] * lam, 1e-9)
    for key, v in widths(p).items():
        assert_close(widths(q)[key], v * lam, 1e-9)
    np.testing.assert_allclose(ind.rsi(q).values, ind.rsi(p).values, atol=1e-8, equal_nan=True)


@settings(max_examples=100, deadline=None)
@given(SEEDS, st.floats(0.5, 3.0), st.integers(2, 40))
def test_band_ordering(seed, k, n):
    p = random_prices(seed, 200)
    for band in (ind.bollinger(p, n, k), ind.keltner(p, ind.triangular_ma(p, n), ind.atr(p, n), k)):
        ok = band.middle.defined & band.lower.defined & band.upper.defined
        assert np.all(band.lower.values[ok] <= band.middle.values[ok])
        assert np.all(band.middle.values[ok] <= band.upper.values[ok])


def test_rsi_crossing_dates_shift_invariant_for_macd_threshold_free_subjects():
    p = random_prices(12, 300)
    q = shifted(p, 50.0)
    l0, s0, _ = ind.macd(p)
    l1, s1, _ = ind.macd(q)
    a0, b0 = crossing_flags(l0.values, s0.values)
    a1, b1 = crossing_flags(l1.values, s1.values)
    assert (a0 == a1).mean() > 0.99 and (b0 == b1).mean() > 0.99


def test_indicator_csv(tmp_path):
    p = random_prices(13, 30)
    ind.write_indicator_csv(ind.sma(p, 5), tmp_path / "sma.csv")
    lines = (tmp_path / "sma.csv").read_text().splitlines()
    assert lines[0] == "date,value" and lines[1].endswith(",") and len(lines) == 31
    ind.write_indicator_csv(ind.bollinger(p, 5), tmp_path / "bb.csv")
    assert (tmp_path / "bb.csv").read_text().splitlines()[0] == "date,lower,middle,upper"
