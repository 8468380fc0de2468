"""Fundamental-frequency estimation and harmonic envelope extraction.

A measured channel ``x(t)`` is split into harmonic components ``x_n(t)``
with a bank of linear-phase FIR filters centred at ``n * omega_hat``; each
component's analytic signal then gives a slowly varying amplitude and phase,
and from those the envelope pair ``b_n, c_n`` with

    x(t) ~ a_0(t) + sum_n b_n(t) cos(n w t) + c_n(t) sin(n w t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import firwin

from . import kernels
from .errors import BandOutOfRange, DegenerateInput, OutOfValidRange, SpectrumFlat, TooShort
from .series import MIN_SAMPLES, TimeSeries

DEFAULT_FILTER_PERIODS = 8
MAX_ORDER = 5
ZERO_PAD = 8


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    center: float
    width: float
    dt: float

    @property
    def group_delay(self):
        return (len(self.taps) - 1) // 2

    def response(self, omega):
        """Complex frequency response at angular frequencies ``omega`` (zero-phase)."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        n = np.arange(len(self.taps)) - self.group_delay
        return np.exp(-1j * np.outer(omega * self.dt, n)) @ self.taps


@dataclass
class HarmonicEnvelope:
    """Slow envelope of one harmonic order on the full sample grid.

    For order 0, ``amplitude`` holds ``a_0(t)`` directly and ``phase``, ``b``,
    ``c`` are None.
    """

    order: int
    amplitude: np.ndarray
    phase: np.ndarray | None = None
    b: np.ndarray | None = None
    c: np.ndarray | None = None
    valid: tuple = (0, 0)


@dataclass
class HarmonicDecomposition:
    omega_hat: float
    orders: list
    envelopes: dict
    valid_range: tuple
    t0: float
    dt: float
    channel: int = 0

    @property
    def times(self):
        n = len(next(iter(self.envelopes.values())).amplitude)
        return self.t0 + self.dt * np.arange(n)

    def coefficient(self, name, n=0):
        """Envelope series ``a`` (order 0), ``b`` or ``c`` of order ``n``."""
        if n not in self.envelopes:
            return np.zeros_like(self.times)
        env = self.envelopes[n]
        if name == "a":
            return env.amplitude if n == 0 else np.zeros_like(env.amplitude)
        return getattr(env, name) if n > 0 else np.zeros_like(env.amplitude)


@dataclass
class Component:
    """Band-limited component with the index range unaffected by filter edges."""

    values: np.ndarray
    order: int
    valid: tuple


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DegenerateInput("series contains non-finite values")
    return x


def _spectrum(x, dt, remove_mean):
    x = _check_finite(x)
    if remove_mean:
        x = x - x.mean()
    win = np.hanning(len(x))
    nfft = ZERO_PAD * len(x)
    mag = np.abs(np.fft.rfft(x * win, n=nfft))
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, d=dt)
    return freqs, mag


def estimate_fundamental(ts: TimeSeries, channel=0):
    """Angular frequency of the dominant spectral peak.

    Hann-windowed, zero-padded FFT of the mean-removed channel; the peak is
    refined by a parabola through the log-magnitudes of the peak bin and its
    neighbours.
    """
    x = ts.channel(channel)
    if len(x) < MIN_SAMPLES:
        raise DegenerateInput(f"need at least {MIN_SAMPLES} samples")
    xc = x - x.mean()
    if np.max(np.abs(xc)) <= 1e-12 * max(1.0, np.max(np.abs(x))):
        raise DegenerateInput("series is constant")
    freqs, mag = _spectrum(x, ts.dt, remove_mean=True)
    # skip the Hann main lobe around DC
    lo = 2 * ZERO_PAD + 1
    if len(mag) <= lo + 2:
        raise DegenerateInput("series too short for spectral estimate")
    band = mag[lo:]
    k = int(np.argmax(band)) + lo
    if band.max() < 10 * np.median(mag[1:]):
        raise SpectrumFlat("no dominant spectral peak")
    if 0 < k < len(mag) - 1:
        la, lb, lc = np.log(mag[k - 1: k + 2] + 1e-300)
        denom = la - 2 * lb + lc
        shift = 0.5 * (la - lc) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    step = freqs[1] - freqs[0]
    return float(freqs[k] + shift * step)


def band_magnitudes(ts: TimeSeries, channel, omega_hat, max_order=MAX_ORDER):
    """Spectral magnitude integrated over ``n*w +- w/8`` for n = 0..max_order.

    Order 0 integrates the DC band ``[0, w/8)``. Bands beyond Nyquist are
    omitted.
    """
    freqs, mag = _spectrum(ts.channel(channel), ts.dt, remove_mean=False)
    step = freqs[1] - freqs[0]
    half = omega_hat / 8
    nyq = math.pi / ts.dt
    out = {}
    for n in range(max_order + 1):
        lo, hi = (0.0, half) if n == 0 else (n * omega_hat - half, n * omega_hat + half)
        if hi >= nyq:
            break
        sel = (freqs >= lo) & (freqs < hi)
        out[n] = float(mag[sel].sum() * step)
    return out


def detect_harmonics(ts: TimeSeries, channel, omega_hat, rel_threshold=0.01):
    """Harmonic orders whose band magnitude exceeds ``rel_threshold`` of order 1."""
    mags = band_magnitudes(ts, channel, omega_hat)
    ref = mags[1]
    orders = [n for n, m in mags.items() if n == 1 or m > rel_threshold * ref]
    return sorted(orders)


def design_bandpass(center, width, dt, periods=DEFAULT_FILTER_PERIODS, fundamental=None):
    """Hamming-windowed FIR bandpass (lowpass when ``center == 0``).

    The filter spans ``periods`` periods of ``fundamental`` (default
    ``4 * width``, i.e. the width is a quarter of the fundamental), rounded to
    an odd tap count, and is scaled to unit gain at the passband centre.
    """
    nyq = math.pi / dt
    if width <= 0:
        raise BandOutOfRange("width must be positive")
    if center < 0 or center + width / 2 >= nyq:
        raise BandOutOfRange(f"band {center}+-{width / 2} exceeds Nyquist {nyq:.6g}")
    if periods < 4:
        raise BandOutOfRange("filter must span at least 4 periods")
    fundamental = 4 * width if fundamental is None else fundamental
    ntaps = int(round(periods * 2 * math.pi / fundamental / dt))
    ntaps += 1 - ntaps % 2
    if center == 0:
        taps = firwin(ntaps, width / 2, window="hamming", fs=2 * nyq)
    else:
        lo = center - width / 2
        taps = firwin(ntaps, [lo, center + width / 2], window="hamming", pass_zero=False,
                      fs=2 * nyq)
    return FirFilter(np.asarray(taps), float(center), float(width), float(dt))


def _apply(filt: FirFilter, x):
    # full convolution shifted by the integer group delay: zero-phase output
    y = np.convolve(x, filt.taps, mode="full")
    gd = filt.group_delay
    return y[gd: gd + len(x)]


def bandpass_extract(ts: TimeSeries, channel, n, omega_hat, periods=DEFAULT_FILTER_PERIODS):
    """Isolate harmonic ``n`` (``n = 0``: the slow mean) of one channel."""
    x = ts.channel(channel)
    filt = design_bandpass(n * omega_hat, omega_hat / 4, ts.dt, periods, fundamental=omega_hat)
    gd = filt.group_delay
    valid = (gd, len(x) - gd)
    if valid[1] - valid[0] < 4 * (2 * math.pi / omega_hat) / ts.dt:
        raise TooShort("fewer than 4 fundamental periods remain after filtering")
    return Component(_apply(filt, x), n, valid)


def hilbert_analytic(x):
    """Analytic signal ``x + i H[x]`` by the one-sided spectrum construction."""
    x = _check_finite(x)
    if x.ndim != 1 or len(x) < MIN_SAMPLES:
        raise DegenerateInput(f"need a 1-D series of at least {MIN_SAMPLES} samples")
    n = len(x)
    spec = np.fft.fft(x)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1: n // 2] = 2.0
    else:
        gain[1: (n + 1) // 2] = 2.0
    return np.fft.ifft(spec * gain)


def half_period_samples(omega_hat, dt):
    """Samples needed on each side of a point for a one-period window."""
    return int(math.ceil(math.pi / (omega_hat * dt) - 1e-9))


def period_average(x, omega_hat, dt):
    """Centred average of ``x`` over exactly one period ``2 pi / omega_hat``.

    Composite trapezoid over the whole samples inside the window plus a
    linearly interpolated end piece on each side for the fractional
    remainder. Returns a full-length array, NaN where the window does not
    fit.
    """
    x = np.asarray(x, dtype=float)
    half = math.pi / (omega_hat * dt)
    h = int(math.floor(half + 1e-9))
    frac = max(half - h, 0.0)
    margin = half_period_samples(omega_hat, dt)
    out = np.full(len(x), np.nan)
    n_out = len(x) - 2 * margin
    if n_out <= 0:
        return out
    core = kernels.sliding_trapezoid(x, h)  # centres h .. N-h-1
    c0 = margin - h
    total = core[c0: c0 + n_out]
    if frac > 0:
        i = np.arange(margin, margin + n_out)
        for inner, outer in ((x[i + h], x[i + h + 1]), (x[i - h], x[i - h - 1])):
            total = total + frac * (inner + 0.5 * frac * (outer - inner))
    out[margin: margin + n_out] = total / (2 * half)
    return out


def moving_average(x, h):
    """Centred trapezoid average over ``2h+1`` samples; length shrinks by ``2h``."""
    return kernels.sliding_trapezoid(x, h) / (2 * h)


def extract_envelope(x_n, n, omega_hat, dt, valid=None, t0=0.0):
    """Slow amplitude, phase and (b, c) envelopes of a harmonic component.

    ``x_n`` is a component array or a :class:`Component`. The phase is
    referred to ``sin(n w t)`` so that ``x_n ~ A sin(n w t + phase)``.
    """
    if isinstance(x_n, Component):
        valid = x_n.valid if valid is None else valid
        x_n = x_n.values
    x_n = _check_finite(x_n)
    if n < 1:
        raise ValueError("extract_envelope handles orders >= 1")
    valid = (0, len(x_n)) if valid is None else valid
    h = half_period_samples(omega_hat, dt)
    lo, hi = valid[0] + h, valid[1] - h
    if hi - lo < 4 * 2 * h:
        raise TooShort("fewer than 4 fundamental periods remain for the envelope")
    t = t0 + dt * np.arange(len(x_n))
    amp = np.full(len(x_n), np.nan)
    phase = np.full(len(x_n), np.nan)
    seg = slice(valid[0], valid[1])
    z = hilbert_analytic(x_n)
    inst_amp = np.abs(z[seg])
    inst_phase = np.unwrap(np.angle(z[seg]))
    amp[seg] = period_average(inst_amp, omega_hat, dt)
    phase[seg] = period_average(inst_phase, omega_hat, dt)
    amp[:lo] = amp[hi:] = phase[:lo] = phase[hi:] = np.nan
    phase[lo:hi] -= n * omega_hat * t[lo:hi] - math.pi / 2
    b = amp * np.sin(phase)
    c = amp * np.cos(phase)
    return HarmonicEnvelope(n, amp, phase, b, c, (lo, hi))


def decompose(ts: TimeSeries, channel=0, orders=None, omega_hat=None,
              periods=DEFAULT_FILTER_PERIODS):
    """Fundamental, harmonic orders and slow envelopes of one channel."""
    if omega_hat is None:
        omega_hat = estimate_fundamental(ts, channel)
    if orders is None:
        orders = detect_harmonics(ts, channel, omega_hat)
    orders = sorted(set(int(o) for o in orders))
    if any(o < 0 for o in orders):
        raise ValueError("harmonic orders must be non-negative")
    envelopes = {}
    n_samples = ts.n_samples
    h = half_period_samples(omega_hat, ts.dt)
    lo, hi = 0, n_samples
    for n in orders:
        comp = bandpass_extract(ts, channel, n, omega_hat, periods)
        if n == 0:
            a0 = np.full(n_samples, np.nan)
            a0[comp.valid[0]:comp.valid[1]] = comp.values[comp.valid[0]:comp.valid[1]]
            env = HarmonicEnvelope(0, a0, valid=comp.valid)
        else:
            env = extract_envelope(comp, n, omega_hat, ts.dt, t0=ts.t0)
        envelopes[n] = env
        lo = max(lo, comp.valid[0] + 2 * h)
        hi = min(hi, comp.valid[1] - 2 * h)
    if hi - lo < 4 * 2 * h:
        raise TooShort("valid range shorter than 4 fundamental periods")
    return HarmonicDecomposition(float(omega_hat), orders, envelopes, (lo, hi), ts.t0, ts.dt,
                                 channel)


def reconstruct(d: HarmonicDecomposition, t_grid):
    """Evaluate ``a_0 + sum_n b_n cos(n w t) + c_n sin(n w t)`` at ``t_grid``."""
    t_grid = np.asarray(t_grid, dtype=float)
    tv = d.t0 + d.dt * np.arange(d.valid_range[0], d.valid_range[1])
    tol = 1e-9 * d.dt
    if t_grid.size and (t_grid.min() < tv[0] - tol or t_grid.max() > tv[-1] + tol):
        raise OutOfValidRange("t_grid leaves the decomposition's valid range")
    sl = slice(d.valid_range[0], d.valid_range[1])
    out = np.zeros_like(t_grid)
    w = d.omega_hat
    for n in d.orders:
        env = d.envelopes[n]
        if n == 0:
            out += np.interp(t_grid, tv, env.amplitude[sl])
        else:
            b = np.interp(t_grid, tv, env.b[sl])
            c = np.interp(t_grid, tv, env.c[sl])
            out += b * np.cos(n * w * t_grid) + c * np.sin(n * w * t_grid)
    return out
