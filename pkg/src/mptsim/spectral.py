"""Spectral mode extraction: PSD estimation, resonance fits, tracking, ringdowns.

Trajectories come out of the simulator as clean, uniformly sampled series;
this module turns them into the quantities the experiment reports: mode
center frequencies with Lorentzian linewidths, frequency-vs-parameter
traces that stay locked to one mode across a sweep, and quality factors
from exponential ringdowns.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import welch, hilbert

from .errors import (FitConvergenceError, NoPeakError, NonDecayingError,
                     TooShortTraceError)

SNR_MIN = 3.0
WINDOW_WIDTH_FACTOR = 10.0   # tracking window = 10x last linewidth ...
WINDOW_MIN_BINS = 8          # ... but never narrower than 8 bins

STATUS_OK = "ok"
STATUS_LOST = "lost"

_SCALINGS = {
    "inverse": lambda p: 1.0 / p,
    "linear": lambda p: p,
    "sqrt": math.sqrt,
    "none": lambda p: 1.0,
}


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectral density on a uniform frequency grid."""
    frequencies: np.ndarray
    psd: np.ndarray
    resolution: float

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.frequencies, self.psd]),
                   delimiter=",", comments="", header="f_hz,psd", fmt="%.12e")

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        f = data[:, 0]
        df = np.diff(f)
        if f.size < 2 or np.any(df <= 0) or np.ptp(df) > 1e-6 * df[0]:
            raise ValueError("spectrum frequency axis must be uniform, increasing")
        return cls(frequencies=f, psd=data[:, 1], resolution=float(df[0]))


@dataclass(frozen=True)
class ModeFit:
    """One fitted resonance: center, FWHM, peak height, fit quality, window."""
    f0: float
    width: float
    amplitude: float
    residual: float
    window: tuple


@dataclass(frozen=True)
class RingdownFit:
    """Exponential decay of one mode; q is pi * f * tau by definition."""
    tau: float
    f: float
    q: float
    residual: float


def power_spectrum(trace, sample_rate, segment_length=None,
                   overlap_fraction=0.5) -> Spectrum:
    """Averaged-periodogram PSD (Hann taper), one-sided, density scaling.

    Satisfies Parseval: sum(psd) * resolution matches the trace variance.
    Default segment length is a quarter of the trace.
    """
    trace = np.asarray(trace, dtype=float)
    if segment_length is None:
        segment_length = max(16, trace.size // 4)
    if not (0.0 <= overlap_fraction < 1.0):
        raise ValueError("overlap_fraction must be in [0, 1)")
    if segment_length < 16 or trace.size < segment_length:
        raise TooShortTraceError(
            "need trace length >= segment length >= 16 samples "
            "(got %d and %d)" % (trace.size, segment_length))
    f, psd = welch(trace, fs=sample_rate, window="hann",
                   nperseg=segment_length,
                   noverlap=int(overlap_fraction * segment_length),
                   detrend="constant", scaling="density")
    return Spectrum(frequencies=f, psd=psd, resolution=float(f[1] - f[0]))


def _lorentzian(f, a, f0, w, offset):
    return a * (0.5 * w) ** 2 / ((f - f0) ** 2 + (0.5 * w) ** 2) + offset


def fit_lorentzian(spec: Spectrum, window) -> ModeFit:
    """Least-squares Lorentzian fit inside [f_lo, f_hi].

    Initialized from the maximum bin and its half-maximum crossings.
    Rejects windows whose maximum sits on the edge or whose peak rises
    less than SNR_MIN times the local floor above it.
    """
    f_lo, f_hi = window
    mask = (spec.frequencies >= f_lo) & (spec.frequencies <= f_hi)
    f = spec.frequencies[mask]
    p = spec.psd[mask]
    if f.size < WINDOW_MIN_BINS:
        raise ValueError("window [%g, %g] Hz contains %d bins, need >= %d"
                         % (f_lo, f_hi, f.size, WINDOW_MIN_BINS))

    k = int(np.argmax(p))
    if k == 0 or k == f.size - 1:
        raise NoPeakError("maximum at the window edge in [%g, %g] Hz" % window)
    floor = float(np.median(p))
    # SNR as peak excess over the window floor, in units of the floor: a
    # resonance must rise to at least (1 + SNR_MIN) times the background
    snr = (p[k] - floor) / max(floor, 1e-300)
    if snr < SNR_MIN:
        raise NoPeakError("peak SNR %.2f below %.1f in [%g, %g] Hz"
                          % (snr, SNR_MIN, f_lo, f_hi))

    # initial width from half-maximum crossings around the peak
    half = floor + 0.5 * (p[k] - floor)
    i = k
    while i > 0 and p[i] > half:
        i -= 1
    j = k
    while j < f.size - 1 and p[j] > half:
        j += 1
    w0 = max(f[j] - f[i], spec.resolution)
    p0 = (p[k] - floor, f[k], w0, floor)
    span = f[-1] - f[0]
    bounds = ([0.0, f[0], 0.1 * spec.resolution, -np.inf],
              [np.inf, f[-1], 10.0 * span, np.inf])
    try:
        popt, _ = curve_fit(_lorentzian, f, p, p0=p0, bounds=bounds,
                            maxfev=10000)
    except RuntimeError as exc:
        raise FitConvergenceError(
            "Lorentzian fit did not converge in [%g, %g] Hz" % window) from exc
    a, f0, w, offset = popt
    resid = float(np.sqrt(np.mean((_lorentzian(f, *popt) - p) ** 2)) / p[k])
    return ModeFit(f0=float(f0), width=float(w), amplitude=float(a + offset),
                   residual=resid, window=(float(f_lo), float(f_hi)))


@dataclass
class ModeTrace:
    """One mode followed across a sweep; lost points keep NaN fits."""
    name: str
    params: np.ndarray
    f0: np.ndarray
    width: np.ndarray
    amplitude: np.ndarray
    status: list

    def ok(self):
        return np.array([s == STATUS_OK for s in self.status])


def track_modes(spectra, params, initial_windows, scaling_hints=None):
    """Follow each named mode across an ordered sequence of spectra.

    `initial_windows` maps mode name to (f_lo, f_hi) in the first spectrum.
    For later spectra the window recenters on the last good fit scaled by
    the mode's hint (inverse / linear / sqrt / none in the swept parameter),
    with width 10x the last linewidth, floored at 8 bins. A fit failure
    marks the point lost without interpolation; tracking resumes from the
    scaled last-good center. When two windows converge to within the wider
    of the two, both modes are marked lost at that point rather than risk
    swapping identities.
    """
    params = np.asarray(params, dtype=float)
    if len(spectra) != params.size:
        raise ValueError("one parameter value per spectrum required")
    if scaling_hints is None:
        scaling_hints = {}
    names = list(initial_windows)
    scale_fns = {}
    for name in names:
        hint = scaling_hints.get(name, "none")
        if hint not in _SCALINGS:
            raise ValueError("unknown scaling hint %r" % hint)
        scale_fns[name] = _SCALINGS[hint]

    traces = {name: ModeTrace(name=name, params=params.copy(),
                              f0=np.full(params.size, np.nan),
                              width=np.full(params.size, np.nan),
                              amplitude=np.full(params.size, np.nan),
                              status=[STATUS_LOST] * params.size)
              for name in names}
    # last successful fit per mode: (param, f0, width)
    last = {}

    for i, spec in enumerate(spectra):
        windows = {}
        for name in names:
            if i == 0:
                windows[name] = tuple(initial_windows[name])
            elif name in last:
                p_ref, f_ref, w_ref = last[name]
                center = f_ref * scale_fns[name](params[i]) / scale_fns[name](p_ref)
                width = max(WINDOW_WIDTH_FACTOR * w_ref,
                            WINDOW_MIN_BINS * spec.resolution)
                windows[name] = (center - 0.5 * width, center + 0.5 * width)
            else:
                windows[name] = None

        # merge guard: overlapping windows would let two modes claim one peak
        merged = set()
        live = [n for n in names if windows[n] is not None]
        for a in range(len(live)):
            for b in range(a + 1, len(live)):
                wa, wb = windows[live[a]], windows[live[b]]
                ca, cb = 0.5 * (wa[0] + wa[1]), 0.5 * (wb[0] + wb[1])
                if abs(ca - cb) < max(wa[1] - wa[0], wb[1] - wb[0]):
                    merged.add(live[a])
                    merged.add(live[b])

        for name in names:
            if windows[name] is None or name in merged:
                continue
            try:
                fit = fit_lorentzian(spec, windows[name])
            except (NoPeakError, FitConvergenceError, ValueError):
                if i == 0:
                    raise
                continue
            tr = traces[name]
            tr.f0[i] = fit.f0
            tr.width[i] = fit.width
            tr.amplitude[i] = fit.amplitude
            tr.status[i] = STATUS_OK
            last[name] = (params[i], fit.f0, fit.width)
    return traces


def write_mode_traces_csv(path, traces):
    """All traces in one CSV: param,f0_hz,width_hz,amplitude,status."""
    with open(path, "w") as fh:
        fh.write("mode,param,f0_hz,width_hz,amplitude,status\n")
        for name in sorted(traces):
            tr = traces[name]
            for i in range(tr.params.size):
                fh.write("%s,%.12e,%.12e,%.12e,%.12e,%s\n" % (
                    name, tr.params[i], tr.f0[i], tr.width[i],
                    tr.amplitude[i], tr.status[i]))


def _dominant_frequency(x, sample_rate):
    """FFT-peak frequency with parabolic interpolation (internal seed)."""
    x = x - x.mean()
    spec = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
    k = int(np.argmax(spec[1:])) + 1
    if 0 < k < spec.size - 1:
        a, b, c = spec[k - 1], spec[k], spec[k + 1]
        denom = a - 2.0 * b + c
        if denom != 0.0:
            k = k + 0.5 * (a - c) / denom
    return k * sample_rate / x.size


def fit_ringdown(trace, sample_rate, envelope_only=False) -> RingdownFit:
    """Fit a decaying oscillation a*exp(-t/tau)*cos(2 pi f t + phi) + c.

    With envelope_only=True only the analytic-signal envelope is fitted
    (phase-free, for averaged signals); f still comes from the spectrum.
    Raises for traces shorter than 10 cycles and for fits whose decay time
    exceeds 100x the trace span (no decay resolvable).
    """
    x = np.asarray(trace, dtype=float)
    if x.size < 32:
        raise TooShortTraceError("ringdown trace too short (%d samples)" % x.size)
    t = np.arange(x.size) / sample_rate
    span = t[-1]
    f_seed = _dominant_frequency(x, sample_rate)
    if f_seed * span < 10.0:
        raise TooShortTraceError(
            "ringdown trace spans %.1f cycles at %.3g Hz, need >= 10"
            % (f_seed * span, f_seed))

    c_seed = float(x.mean())
    env = np.abs(hilbert(x - c_seed))
    # decay seed from a log-linear fit of the envelope core (clip the
    # Hilbert edge artifacts)
    m = slice(x.size // 20, -max(1, x.size // 20))
    pos = env[m] > 1e-300
    slope, icpt = np.polyfit(t[m][pos], np.log(env[m][pos]), 1)
    tau_seed = -1.0 / slope if slope < 0 else 100.0 * span
    a_seed = math.exp(icpt)

    try:
        if envelope_only:
            def model(tt, a, tau, c):
                return a * np.exp(-tt / tau) + c
            popt, _ = curve_fit(model, t[m], env[m],
                                p0=(a_seed, min(tau_seed, 50.0 * span), 0.0),
                                maxfev=20000)
            a_fit, tau, c_fit = popt
            resid = float(np.sqrt(np.mean((model(t[m], *popt) - env[m]) ** 2))
                          / max(abs(a_fit), 1e-300))
            f = f_seed
        else:
            # carrier phase seed by demodulating at the seed frequency
            zmix = (x - c_seed) * np.exp(-2j * math.pi * f_seed * t)
            phi_seed = float(np.angle(zmix.sum()))

            def model(tt, a, tau, f, phi, c):
                return a * np.exp(-tt / tau) * np.cos(2.0 * math.pi * f * tt + phi) + c
            popt, _ = curve_fit(
                model, t, x,
                p0=(a_seed, min(tau_seed, 50.0 * span), f_seed, phi_seed, c_seed),
                maxfev=20000)
            a_fit, tau, f, phi, c_fit = popt
            resid = float(np.sqrt(np.mean((model(t, *popt) - x) ** 2))
                          / max(abs(a_fit), 1e-300))
    except RuntimeError as exc:
        raise FitConvergenceError("ringdown fit did not converge") from exc

    if not (0.0 < tau <= 100.0 * span):
        raise NonDecayingError(
            "fitted decay time %.3g s not resolvable on a %.3g s trace"
            % (tau, span))
    f = abs(float(f))
    tau = float(tau)
    return RingdownFit(tau=tau, f=f, q=math.pi * f * tau, residual=resid)


def q_factor(f, tau):
    """Quality factor of a mode at frequency f [Hz] with decay time tau [s]."""
    return math.pi * f * tau
