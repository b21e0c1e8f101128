"""Signal generation and identification: chirp excitation, windowed
correlation frequency responses, second-order-plus-delay fits, -3 dB
bandwidth extraction, peak envelopes and step metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

HALF_POWER_DB = 20.0 * math.log10(1.0 / math.sqrt(2.0))   # -3.0103 dB


class BandwidthOutOfRange(ValueError):
    """Response never crosses -3 dB inside the measured range."""


@dataclass(frozen=True)
class ChirpSpec:
    amplitude: float
    f0: float
    f1: float
    duration: float
    sample_rate: float

    def __post_init__(self):
        if not (self.f1 > self.f0 > 0):
            raise ValueError("need f1 > f0 > 0")
        if self.sample_rate < 4.0 * self.f1:
            raise ValueError(
                f"sample rate {self.sample_rate} < 4 x f1 = {4 * self.f1}"
            )

    def instantaneous_freq(self, t: np.ndarray | float):
        return self.f0 + (self.f1 - self.f0) * np.asarray(t) / self.duration

    def time_at_freq(self, f: float) -> float:
        return (f - self.f0) / (self.f1 - self.f0) * self.duration

    def phase(self, t: np.ndarray):
        t = np.asarray(t)
        return 2.0 * math.pi * (self.f0 * t + 0.5 * (self.f1 - self.f0) * t**2 / self.duration)


def chirp_signal(spec: ChirpSpec) -> tuple[np.ndarray, np.ndarray]:
    """Linear-in-time frequency sweep. Returns (t, x)."""
    n = int(round(spec.duration * spec.sample_rate)) + 1
    t = np.arange(n) / spec.sample_rate
    return t, spec.amplitude * np.sin(spec.phase(t))


@dataclass
class FrequencyResponse:
    freqs: np.ndarray          # Hz, strictly increasing
    gains_db: np.ndarray
    phases_deg: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.gains_db = np.asarray(self.gains_db, dtype=float)
        self.phases_deg = np.asarray(self.phases_deg, dtype=float)
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        if not (len(self.freqs) == len(self.gains_db) == len(self.phases_deg)):
            raise ValueError("arrays must have equal length")


def _demodulate(t, x, f, i0, i1) -> complex:
    """Hann-windowed complex correlation at frequency f over samples [i0, i1)."""
    seg_t = t[i0:i1]
    seg_x = x[i0:i1]
    w = np.hanning(len(seg_t))
    z = seg_x * w * np.exp(-2j * math.pi * f * seg_t)
    return 2.0 * np.sum(z) / np.sum(w)


def frequency_response(
    t: np.ndarray,
    u: np.ndarray,
    y: np.ndarray,
    freqs: np.ndarray,
    chirp: ChirpSpec,
    *,
    window_cycles: float = 4.0,
    min_window: float = 0.5,
    metadata: dict | None = None,
) -> FrequencyResponse:
    """Gain/phase per frequency via windowed correlation, centered where the
    chirp passes each evaluation frequency."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (len(t) == len(u) == len(y)):
        raise ValueError("signals must share one uniform time base")
    dt = t[1] - t[0]
    gains, phases = [], []
    for f in np.asarray(freqs, dtype=float):
        half = 0.5 * max(window_cycles / f, min_window)
        tc = chirp.time_at_freq(f)
        if tc - half < t[0] - 1e-12 or tc + half > t[-1] + 1e-12:
            raise ValueError(
                f"not enough record around {f:.3g} Hz for {window_cycles} cycles"
            )
        i0 = max(0, int(round((tc - half) / dt)))
        i1 = min(len(t), int(round((tc + half) / dt)) + 1)
        if (i1 - i0) * dt * f < 2.0:
            raise ValueError(f"insufficient cycles per window at {f:.3g} Hz")
        zu = _demodulate(t, u, f, i0, i1)
        zy = _demodulate(t, y, f, i0, i1)
        if abs(zu) == 0.0:
            raise ValueError(f"no excitation at {f:.3g} Hz")
        g = zy / zu
        gains.append(20.0 * math.log10(max(abs(g), 1e-12)))
        phases.append(math.degrees(math.atan2(g.imag, g.real)))
    phases = np.degrees(np.unwrap(np.radians(phases)))
    return FrequencyResponse(
        freqs=np.asarray(freqs, dtype=float),
        gains_db=np.array(gains),
        phases_deg=phases,
        metadata=metadata or {},
    )


@dataclass(frozen=True)
class SoTfDelay:
    """Second-order transfer function with a constant time delay."""

    wn: float           # rad/s
    zeta: float
    delay: float        # s
    dc_gain: float
    residual: float = 0.0
    converged: bool = True

    def __post_init__(self):
        if self.wn <= 0 or self.zeta <= 0 or self.delay < 0:
            raise ValueError("need wn > 0, zeta > 0, delay >= 0")

    def evaluate(self, freqs_hz: np.ndarray) -> np.ndarray:
        w = 2.0 * math.pi * np.asarray(freqs_hz, dtype=float)
        s = 1j * w
        g = self.dc_gain * self.wn**2 / (s**2 + 2 * self.zeta * self.wn * s + self.wn**2)
        return g * np.exp(-s * self.delay)

    def magnitude_db(self, freqs_hz):
        return 20.0 * np.log10(np.abs(self.evaluate(freqs_hz)))


def synthesize_response(model: SoTfDelay, freqs_hz: np.ndarray,
                        metadata: dict | None = None) -> FrequencyResponse:
    g = model.evaluate(freqs_hz)
    return FrequencyResponse(
        freqs=np.asarray(freqs_hz, dtype=float),
        gains_db=20.0 * np.log10(np.abs(g)),
        phases_deg=np.degrees(np.unwrap(np.angle(g))),
        metadata=metadata or {},
    )


def fit_so_tf_delay(resp: FrequencyResponse, residual_threshold_db: float = 3.0) -> SoTfDelay:
    """Least-squares fit over (log magnitude, unwrapped phase).

    Returns the fit with its residual; a residual above the threshold marks
    the fit as not converged rather than silently accepting it.
    """
    f = resp.freqs
    if len(f) < 8:
        raise ValueError("need at least 8 points to fit")
    mag_db = resp.gains_db
    ph = np.radians(resp.phases_deg)

    dc0 = 10.0 ** (mag_db[0] / 20.0)
    # first guess: wn where gain drops 3 dB below DC, delay from phase tail
    rel = mag_db - mag_db[0]
    idx = np.where(rel <= HALF_POWER_DB)[0]
    wn0 = 2.0 * math.pi * (f[idx[0]] if len(idx) else f[-1] * 0.7)
    slope = (ph[-1] - ph[-3]) / (2.0 * math.pi * (f[-1] - f[-3]))
    delay0 = max(0.0, -slope - 2.0 / wn0)

    def pack(x):
        wn, zeta, delay, k = np.exp(x[0]), np.exp(x[1]), x[2] ** 2, x[3]
        return wn, zeta, delay, k

    def resid(x):
        wn, zeta, delay, k = pack(x)
        w = 2.0 * math.pi * f
        s = 1j * w
        g = k * wn**2 / (s**2 + 2 * zeta * wn * s + wn**2) * np.exp(-s * delay)
        m = 20.0 * np.log10(np.maximum(np.abs(g), 1e-12))
        p = np.unwrap(np.angle(g))
        return np.concatenate([(m - mag_db), np.degrees(p - ph) / 20.0])

    x0 = np.array([math.log(wn0), math.log(0.5), math.sqrt(delay0 + 1e-6), dc0])
    best = None
    for zeta0 in (0.3, 0.7, 1.2):
        x0[1] = math.log(zeta0)
        sol = least_squares(resid, x0, method="lm", max_nfev=400)
        if best is None or sol.cost < best.cost:
            best = sol
    wn, zeta, delay, k = pack(best.x)
    n = len(f)
    rms_db = float(np.sqrt(np.mean(best.fun[:n] ** 2)))
    return SoTfDelay(
        wn=wn, zeta=zeta, delay=delay, dc_gain=k,
        residual=rms_db, converged=rms_db <= residual_threshold_db,
    )


def minus3db_bandwidth(resp: FrequencyResponse | SoTfDelay) -> float:
    """First frequency where the DC-normalized gain crosses half power.

    Raises BandwidthOutOfRange when there is no crossing in the record.
    """
    if isinstance(resp, SoTfDelay):
        z2 = 1.0 - 2.0 * resp.zeta**2
        u2 = z2 + math.sqrt(z2 * z2 + 1.0)
        return resp.wn * math.sqrt(u2) / (2.0 * math.pi)
    rel = resp.gains_db - resp.gains_db[0]
    below = np.where(rel <= HALF_POWER_DB)[0]
    if len(below) == 0:
        raise BandwidthOutOfRange(
            f"no -3 dB crossing up to {resp.freqs[-1]:.3g} Hz: exceeds measured range"
        )
    i = int(below[0])
    if i == 0:
        return float(resp.freqs[0])
    f0, f1 = resp.freqs[i - 1], resp.freqs[i]
    g0, g1 = rel[i - 1], rel[i]
    # interpolate on log frequency
    frac = (HALF_POWER_DB - g0) / (g1 - g0)
    return float(np.exp(np.log(f0) + frac * (np.log(f1) - np.log(f0))))


def human_reference_model() -> SoTfDelay:
    """Reconstructed human position-bandwidth comparison curve: parameters
    chosen so the half-power crossing sits at 2.3 Hz (reference data exists
    only as a published figure)."""
    zeta = 1.0
    u = math.sqrt(-1.0 + math.sqrt(2.0))
    wn = 2.0 * math.pi * 2.3 / u
    return SoTfDelay(wn=wn, zeta=zeta, delay=0.06, dc_gain=1.0)


def peak_envelope(t: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Magnitudes of local maxima of |x|, bridged by a running max-decay so
    isolated dropouts do not punch holes in the envelope."""
    t = np.asarray(t, dtype=float)
    a = np.abs(np.asarray(x, dtype=float))
    core = (a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]) & (a[1:-1] > 0)
    idx = np.where(core)[0] + 1
    if len(idx) < 2:
        raise ValueError("signal has no oscillation peaks")
    tp = t[idx]
    ep = a[idx]
    out = np.empty_like(ep)
    out[0] = ep[0]
    for i in range(1, len(ep)):
        gap = tp[i] - tp[i - 1]
        local_period = max(gap, 1e-9)
        decayed = out[i - 1] * math.exp(-2.0 * gap / local_period)
        out[i] = max(ep[i], decayed)
    return tp, out


@dataclass(frozen=True)
class StepMetrics:
    overshoot: float        # same unit as the trace (absolute overshoot)
    overshoot_pct: float
    rise_time: float        # 10 -> 90% of the step, s
    settling_time: float    # +/-5% band, s
    settled: bool


def step_metrics(t: np.ndarray, y: np.ndarray, target: float, y0: float | None = None) -> StepMetrics:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y0 is None:
        y0 = float(y[0])
    step = target - y0
    if step == 0:
        raise ValueError("zero step")
    yr = (y - y0) / step          # normalized 0 -> 1
    peak = float(np.max(yr))
    overshoot_pct = max(0.0, (peak - 1.0) * 100.0)
    overshoot = max(0.0, (peak - 1.0) * abs(step))

    above10 = np.where(yr >= 0.1)[0]
    above90 = np.where(yr >= 0.9)[0]
    if len(above90) == 0 or len(above10) == 0:
        raise ValueError("trace never reaches the target band")
    rise = float(t[above90[0]] - t[above10[0]])

    outside = np.where(np.abs(yr - 1.0) > 0.05)[0]
    if len(outside) == 0:
        settling, settled = 0.0, True
    elif outside[-1] == len(yr) - 1:
        settling, settled = float(t[-1] - t[0]), False
    else:
        settling, settled = float(t[outside[-1] + 1] - t[0]), True
    return StepMetrics(overshoot, overshoot_pct, rise, settling, settled)
