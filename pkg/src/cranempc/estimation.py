"""State estimation and periodic base-disturbance forecasting.

Velocities come from a moving average of backward finite differences.  The
platform motion is treated as periodic: its period is recovered from the
normalized autocorrelation of the pitch channel over a two-period history
window, and the forecast replays the buffer one period back with an offset
correction so the first forecast entry always matches the latest
measurement.  An aperiodic signal (no significant autocorrelation peak)
falls back to a constant-hold forecast.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .state import GeneralizedState


class InsufficientHistoryError(RuntimeError):
    pass


class NoSignificantPeakError(RuntimeError):
    """Autocorrelation shows no periodicity; caller should hold the last pose."""


class StaleStreamError(RuntimeError):
    def __init__(self, name: str, age: float):
        super().__init__(f"stream '{name}' is stale ({age * 1e3:.0f} ms old)")
        self.stream = name


class MeasurementStream:
    """Bounded history of timestamped samples at a nominal rate."""

    def __init__(self, name: str, dim: int, rate_hz: float, maxlen: int = 64):
        self.name = name
        self.dim = dim
        self.rate_hz = rate_hz
        self._t: deque[float] = deque(maxlen=maxlen)
        self._v: deque[np.ndarray] = deque(maxlen=maxlen)

    def __len__(self) -> int:
        return len(self._t)

    def add(self, t: float, value: np.ndarray) -> None:
        if self._t and t <= self._t[-1]:
            raise ValueError(f"non-increasing timestamp on stream '{self.name}'")
        v = np.asarray(value, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"stream '{self.name}' expects dim {self.dim}")
        self._t.append(float(t))
        self._v.append(v.copy())

    def latest(self) -> tuple[float, np.ndarray]:
        if not self._t:
            raise InsufficientHistoryError(f"stream '{self.name}' is empty")
        return self._t[-1], self._v[-1]

    def tail(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if len(self._t) < n:
            raise InsufficientHistoryError(
                f"stream '{self.name}' has {len(self._t)} samples, need {n}")
        ts = np.array([self._t[i] for i in range(len(self._t) - n, len(self._t))])
        vs = np.stack([self._v[i] for i in range(len(self._v) - n, len(self._v))])
        return ts, vs


def estimate_velocity(stream: MeasurementStream, window: int = 10) -> np.ndarray:
    """Mean of the last `window` backward finite differences."""
    ts, vs = stream.tail(window + 1)
    dts = np.diff(ts)
    return (np.diff(vs, axis=0) / dts[:, None]).mean(axis=0)


def _velocity_or_zero(stream: MeasurementStream, window: int) -> np.ndarray:
    """Lenient variant used during warm-up: shrink the window if needed."""
    avail = len(stream) - 1
    if avail < 1:
        return np.zeros(stream.dim)
    return estimate_velocity(stream, window=min(window, avail))


class HistoryBuffer:
    """Ring buffer of base poses spanning two maximum platform periods."""

    def __init__(self, dt: float = 0.01, span: float = 24.0):
        self.dt = dt
        self.capacity = int(round(span / dt))
        self._data = np.zeros((self.capacity, 6))
        self._count = 0
        self._head = 0  # next write position

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    @property
    def full_fraction(self) -> float:
        return len(self) / self.capacity

    def append(self, pose: np.ndarray) -> None:
        self._data[self._head] = pose
        self._head = (self._head + 1) % self.capacity
        self._count += 1

    def ordered(self) -> np.ndarray:
        """Samples oldest to newest, shape (len, 6)."""
        n = len(self)
        if self._count <= self.capacity:
            return self._data[:n].copy()
        return np.vstack([self._data[self._head:], self._data[:self._head]])

    def latest(self) -> np.ndarray:
        if self._count == 0:
            raise InsufficientHistoryError("history buffer is empty")
        return self._data[(self._head - 1) % self.capacity].copy()

    def interp_at(self, offset_samples: float) -> np.ndarray:
        """Pose at a (possibly fractional) sample offset from the newest.

        offset 0 is the newest sample, negative offsets reach into the past.
        """
        n = len(self)
        if offset_samples > 0.0 or -offset_samples > n - 1:
            raise InsufficientHistoryError(
                f"offset {offset_samples} outside buffered history")
        pos = (n - 1) + offset_samples
        i0 = int(math.floor(pos))
        frac = pos - i0
        ordered = self.ordered()
        if frac == 0.0 or i0 + 1 >= n:
            return ordered[i0].copy()
        return (1.0 - frac) * ordered[i0] + frac * ordered[i0 + 1]


def detect_period(buffer: HistoryBuffer, min_lag_s: float = 1.0,
                  peak_threshold: float = 0.5, channel: int = 4) -> float:
    """Dominant period of the base motion in samples (sub-sample refined).

    Maximizes the normalized (unbiased) autocorrelation of the pitch channel
    over lags between `min_lag_s` and half the buffered span, then refines
    the peak by parabolic interpolation.
    """
    n = len(buffer)
    if n < buffer.capacity // 2:
        raise InsufficientHistoryError(
            f"buffer {n}/{buffer.capacity} samples; need at least half")
    x = buffer.ordered()[:, channel]
    x = x - x.mean()
    power = float(np.dot(x, x))
    if power <= n * 1e-18:
        raise NoSignificantPeakError("flat signal has no autocorrelation peak")
    # FFT-based full autocorrelation, unbiased normalization
    m = 1
    while m < 2 * n:
        m *= 2
    spec = np.fft.rfft(x, m)
    acf = np.fft.irfft(spec * np.conj(spec), m)[:n]
    counts = np.arange(n, 0, -1, dtype=float)
    acf = acf * (n / power) / counts
    lo = max(2, int(round(min_lag_s / buffer.dt)))
    hi = n // 2
    if hi <= lo:
        raise InsufficientHistoryError("buffered span too short for lag search")
    k = lo + int(np.argmax(acf[lo:hi]))
    if acf[k] < peak_threshold:
        raise NoSignificantPeakError(
            f"peak autocorrelation {acf[k]:.3f} below {peak_threshold}")
    # parabolic sub-sample refinement
    y0, y1, y2 = acf[k - 1], acf[k], acf[k + 1]
    denom = y0 - 2.0 * y1 + y2
    shift = 0.0 if denom == 0.0 else 0.5 * (y0 - y2) / denom
    shift = min(0.5, max(-0.5, shift))
    return float(k + shift)


@dataclass
class BaseForecast:
    """Predicted base-pose sequence over the planning horizon."""

    poses: np.ndarray           # (horizon_steps + 1, 6)
    origin_time: float
    dt: float
    lag_samples: float | None   # None for the constant-hold fallback

    def __len__(self) -> int:
        return self.poses.shape[0]


def forecast_base(buffer: HistoryBuffer, lag_samples: float,
                  horizon_steps: int, model_dt: float,
                  origin_time: float = 0.0) -> BaseForecast:
    """Replay the buffer one period back, offset-corrected to the present."""
    ratio = model_dt / buffer.dt
    if lag_samples < horizon_steps * ratio:
        raise InsufficientHistoryError(
            f"lag {lag_samples} samples shorter than the forecast horizon")
    current = buffer.latest()
    offset = current - buffer.interp_at(-lag_samples)
    poses = np.empty((horizon_steps + 1, 6))
    for k in range(horizon_steps + 1):
        poses[k] = buffer.interp_at(k * ratio - lag_samples) + offset
    return BaseForecast(poses, origin_time, model_dt, lag_samples)


def constant_hold_forecast(pose: np.ndarray, horizon_steps: int,
                           model_dt: float, origin_time: float = 0.0
                           ) -> BaseForecast:
    poses = np.tile(np.asarray(pose, dtype=float), (horizon_steps + 1, 1))
    return BaseForecast(poses, origin_time, model_dt, None)


class DisturbancePredictor:
    """Ingests base poses and serves horizon forecasts with fallback."""

    def __init__(self, buffer_dt: float = 0.01, span: float = 24.0,
                 min_lag_s: float = 1.0, peak_threshold: float = 0.5,
                 redetect_interval: float = 0.5):
        self.buffer = HistoryBuffer(dt=buffer_dt, span=span)
        self.min_lag_s = min_lag_s
        self.peak_threshold = peak_threshold
        self.redetect_interval = redetect_interval
        self._lag: float | None = None
        self._last_detect_t = -np.inf
        self._last_t = -np.inf

    def observe(self, t: float, pose: np.ndarray) -> None:
        self.buffer.append(np.asarray(pose, dtype=float))
        self._last_t = t

    def forecast(self, horizon_steps: int, model_dt: float,
                 origin_time: float | None = None) -> BaseForecast:
        t = self._last_t if origin_time is None else origin_time
        if t - self._last_detect_t >= self.redetect_interval:
            self._last_detect_t = t
            try:
                self._lag = detect_period(self.buffer, self.min_lag_s,
                                          self.peak_threshold)
            except (InsufficientHistoryError, NoSignificantPeakError):
                self._lag = None
        if self._lag is None:
            return constant_hold_forecast(self.buffer.latest(), horizon_steps,
                                          model_dt, t)
        return forecast_base(self.buffer, self._lag, horizon_steps, model_dt, t)


def assemble_state(crane_stream: MeasurementStream,
                   payload_stream: MeasurementStream,
                   base_stream: MeasurementStream,
                   t_now: float, staleness: float = 0.1,
                   window: int = 10, crane_window: int = 2) -> GeneralizedState:
    """Latest positions plus filtered velocities packed as a model state.

    The 100 Hz mocap streams use the full 10-step moving-average window; the
    20 Hz encoder stream uses a short window, because a 10-step average at
    20 Hz lags the actuated joints by ~0.3 s and destabilizes the planner's
    warm state.
    """
    for s in (crane_stream, payload_stream, base_stream):
        t_latest, _ = s.latest()
        if t_now - t_latest > staleness:
            raise StaleStreamError(s.name, t_now - t_latest)
    _, q_crane = crane_stream.latest()
    _, q_payload = payload_stream.latest()
    _, q_base = base_stream.latest()
    qdot = np.concatenate([
        _velocity_or_zero(base_stream, window),
        _velocity_or_zero(crane_stream, crane_window),
        _velocity_or_zero(payload_stream, window),
    ])
    return GeneralizedState(q_base=q_base.copy(), q_crane=q_crane.copy(),
                            q_payload=q_payload.copy(), qdot=qdot, time=t_now)
