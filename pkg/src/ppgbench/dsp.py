"""Band-pass cleaning of PPG waveforms and linear resampling.

Filter design goes analog Butterworth prototype -> low-pass-to-band-pass
transform -> bilinear transform with frequency pre-warping. All filtering
arithmetic is float64 regardless of the storage dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ValidationError
from .taxonomy import PpgSegment

CLEAN_LOW_HZ = 0.5
CLEAN_HIGH_HZ = 8.0
CLEAN_ORDER = 3


@dataclass(frozen=True)
class FilterCoefficients:
    numerator: np.ndarray
    denominator: np.ndarray
    low_hz: float
    high_hz: float
    order: int
    sampling_rate_hz: float

    @property
    def b(self):
        return self.numerator

    @property
    def a(self):
        return self.denominator

    @property
    def poles(self):
        return np.roots(self.denominator)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def frequency_response(self, freqs_hz) -> np.ndarray:
        """Complex response H(e^{jw}) at the given frequencies."""
        w = 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.sampling_rate_hz
        z = np.exp(-1j * w)
        return np.polyval(self.numerator[::-1], z) / np.polyval(self.denominator[::-1], z)


def design_bandpass(low_hz, high_hz, sampling_rate_hz, order) -> FilterCoefficients:
    """Digital Butterworth band-pass of analog order ``order`` per band edge.

    Returns ``2 * order + 1`` numerator and denominator coefficients with
    ``a[0] == 1``.
    """
    low_hz, high_hz, fs = float(low_hz), float(high_hz), float(sampling_rate_hz)
    if not (fs > 0 and np.isfinite(fs)):
        raise ValidationError(f"sampling rate must be positive, got {sampling_rate_hz}")
    nyquist = fs / 2
    if not 0 < low_hz < high_hz < nyquist:
        raise ValidationError(
            f"band edges must satisfy 0 < low < high < Nyquist ({nyquist:g} Hz); "
            f"got low={low_hz:g}, high={high_hz:g}"
        )
    if int(order) != order or order < 1:
        raise ValidationError(f"order must be a positive integer, got {order}")
    order = int(order)

    # analog prototype, unit cutoff
    k = np.arange(1, order + 1)
    proto_poles = np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))

    # pre-warped band edges (rad/s)
    fs2 = 2 * fs
    w_low = fs2 * np.tan(np.pi * low_hz / fs)
    w_high = fs2 * np.tan(np.pi * high_hz / fs)
    bw = w_high - w_low
    w0 = np.sqrt(w_low * w_high)

    # low-pass -> band-pass: each prototype pole splits in two; order zeros at s=0
    half = proto_poles * bw / 2
    root = np.sqrt(half**2 - w0**2)
    s_poles = np.concatenate([half + root, half - root])
    s_zeros = np.zeros(order)
    gain = bw**order

    # bilinear; the remaining `order` zeros at infinity land on z = -1
    z_poles = (fs2 + s_poles) / (fs2 - s_poles)
    z_zeros = np.concatenate([(fs2 + s_zeros) / (fs2 - s_zeros), -np.ones(order)])
    gain = gain * np.real(np.prod(fs2 - s_zeros) / np.prod(fs2 - s_poles))

    b = gain * np.real(np.poly(z_zeros))
    a = np.real(np.poly(z_poles))
    b, a = b / a[0], a / a[0]
    coeffs = FilterCoefficients(b, a, low_hz, high_hz, order, fs)
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(a))):
        raise ValidationError("filter design produced non-finite coefficients")
    return coeffs


def _pad_length(coeffs: FilterCoefficients) -> int:
    return 3 * (max(len(coeffs.b), len(coeffs.a)) - 1)


def filtfilt(coeffs: FilterCoefficients, x) -> np.ndarray:
    """Zero-phase forward-backward filtering with odd-reflection padding.

    Each pass starts from the filter's step-response steady state scaled by
    the first sample it sees, which keeps edge transients small.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("filtfilt expects a one-dimensional signal")
    b, a = coeffs.b, coeffs.a
    ntaps = max(len(b), len(a))
    if x.size <= 3 * ntaps:
        raise ValidationError(
            f"signal of length {x.size} too short; need more than {3 * ntaps} samples"
        )
    pad = _pad_length(coeffs)
    left = 2 * x[0] - x[pad:0:-1]
    right = 2 * x[-1] - x[-2 : -pad - 2 : -1]
    ext = np.concatenate([left, x, right])

    zi = _signal.lfilter_zi(b, a)
    y, _ = _signal.lfilter(b, a, ext, zi=zi * ext[0])
    y = y[::-1]
    y, _ = _signal.lfilter(b, a, y, zi=zi * y[0])
    y = y[::-1]
    return y[pad:-pad] if pad else y


def clean(segment: PpgSegment, low_hz=CLEAN_LOW_HZ, high_hz=CLEAN_HIGH_HZ, order=CLEAN_ORDER):
    """Band-pass the segment at its own sampling rate; metadata is untouched."""
    coeffs = design_bandpass(low_hz, high_hz, segment.sampling_rate_hz, order)
    cleaned = filtfilt(coeffs, segment.samples)
    return segment.with_samples(cleaned.astype(segment.samples.dtype, copy=False))


def resample_linear(x, fs_in, fs_out) -> np.ndarray:
    """Linear interpolation onto ``round(len * fs_out / fs_in)`` samples at ``k / fs_out``.

    Output instants past the last input sample are linearly extrapolated from
    the final input interval.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError("resampling needs a one-dimensional signal of length >= 2")
    if not (fs_in > 0 and fs_out > 0):
        raise ValidationError("sampling rates must be positive")
    if fs_in == fs_out:
        return x.copy()
    n_out = int(round(x.size * fs_out / fs_in))
    if n_out < 1:
        raise ValidationError("resampled signal would be empty")
    pos = np.arange(n_out) * (fs_in / fs_out)  # output instants in input-sample units
    idx = np.clip(np.floor(pos).astype(np.int64), 0, x.size - 2)
    frac = pos - idx
    return x[idx] + frac * (x[idx + 1] - x[idx])


def resample_segment(segment: PpgSegment, fs_out) -> PpgSegment:
    if segment.sampling_rate_hz == fs_out:
        return segment
    out = resample_linear(segment.samples, segment.sampling_rate_hz, fs_out)
    return segment.with_samples(out.astype(segment.samples.dtype), sampling_rate_hz=float(fs_out))


class BandpassCleaner(TransformerMixin, BaseEstimator):
    """Row-wise zero-phase Butterworth band-pass as a scikit-learn transformer.

    ``X`` is ``(n_segments, n_samples)`` recorded at ``sampling_rate_hz``.
    Stateless: ``fit`` only designs the filter.
    """

    def __init__(self, low_hz=CLEAN_LOW_HZ, high_hz=CLEAN_HIGH_HZ, order=CLEAN_ORDER,
                 sampling_rate_hz=125.0):
        self.low_hz = low_hz
        self.high_hz = high_hz
        self.order = order
        self.sampling_rate_hz = sampling_rate_hz

    def fit(self, X=None, y=None):
        self.coefficients_ = design_bandpass(
            self.low_hz, self.high_hz, self.sampling_rate_hz, self.order
        )
        return self

    def transform(self, X):
        from .validation import check_signals

        coeffs = getattr(self, "coefficients_", None)
        if coeffs is None:
            coeffs = design_bandpass(self.low_hz, self.high_hz, self.sampling_rate_hz, self.order)
        X = check_signals(X)
        return np.stack([filtfilt(coeffs, row) for row in X])
