"""Complex Morlet continuous wavelet transform, magnitude TFRs and an approximate inverse.

Mother wavelet (CMOR fb-fc)::

    psi(t) = (pi * fb) ** -0.5 * exp(2j * pi * fc * t) * exp(-t**2 / fb)

A row at frequency f uses scale ``a = fc / f`` seconds and the daughter
``a ** -0.5 * psi(t / a)``, truncated at +-4 standard deviations of its
Gaussian envelope. Coefficients approximate the continuous inner product
``integral s(t') conj(psi_a(t' - t)) dt'`` on the sample grid, with the
signal zero-padded outside the recording.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import EegTrial, Label, Provenance, extract_window

ALPHA_BAND_HZ = np.arange(7.0, 16.0)
TRUNCATION_SDS = 4.0


class WaveletError(ValueError):
    pass


@dataclass(frozen=True)
class MorletParams:
    bandwidth_fb: float = 3.0
    center_frequency_fc: float = 3.0

    def __post_init__(self):
        if not (self.bandwidth_fb > 0 and self.center_frequency_fc > 0):
            raise WaveletError("Morlet bandwidth and centre frequency must be positive")

    def psi(self, t: np.ndarray) -> np.ndarray:
        fb, fc = self.bandwidth_fb, self.center_frequency_fc
        return (np.pi * fb) ** -0.5 * np.exp(2j * np.pi * fc * t) * np.exp(-(t**2) / fb)

    def scale(self, freq_hz) -> np.ndarray:
        return self.center_frequency_fc / np.asarray(freq_hz, dtype=np.float64)

    def envelope_sd_s(self, freq_hz) -> np.ndarray:
        """Standard deviation (seconds) of the daughter wavelet's Gaussian envelope."""
        return self.scale(freq_hz) * np.sqrt(self.bandwidth_fb / 2.0)

    def half_support_s(self, freq_hz) -> np.ndarray:
        return TRUNCATION_SDS * self.envelope_sd_s(freq_hz)

    def frequency_response(self, scale: float, freq_hz) -> np.ndarray:
        """Fourier transform of the mother wavelet at ``scale * f`` (peak value 1 at f = fc / scale)."""
        nu = scale * np.asarray(freq_hz, dtype=np.float64)
        return np.exp(-(np.pi**2) * self.bandwidth_fb * (nu - self.center_frequency_fc) ** 2)


CMOR_3_3 = MorletParams()


@dataclass(frozen=True)
class Scalogram:
    """Complex coefficients shaped (channels, freqs, times)."""

    freqs_hz: np.ndarray
    times_s: np.ndarray
    coeffs: np.ndarray
    sample_rate_hz: float
    label: Label
    trial_id: int
    params: MorletParams = CMOR_3_3
    channels: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        f = np.asarray(self.freqs_hz, dtype=np.float64)
        t = np.asarray(self.times_s, dtype=np.float64)
        if c.ndim != 3 or c.shape[1:] != (f.size, t.size):
            raise WaveletError(f"coefficient array {c.shape} does not match axes ({f.size}, {t.size})")
        if np.any(np.diff(f) <= 0) or np.any(np.diff(t) <= 0):
            raise WaveletError("frequency and time axes must be strictly increasing")
        if not np.all(np.isfinite(c)):
            raise WaveletError("non-finite wavelet coefficient")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "times_s", t)


class Normalization(enum.Enum):
    NONE = "none"
    UNIT_RANGE = "unit_range"


@dataclass(frozen=True)
class Tfr:
    """Real time-frequency map shaped (channels, freqs, times).

    With ``UNIT_RANGE`` normalisation the stored values are
    ``2 * (v - norm_min) / norm_span - 1``; :meth:`denormalized` undoes it.
    """

    freqs_hz: np.ndarray
    times_s: np.ndarray
    values: np.ndarray
    label: Label
    trial_id: int
    normalization: Normalization = Normalization.NONE
    provenance: Provenance = Provenance.RAW
    norm_min: float = 0.0
    norm_span: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        f = np.asarray(self.freqs_hz, dtype=np.float64)
        t = np.asarray(self.times_s, dtype=np.float64)
        if v.ndim != 3 or v.shape[1:] != (f.size, t.size):
            raise WaveletError(f"TFR array {v.shape} does not match axes ({f.size}, {t.size})")
        if not np.all(np.isfinite(v)):
            raise WaveletError("non-finite TFR value")
        if self.normalization is Normalization.NONE and np.any(v < 0):
            raise WaveletError("un-normalised TFR values must be non-negative")
        if self.normalization is Normalization.UNIT_RANGE and np.any(np.abs(v) > 1):
            raise WaveletError("unit-range TFR values must lie in [-1, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "label", Label(self.label))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def denormalized(self) -> np.ndarray:
        if self.normalization is Normalization.NONE:
            return self.values
        return (self.values + 1.0) * 0.5 * self.norm_span + self.norm_min


def _check_freqs(freqs_hz, sample_rate_hz) -> np.ndarray:
    f = np.asarray(freqs_hz, dtype=np.float64).reshape(-1)
    if f.size == 0:
        raise WaveletError("no frequencies requested")
    if np.any(f <= 0):
        raise WaveletError(f"frequencies must be positive, got {f.min()}")
    nyquist = sample_rate_hz / 2.0
    if np.any(f >= nyquist):
        raise WaveletError(f"frequency {f.max()} Hz is at or above Nyquist ({nyquist} Hz)")
    return f


def daughter(params: MorletParams, freq_hz: float, sample_rate_hz: float) -> np.ndarray:
    """Daughter wavelet sampled on the centred grid ``k / sample_rate``, ``|k| <= K``."""
    a = float(params.scale(freq_hz))
    k = int(np.ceil(params.half_support_s(freq_hz) * sample_rate_hz))
    t = np.arange(-k, k + 1) / sample_rate_hz
    return a**-0.5 * params.psi(t / a)


def _cwt_rows(x: np.ndarray, freqs: np.ndarray, params: MorletParams, rate: float) -> np.ndarray:
    # x: (channels, n) real -> (channels, freqs, n) complex
    n = x.shape[-1]
    kernels = [daughter(params, f, rate) for f in freqs]
    longest = max(len(k) for k in kernels)
    nfft = 1 << int(np.ceil(np.log2(n + longest - 1)))
    spec = np.fft.fft(x, nfft, axis=-1)
    out = np.empty((x.shape[0], freqs.size, n), dtype=np.complex128)
    for i, ker in enumerate(kernels):
        half = len(ker) // 2
        # conj(psi_a(-t)) == psi_a(t) for the Morlet, so the correlation is a plain convolution
        full = np.fft.ifft(spec * np.fft.fft(ker, nfft), axis=-1)
        out[:, i, :] = full[:, half : half + n] / rate
    return out


def cwt(trial: EegTrial, freqs_hz: Sequence[float] = ALPHA_BAND_HZ, params: MorletParams = CMOR_3_3) -> Scalogram:
    freqs = _check_freqs(freqs_hz, trial.sample_rate_hz)
    if np.any(np.diff(freqs) <= 0):
        raise WaveletError("frequencies must be strictly increasing")
    coeffs = _cwt_rows(trial.samples, freqs, params, trial.sample_rate_hz)
    times = np.arange(trial.n_samples) / trial.sample_rate_hz
    return Scalogram(freqs, times, coeffs, trial.sample_rate_hz, trial.label, trial.trial_id, params, trial.channels)


def _bin_edges(n: int, bins: int) -> np.ndarray:
    return (np.arange(bins + 1) * n) // bins


def bin_mean(values: np.ndarray, bins: int) -> np.ndarray:
    """Mean over ``bins`` contiguous, near-equal groups along the last axis."""
    edges = _bin_edges(values.shape[-1], bins)
    sums = np.add.reduceat(values, edges[:-1], axis=-1)
    return sums / np.diff(edges)


def unit_range(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Affine map onto [-1, 1]; returns (mapped, min, span). Constant input maps to zeros."""
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span == 0:
        return np.zeros_like(values), lo, 0.0
    mapped = 2.0 * (values - lo) / span - 1.0
    return np.clip(mapped, -1.0, 1.0), lo, span


def tfr_magnitude(scalogram: Scalogram, downsample_time_to: int, normalize: bool = False) -> Tfr:
    n_times = scalogram.times_s.size
    if not 1 <= downsample_time_to <= n_times:
        raise WaveletError(f"cannot downsample {n_times} time columns to {downsample_time_to}")
    mag = bin_mean(np.abs(scalogram.coeffs), downsample_time_to)
    times = bin_mean(scalogram.times_s, downsample_time_to)
    if not normalize:
        return Tfr(scalogram.freqs_hz, times, mag, scalogram.label, scalogram.trial_id)
    mapped, lo, span = unit_range(mag)
    return Tfr(scalogram.freqs_hz, times, mapped, scalogram.label, scalogram.trial_id,
               Normalization.UNIT_RANGE, norm_min=lo, norm_span=span)


def trial_to_tfr(
    trial: EegTrial,
    window_s: tuple[float, float] = (4.0, 9.0),
    freqs_hz: Sequence[float] = ALPHA_BAND_HZ,
    time_columns: int = 64,
    params: MorletParams = CMOR_3_3,
    normalize: bool = True,
    provenance: Provenance = Provenance.RAW,
) -> Tfr:
    """Window, transform and reduce one trial to the network input grid."""
    windowed = extract_window(trial, *window_s)
    tfr = tfr_magnitude(cwt(windowed, freqs_hz, params), time_columns, normalize)
    return _with_provenance(tfr, provenance)


def _with_provenance(tfr: Tfr, provenance: Provenance) -> Tfr:
    return Tfr(tfr.freqs_hz, tfr.times_s, tfr.values, tfr.label, tfr.trial_id, tfr.normalization,
               provenance, tfr.norm_min, tfr.norm_span)


# --- inverse ------------------------------------------------------------------


@dataclass(frozen=True)
class InverseGain:
    """Calibrated reconstruction ``gain * sum_f weights[f] * Re(C[f, t]) / sqrt(a_f)``.

    ``weights`` equalise the summed frequency response at the grid
    frequencies (see :func:`equalization_weights`); ``gain`` is the
    least-squares scalar fitted on a probe signal.
    """

    gain: float
    weights: np.ndarray
    freqs_hz: np.ndarray
    sample_rate_hz: float
    params: MorletParams

    def __float__(self) -> float:
        return self.gain


def equalization_weights(params: MorletParams, freqs_hz: np.ndarray) -> np.ndarray:
    """Per-row weights making the delta reconstruction flat at every grid frequency.

    For a real tone at f, row k contributes ``0.5 * Psi(a_k f)`` after the
    ``1 / sqrt(a_k)`` factor. With a linear 1 Hz grid the rows overlap more at
    high frequencies than at low ones, so an unweighted sum ripples by about
    +-20 % across 7-15 Hz. Solving ``R w = 1`` with ``R[j, k] = 0.5 * Psi(a_k f_j)``
    removes that ripple on the grid.
    """
    scales = params.scale(freqs_hz)
    response = 0.5 * np.stack([params.frequency_response(a, freqs_hz) for a in scales], axis=1)
    return np.linalg.solve(response, np.ones(len(freqs_hz)))


def _interior(n: int, margin: int) -> slice:
    if 2 * margin >= n:
        raise WaveletError("probe too short for its edge margin")
    return slice(margin, n - margin)


def _reconstruct(coeffs: np.ndarray, freqs: np.ndarray, params: MorletParams, weights: np.ndarray) -> np.ndarray:
    w = weights / np.sqrt(params.scale(freqs))
    return np.tensordot(w, coeffs.real, axes=([0], [-2]))


def probe_signal(freqs_hz: np.ndarray, sample_rate_hz: float, duration_s: float) -> np.ndarray:
    """Unit-amplitude tones at every grid frequency with fixed, spread-out phases."""
    t = np.arange(int(round(duration_s * sample_rate_hz))) / sample_rate_hz
    phases = 2 * np.pi * ((np.arange(len(freqs_hz)) * 0.6180339887498949) % 1.0)
    return np.sum(np.cos(2 * np.pi * np.outer(freqs_hz, t) + phases[:, None]), axis=0)


def calibrate_inverse(
    params: MorletParams,
    freqs_hz: Sequence[float],
    sample_rate_hz: float,
    probe: np.ndarray | None = None,
) -> InverseGain:
    """Fit the scalar reconstruction gain on a band-limited probe.

    The default probe sums unit tones at every grid frequency and is long
    enough that an interior region free of edge effects remains. The gain
    minimises the squared reconstruction error over that interior.
    """
    freqs = _check_freqs(freqs_hz, sample_rate_hz)
    if freqs.size < 2:
        raise WaveletError("calibration needs at least two frequencies")
    margin = int(np.ceil(float(params.half_support_s(freqs.min())) * sample_rate_hz))
    if probe is None:
        duration = max(20.0, 10 * margin / sample_rate_hz)
        probe = probe_signal(freqs, sample_rate_hz, duration)
    probe = np.asarray(probe, dtype=np.float64)
    region = _interior(probe.size, margin)
    if not np.any(probe[region] != 0):
        raise WaveletError("degenerate calibration probe (zero energy)")
    weights = equalization_weights(params, freqs)
    coeffs = _cwt_rows(probe[None, :], freqs, params, sample_rate_hz)[0]
    unit = _reconstruct(coeffs, freqs, params, weights)[region]
    target = probe[region]
    denom = float(unit @ unit)
    if denom == 0:
        raise WaveletError("degenerate calibration probe (zero response)")
    gain = float(unit @ target) / denom
    return InverseGain(gain, weights, freqs, float(sample_rate_hz), params)


def icwt(scalogram: Scalogram, gain: InverseGain) -> EegTrial:
    if (
        gain.freqs_hz.shape != scalogram.freqs_hz.shape
        or not np.allclose(gain.freqs_hz, scalogram.freqs_hz)
        or gain.sample_rate_hz != scalogram.sample_rate_hz
        or gain.params != scalogram.params
    ):
        raise WaveletError("inverse gain was calibrated for a different frequency axis, sample rate or wavelet")
    signal = gain.gain * _reconstruct(scalogram.coeffs, scalogram.freqs_hz, scalogram.params, gain.weights)
    channels = scalogram.channels or tuple(f"ch{i}" for i in range(signal.shape[0]))
    return EegTrial(channels, signal, scalogram.sample_rate_hz, scalogram.label, scalogram.trial_id)


def tfr_to_waveform(
    tfr: Tfr,
    gain: InverseGain,
    n_samples: int,
    channels: Sequence[str] = ("C3", "Cz", "C4"),
) -> EegTrial:
    """Illustrative waveform for a (possibly generated) TFR.

    The TFR carries magnitudes only, so coefficients are rebuilt with zero
    phase: each time column is repeated over its bin and treated as a real
    coefficient. The result shows band envelope, not the true oscillation.
    """
    mags = tfr.denormalized()
    if tfr.normalization is Normalization.UNIT_RANGE and tfr.norm_span == 0:
        mags = (tfr.values + 1.0) * 0.5
    edges = _bin_edges(n_samples, tfr.times_s.size)
    coeffs = np.repeat(mags, np.diff(edges), axis=-1).astype(np.complex128)
    times = np.arange(n_samples) / gain.sample_rate_hz
    scal = Scalogram(tfr.freqs_hz, times, coeffs, gain.sample_rate_hz, tfr.label, tfr.trial_id, gain.params,
                     tuple(channels))
    return icwt(scal, gain)


# --- TFR archive ----------------------------------------------------------------

TFRB_MAGIC = b"TFRB"
TFRB_VERSION = 1
_TFRB_HEADER = struct.Struct("<4sIIIII")
_SAMPLE_HEADER = struct.Struct("<IBB")


def save_tfrs(tfrs: Sequence[Tfr], path, freqs_hz=None, times_s=None) -> None:
    """Write ``TFRB``: header, f32 axes, then per sample u32 id, u8 label, u8 provenance, f32 values.

    Normalisation constants are not stored.
    """
    if tfrs:
        c, nf, nt = tfrs[0].shape
        freqs, times = tfrs[0].freqs_hz, tfrs[0].times_s
        for s in tfrs:
            if s.shape != (c, nf, nt):
                raise WaveletError(f"sample {s.trial_id} has shape {s.shape}, expected {(c, nf, nt)}")
    else:
        freqs = np.asarray(freqs_hz if freqs_hz is not None else ALPHA_BAND_HZ, dtype=np.float64)
        times = np.asarray(times_s if times_s is not None else [], dtype=np.float64)
        c, nf, nt = 3, freqs.size, times.size
    parts = [
        _TFRB_HEADER.pack(TFRB_MAGIC, TFRB_VERSION, len(tfrs), c, nf, nt),
        np.asarray(freqs, dtype="<f4").tobytes(),
        np.asarray(times, dtype="<f4").tobytes(),
    ]
    for s in tfrs:
        parts.append(_SAMPLE_HEADER.pack(s.trial_id, int(s.label), int(s.provenance)))
        parts.append(np.ascontiguousarray(s.values, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_tfrs(path) -> list[Tfr]:
    """Read a ``TFRB`` archive.

    Samples containing negative values are tagged ``UNIT_RANGE`` (magnitudes
    are never negative), all others ``NONE``.
    """
    buf = Path(path).read_bytes()
    if len(buf) < _TFRB_HEADER.size or buf[:4] != TFRB_MAGIC:
        raise WaveletError(f"{path}: not a TFRB archive")
    _, version, n, c, nf, nt = _TFRB_HEADER.unpack_from(buf, 0)
    if version != TFRB_VERSION:
        raise WaveletError(f"{path}: unsupported TFRB version {version}")
    pos = _TFRB_HEADER.size
    expected = pos + 4 * (nf + nt) + n * (_SAMPLE_HEADER.size + 4 * c * nf * nt)
    if len(buf) != expected:
        raise WaveletError(f"{path}: size {len(buf)} does not match header layout ({expected})")
    freqs = np.frombuffer(buf, "<f4", nf, pos).astype(np.float64)
    pos += 4 * nf
    times = np.frombuffer(buf, "<f4", nt, pos).astype(np.float64)
    pos += 4 * nt
    out = []
    for _ in range(n):
        tid, label, prov = _SAMPLE_HEADER.unpack_from(buf, pos)
        pos += _SAMPLE_HEADER.size
        vals = np.frombuffer(buf, "<f4", c * nf * nt, pos).astype(np.float64).reshape(c, nf, nt)
        pos += 4 * c * nf * nt
        norm = Normalization.UNIT_RANGE if np.any(vals < 0) else Normalization.NONE
        out.append(Tfr(freqs, times, vals, Label.parse(label), tid, norm, Provenance(prov)))
    return out


def stack(tfrs: Sequence[Tfr]) -> tuple[np.ndarray, np.ndarray]:
    """(values [N, C, F, T], labels [N]) arrays for network training."""
    if not tfrs:
        raise WaveletError("no samples to stack")
    x = np.stack([s.values for s in tfrs])
    y = np.array([int(s.label) for s in tfrs], dtype=np.int64)
    return x, y


def as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Accept a list of :class:`Tfr` or an ``(x, y)`` pair and return float64 / int64 arrays."""
    if isinstance(samples, tuple) and len(samples) == 2 and isinstance(samples[0], np.ndarray):
        x, y = samples
        return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)
    return stack(list(samples))
