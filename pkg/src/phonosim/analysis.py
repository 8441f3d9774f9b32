"""Waveform analysis: spectra, resonance-frequency estimation, comparisons.

Resonances come from linear-prediction coefficients fitted by the
autocorrelation method (Levinson recursion) after decimating the heavily
oversampled solver output to a conventional analysis rate, so the usual
pole-picking heuristics apply unchanged.
"""

from __future__ import annotations

import numpy as np


def _uniform_step(t):
    t = np.asarray(t, float)
    if t.size < 2:
        raise ValueError("need at least two samples")
    dts = np.diff(t)
    step = dts[0]
    if step <= 0 or not np.allclose(dts, step, rtol=1e-6):
        raise ValueError("samples must be uniformly spaced")
    return step


def spectrum(t, y, window=True):
    """Magnitude spectrum in dB relative to its own maximum."""
    step = _uniform_step(t)
    y = np.asarray(y, float)
    y0 = y - y.mean()
    w = np.hanning(y0.size) if window else np.ones(y0.size)
    mag = np.abs(np.fft.rfft(y0 * w))
    top = mag.max()
    if top <= 0.0:
        raise ValueError("signal has no variance")
    freqs = np.fft.rfftfreq(y0.size, step)
    return freqs, 20.0 * np.log10(np.maximum(mag, 1e-300) / top)


def resample_uniform(t, y, rate):
    """Linear resampling onto a uniform grid at the given rate."""
    _uniform_step(t)
    t = np.asarray(t, float)
    n = int(np.floor((t[-1] - t[0]) * rate)) + 1
    tq = t[0] + np.arange(n) / rate
    return tq, np.interp(tq, t, np.asarray(y, float))


def lpc_coefficients(y, order):
    """Prediction polynomial a (a[0] = 1) by the autocorrelation method."""
    y = np.asarray(y, float)
    n = y.size
    if not 1 <= order < n:
        raise ValueError("order must be at least 1 and below the length")
    r = np.array([y[: n - k] @ y[k:] for k in range(order + 1)])
    if r[0] <= 0.0:
        raise ValueError("signal has no energy")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i]
        for j in range(1, i):
            acc += a[j] * r[i - j]
        k = -acc / err
        head = a[1:i].copy()
        a[1:i] = head + k * head[::-1]
        a[i] = k
        err *= 1.0 - k * k
        if err <= 0.0:
            raise ValueError("autocorrelation sequence is ill-conditioned")
    return a, err


def lpc_formants(t, y, rate=10000.0, order=12, preemphasis=0.97,
                 min_freq=150.0, min_radius=0.7):
    """Resonance frequencies and bandwidths of a voiced waveform.

    The signal is decimated to `rate`, optionally pre-emphasised to undo
    the downward source tilt, Hamming-windowed and fitted with an all-pole
    model. Complex pole pairs inside the band with radius above min_radius
    are returned as (frequency, bandwidth) sorted by frequency.
    """
    _, yq = resample_uniform(t, y, rate)
    yq = yq - yq.mean()
    if preemphasis:
        yq = yq[1:] - preemphasis * yq[:-1]
    yq = yq * np.hamming(yq.size)
    a, _ = lpc_coefficients(yq, order)
    roots = np.roots(a)
    roots = roots[roots.imag > 1e-9]
    out = []
    for z in roots:
        radius = abs(z)
        freq = float(np.angle(z) / (2.0 * np.pi) * rate)
        if radius < min_radius or freq < min_freq or freq > 0.48 * rate:
            continue
        bw = float(-np.log(radius) * rate / np.pi)
        out.append((freq, bw))
    out.sort()
    return out


def relative_error(got, want):
    """|got - want| / |want|."""
    if want == 0.0:
        raise ValueError("reference value must be nonzero")
    return abs(got - want) / abs(want)


def aligned_correlation(a, b):
    """Best circular-alignment Pearson correlation of two sampled cycles.

    Returns (r, shift) where shifting b forward by `shift` samples,
    b[(i - shift) % n], lines it up best with a.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D arrays")
    a0 = a - a.mean()
    b0 = b - b.mean()
    na = float(np.sqrt(a0 @ a0))
    nb = float(np.sqrt(b0 @ b0))
    if na == 0.0 or nb == 0.0:
        raise ValueError("constant input has no correlation")
    c = np.fft.irfft(np.fft.rfft(a0) * np.conj(np.fft.rfft(b0)), a0.size)
    k = int(np.argmax(c))
    return float(c[k] / (na * nb)), k


def write_waveform(path, period, samples):
    """Write one period of uniformly sampled pressure as a text file.

    Header lines give the period and the implied sample rate; one sample
    per line follows, printed with full precision.
    """
    y = np.asarray(samples, float)
    if y.ndim != 1 or y.size < 4:
        raise ValueError("need at least four samples over the period")
    if period <= 0.0:
        raise ValueError("period must be positive")
    with open(path, "w") as fh:
        fh.write("# one cycle of mouth sound pressure, uniformly sampled\n")
        fh.write(f"period_s={period:.17g}\n")
        fh.write(f"rate_hz={y.size / period:.17g}\n")
        for v in y:
            fh.write(f"{v:.17g}\n")


def read_waveform(path):
    """Read a file written by write_waveform; returns (period, samples).

    The sample count must agree with period_s * rate_hz; unknown header
    keys and short files are rejected.
    """
    header = {}
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" in body:
                key, _, val = body.partition("=")
                key = key.strip()
                if key not in ("period_s", "rate_hz"):
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                header[key] = float(val)
                continue
            values.append(float(body))
    for key in ("period_s", "rate_hz"):
        if key not in header:
            raise ValueError(f"{path}: missing header line {key!r}")
    if len(values) < 4:
        raise ValueError(f"{path}: need at least four samples")
    n = header["period_s"] * header["rate_hz"]
    if abs(n - len(values)) > 0.5:
        raise ValueError(f"{path}: sample count disagrees with the header")
    return header["period_s"], np.asarray(values, float)
