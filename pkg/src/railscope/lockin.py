"""Digital lock-in detection.

Phase convention: a pixel oscillating as ``A sin(w t + phi)`` against a
reference ``sin(w t + ref_phase)`` is reported with amplitude ``A`` (peak, not
RMS) and phase ``phi - ref_phase`` wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .framestack import FrameStack
from .thermal import NyquistError

CHUNK_FRAMES = 64


@dataclass(frozen=True)
class LockInResult:
    amplitude: np.ndarray
    phase: np.ndarray
    ref_frequency_hz: float
    n_frames_integrated: int
    periods_integrated: float
    in_phase: np.ndarray | None = None
    quadrature: np.ndarray | None = None

    def metadata(self) -> dict:
        return {
            "ref_frequency_hz": self.ref_frequency_hz,
            "n_frames_integrated": self.n_frames_integrated,
            "periods_integrated": self.periods_integrated,
        }


@dataclass(frozen=True)
class BandFilterSpec:
    center_frequency_hz: float
    bandwidth_hz: float

    def __post_init__(self):
        if not 0 < self.bandwidth_hz < self.center_frequency_hz:
            raise ValueError("bandwidth must satisfy 0 < bandwidth_hz < center_frequency_hz")


def integration_window(n_frames: int, fps: float, ref_frequency_hz: float) -> tuple[int, float]:
    """Frames and periods used when truncating to whole reference periods."""
    if not fps > 2 * ref_frequency_hz:
        raise NyquistError(f"fps={fps} does not exceed twice the reference frequency {ref_frequency_hz} Hz")
    periods_available = n_frames * ref_frequency_hz / fps
    periods = math.floor(periods_available + 1e-9)
    if periods < 4:
        raise ValueError(f"{n_frames} frames cover {periods_available:.3g} reference periods; need at least 4")
    exact = periods * fps / ref_frequency_hz
    n_used = int(round(exact)) if abs(exact - round(exact)) < 1e-6 else int(math.floor(exact))
    return min(n_used, n_frames), float(n_used * ref_frequency_hz / fps)


class LockInAccumulator:
    """Streaming I/Q correlation over chunks of frames.

    Frames must be fed in order through :meth:`add`; frames past the last whole
    reference period are ignored.
    """

    def __init__(self, shape, n_frames, fps, ref_frequency_hz, ref_phase_rad=0.0, t0=0.0):
        self.shape = tuple(shape)
        self.fps = fps
        self.ref_frequency_hz = ref_frequency_hz
        self.ref_phase_rad = ref_phase_rad
        self.t0 = t0
        self.n_used, self.periods = integration_window(n_frames, fps, ref_frequency_hz)
        npx = int(np.prod(self.shape))
        self._offset = None
        self._sum = np.zeros(npx)
        self._sum_s = np.zeros(npx)
        self._sum_c = np.zeros(npx)
        self._basis_s = 0.0
        self._basis_c = 0.0
        self._next = 0

    def add(self, frames: np.ndarray, start: int | None = None):
        frames = np.asarray(frames)
        if frames.ndim == 2:
            frames = frames[None]
        start = self._next if start is None else start
        if start != self._next:
            raise ValueError(f"frames must be added in order: expected index {self._next}, got {start}")
        self._next = start + frames.shape[0]
        stop = min(frames.shape[0], self.n_used - start)
        if stop <= 0:
            return
        frames = frames[:stop]
        dtype = np.float32 if frames.dtype == np.float32 else np.float64
        flat = frames.reshape(stop, -1)
        if self._offset is None:
            # correlating deviations from the first frame keeps single-precision products accurate
            self._offset = flat[0].astype(np.float64)
        dev = flat.astype(dtype) - self._offset.astype(dtype)
        t = self.t0 + (start + np.arange(stop)) / self.fps
        arg = 2 * np.pi * self.ref_frequency_hz * t + self.ref_phase_rad
        basis = np.stack([np.sin(arg), np.cos(arg)])
        proj = basis.astype(dtype) @ dev
        self._sum_s += proj[0]
        self._sum_c += proj[1]
        self._sum += dev.sum(axis=0, dtype=np.float64)
        self._basis_s += basis[0].sum()
        self._basis_c += basis[1].sum()

    def result(self) -> LockInResult:
        if self._next < self.n_used:
            raise ValueError(f"only {self._next} of {self.n_used} frames were supplied")
        n = self.n_used
        mean = self._sum / n
        x = (2.0 / n) * (self._sum_s - mean * self._basis_s)
        y = (2.0 / n) * (self._sum_c - mean * self._basis_c)
        amplitude = np.hypot(x, y).reshape(self.shape)
        phase = np.arctan2(y, x).reshape(self.shape)
        phase[phase <= -np.pi] = np.pi
        return LockInResult(
            amplitude,
            phase,
            self.ref_frequency_hz,
            n,
            self.periods,
            x.reshape(self.shape),
            y.reshape(self.shape),
        )


def lockin_demodulate(fs: FrameStack, ref_frequency_hz: float, ref_phase_rad: float = 0.0) -> LockInResult:
    """Demodulate every pixel of ``fs`` at ``ref_frequency_hz``.

    The per-pixel mean is removed before correlating, and only whole reference
    periods are integrated (rectangular window).
    """
    acc = LockInAccumulator(
        (fs.height, fs.width), fs.n_frames, fs.fps, ref_frequency_hz, ref_phase_rad, fs.t0
    )
    for start in range(0, acc.n_used, CHUNK_FRAMES):
        acc.add(fs.frames[start : start + CHUNK_FRAMES], start)
    return acc.result()


def demodulate_series(samples, fs_hz: float, ref_frequency_hz: float, ref_phase_rad: float = 0.0):
    """Amplitude and phase of a single time series (point measurement)."""
    x = np.asarray(samples, dtype=float)
    res = lockin_demodulate(FrameStack(x[:, None, None], fps=fs_hz), ref_frequency_hz, ref_phase_rad)
    return float(res.amplitude[0, 0]), float(res.phase[0, 0])


def eofm_point_filter(samples, fs_hz: float, band: BandFilterSpec, order: int = 4) -> float:
    """Amplitude of the part of ``samples`` inside ``band``.

    The series is shifted down by the band centre, low-passed at half the
    bandwidth with a zero-phase Butterworth filter, and the magnitude is
    averaged after discarding the filter settling time at both ends.
    """
    nyq_needed = 2 * (band.center_frequency_hz + band.bandwidth_hz / 2)
    if not fs_hz > nyq_needed:
        raise NyquistError(f"sample rate {fs_hz} Hz must exceed {nyq_needed} Hz for this band")
    x = np.asarray(samples, dtype=float)
    if not np.any(x):
        return 0.0
    t = np.arange(x.size) / fs_hz
    z = x * np.exp(-2j * np.pi * band.center_frequency_hz * t)
    sos = signal.butter(order, band.bandwidth_hz / 2, fs=fs_hz, output="sos")
    lp = signal.sosfiltfilt(sos, z.real) + 1j * signal.sosfiltfilt(sos, z.imag)
    settle = int(min(x.size // 10, round(4 * fs_hz / band.bandwidth_hz)))
    core = lp[settle : x.size - settle] if settle else lp
    return float(2 * np.mean(np.abs(core)))


def snr_gain(n_frames_a: int, n_frames_b: int) -> float:
    """Expected amplitude-noise improvement going from ``a`` to ``b`` integrated frames."""
    if n_frames_a < 1 or n_frames_b < 1:
        raise ValueError("frame counts must be >= 1")
    return math.sqrt(n_frames_b / n_frames_a)
