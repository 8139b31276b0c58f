"""Lock-in thermography forward model.

Power dissipated on the modulated rail spreads as a damped thermal wave. The
steady periodic response at the modulation frequency is the power map
convolved with the complex kernel

    K(r) = gain * exp(-r / mu) * exp(-1j * r / mu),   mu = sqrt(alpha / (pi * f))

truncated at ``r = 8 mu``. The IR camera then sees that response through the
static emissivity pattern, on top of a DC background, with additive noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .floorplan import Floorplan, MaterialParams, render_emissivity_map
from .framestack import FrameStack
from .stimulus import ModulationSpec

KERNEL_TRUNCATE = 8.0
CHUNK_FRAMES = 32
DC_BACKGROUND = 1000.0


class NyquistError(ValueError):
    pass


@dataclass(frozen=True)
class PowerMap:
    density: np.ndarray
    rail_id: str
    spec: ModulationSpec
    pitch_um: float


@dataclass(frozen=True)
class ThermalResponse:
    amplitude: np.ndarray
    phase: np.ndarray
    frequency_hz: float
    pitch_um: float
    diffusion_length_um: float

    @property
    def complex(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)


def build_power_map(fp: Floorplan, rail_id: str, spec: ModulationSpec) -> PowerMap:
    density = np.zeros(fp.die.raster_shape)
    for i, region in fp.regions_of(rail_id):
        if region.power_density_uw_per_um2 > 0:
            density[fp.region_footprint(i)] = region.power_density_uw_per_um2
    density.flags.writeable = False
    return PowerMap(density, rail_id, spec, fp.die.grid_pitch_um)


def thermal_kernel(mu_um: float, pitch_um: float, gain: float = 1.0, truncate: float = KERNEL_TRUNCATE):
    """Complex thermal-wave kernel sampled at pixel centres, zero beyond ``truncate * mu``."""
    radius_px = int(math.ceil(truncate * mu_um / pitch_um))
    ax = np.arange(-radius_px, radius_px + 1) * pitch_um
    r = np.hypot(ax[:, None], ax[None, :])
    k = gain * np.exp(-(1 + 1j) * r / mu_um)
    k[r > truncate * mu_um] = 0
    return k


def _convolve(density: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if kernel.size <= 15 * 15:
        # direct form keeps the response exactly zero beyond the kernel support
        re = ndimage.convolve(density, kernel.real, mode="constant")
        im = ndimage.convolve(density, kernel.imag, mode="constant")
        return re + 1j * im
    return signal.fftconvolve(density, kernel, mode="same")


def thermal_response(pm: PowerMap, material: MaterialParams) -> ThermalResponse:
    f = pm.spec.frequency_hz
    mu = material.diffusion_length_um(f)
    if not np.any(pm.density):
        zeros = np.zeros_like(pm.density, dtype=float)
        return ThermalResponse(zeros, zeros.copy(), f, pm.pitch_um, mu)
    kernel = thermal_kernel(mu, pm.pitch_um, material.gain_uk_per_uw)
    z = _convolve(np.asarray(pm.density, dtype=float), kernel)
    amplitude = np.abs(z)
    phase = np.angle(z)
    phase[phase <= -np.pi] = np.pi
    return ThermalResponse(amplitude, phase, f, pm.pitch_um, mu)


def _check_sampling(frequency_hz, n_frames, fps):
    if not fps > 2 * frequency_hz:
        raise NyquistError(f"fps={fps} does not exceed twice the modulation frequency {frequency_hz} Hz")
    periods = n_frames * frequency_hz / fps
    if periods < 4 - 1e-9:
        raise ValueError(f"{n_frames} frames at {fps} fps cover only {periods:.3g} periods; need at least 4")
    return periods


def iter_ir_frames(
    tr: ThermalResponse,
    fp: Floorplan,
    spec: ModulationSpec,
    n_frames: int,
    fps: float,
    noise_sigma: float,
    seed: int,
    dc_background: float = DC_BACKGROUND,
    t0: float = 0.0,
    dtype=np.float64,
):
    """Yield ``(first_frame_index, frames)`` chunks of the IR camera stack.

    Each chunk of ``CHUNK_FRAMES`` frames draws its noise from its own seeded
    generator, so the output does not depend on how the caller consumes it.
    """
    _check_sampling(spec.frequency_hz, n_frames, fps)
    emissivity = render_emissivity_map(fp)
    if emissivity.shape != tr.amplitude.shape:
        raise ValueError("thermal response and floorplan raster differ in shape")
    base = (emissivity * dc_background).astype(dtype)
    # A sin(wt + phi) = A cos(phi) sin(wt) + A sin(phi) cos(wt)
    sin_coef = (emissivity * tr.amplitude * np.cos(tr.phase)).astype(dtype)
    cos_coef = (emissivity * tr.amplitude * np.sin(tr.phase)).astype(dtype)
    omega = 2 * np.pi * spec.frequency_hz
    for chunk_index, start in enumerate(range(0, n_frames, CHUNK_FRAMES)):
        k = min(CHUNK_FRAMES, n_frames - start)
        t = t0 + (start + np.arange(k)) / fps
        s = np.sin(omega * t).astype(dtype)
        c = np.cos(omega * t).astype(dtype)
        out = np.empty((k,) + base.shape, dtype=dtype)
        np.multiply(s[:, None, None], sin_coef, out=out)
        out += c[:, None, None] * cos_coef
        out += base
        if noise_sigma > 0:
            rng = np.random.default_rng([seed, chunk_index])
            noise = rng.standard_normal(out.shape, dtype=np.float32)
            noise *= np.float32(noise_sigma)
            out += noise
        yield start, out


def render_ir_frames(
    tr: ThermalResponse,
    fp: Floorplan,
    spec: ModulationSpec,
    n_frames: int,
    fps: float,
    noise_sigma: float,
    seed: int,
    dc_background: float = DC_BACKGROUND,
    t0: float = 0.0,
    dtype=np.float64,
) -> FrameStack:
    """Render the whole stack in memory; see :func:`iter_ir_frames` for streaming."""
    periods = _check_sampling(spec.frequency_hz, n_frames, fps)
    frames = np.empty((n_frames,) + tr.amplitude.shape, dtype=dtype)
    for start, chunk in iter_ir_frames(tr, fp, spec, n_frames, fps, noise_sigma, seed, dc_background, t0, dtype):
        frames[start : start + len(chunk)] = chunk
    meta = {
        "periods": periods,
        "integer_periods": bool(abs(periods - round(periods)) < 1e-9),
        "seed": seed,
        "noise_sigma": noise_sigma,
        "frequency_hz": spec.frequency_hz,
    }
    return FrameStack(frames, fps=fps, t0=t0, meta=meta)
