"""Per-rail electrical modulation: switched square wave (thermography) or
DC plus a small sine (laser logic state imaging)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WAVEFORMS = ("square", "sine")


class DegenerateSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModulationSpec:
    waveform: str
    frequency_hz: float
    amplitude_vpp: float
    dc_offset_v: float = 0.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"waveform must be one of {WAVEFORMS}, got {self.waveform!r}")
        if not self.frequency_hz > 0:
            raise ValueError(f"frequency_hz must be positive, got {self.frequency_hz}")
        if self.amplitude_vpp < 0:
            raise ValueError(f"amplitude_vpp must be >= 0, got {self.amplitude_vpp}")
        if self.waveform == "sine" and self.dc_offset_v - self.amplitude_vpp / 2 < 0:
            raise ValueError(
                f"sine modulation would reverse the supply: dc_offset_v={self.dc_offset_v} "
                f"< amplitude_vpp/2={self.amplitude_vpp / 2}"
            )

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.frequency_hz

    @property
    def period_s(self) -> float:
        return 1.0 / self.frequency_hz

    @property
    def v_min(self) -> float:
        return self.dc_offset_v - self.amplitude_vpp / 2

    @property
    def v_max(self) -> float:
        return self.dc_offset_v + self.amplitude_vpp / 2

    @classmethod
    def from_dict(cls, d: dict) -> "ModulationSpec":
        return cls(
            waveform=str(d["waveform"]),
            frequency_hz=float(d["frequency_hz"]),
            amplitude_vpp=float(d["amplitude_vpp"]),
            dc_offset_v=float(d.get("dc_offset_v", 0.0)),
            phase_rad=float(d.get("phase_rad", 0.0)),
        )

    def to_dict(self) -> dict:
        return {
            "waveform": self.waveform,
            "frequency_hz": self.frequency_hz,
            "amplitude_vpp": self.amplitude_vpp,
            "dc_offset_v": self.dc_offset_v,
            "phase_rad": self.phase_rad,
        }


def lit_default(nominal_v: float = 0.82, frequency_hz: float = 50.0) -> ModulationSpec:
    """Supply switched between 0 V and ``nominal_v``."""
    return ModulationSpec("square", frequency_hz, nominal_v, nominal_v / 2)


def llsi_default(nominal_v: float = 0.82, frequency_hz: float = 2e6, amplitude_vpp: float = 0.1) -> ModulationSpec:
    """Nominal supply plus a small sine, as delivered through a bias-tee."""
    return ModulationSpec("sine", frequency_hz, amplitude_vpp, nominal_v)


def _square_sign(s):
    return np.where(s >= 0, 1.0, -1.0)


def sample_waveform(spec: ModulationSpec, t):
    """Supply voltage at time(s) ``t`` in seconds."""
    t = np.asarray(t, dtype=float)
    s = np.sin(spec.omega * t + spec.phase_rad)
    half = spec.amplitude_vpp / 2
    if spec.waveform == "square":
        out = spec.dc_offset_v + half * _square_sign(s)
    else:
        out = spec.dc_offset_v + half * s
    return out if out.ndim else float(out)


def power_waveform(spec: ModulationSpec, t):
    """Instantaneous dissipation relative to its maximum, in [0, 1].

    Square modulation switches the rail fully on and off. Sine modulation
    scales dissipation with the square of the supply voltage.
    """
    if spec.amplitude_vpp == 0 and spec.dc_offset_v == 0:
        raise DegenerateSpecError("amplitude_vpp and dc_offset_v are both zero: the rail is never powered")
    t = np.asarray(t, dtype=float)
    if spec.amplitude_vpp == 0:
        out = np.ones_like(t)
    elif spec.waveform == "square":
        # high half-period is 1, low is 0; taken from the phase, not the voltages,
        # so tiny Vpp on a large offset does not cancel to 0/0
        out = (_square_sign(np.sin(spec.omega * t + spec.phase_rad)) + 1.0) / 2
    else:
        v = sample_waveform(spec, t)
        out = np.clip((v / spec.v_max) ** 2, 0.0, 1.0)
    return out if out.ndim else float(out)
