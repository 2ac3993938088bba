"""Fiber propagation delay and its temperature-driven drift."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .optics import DispersiveSpan

C = 299_792_458.0
SSMF_THERMAL_COEFF = 39.0  # ps/(km K)
SSMF_GROUP_INDEX = 1.4682


class ProfileDomainError(ValueError):
    """Temperature trace queried outside its recorded time span."""


@dataclass(frozen=True)
class SinusoidProfile:
    amplitude: float = 1.0  # K
    period: float = 86400.0  # s
    phase: float = -math.pi / 2
    mean: float = 293.15

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("sinusoid period must be positive")

    def temperature(self, t):
        t = np.asarray(t, dtype=float)
        return self.mean + self.amplitude * np.sin(2 * math.pi * t / self.period + self.phase)

    def covers(self, duration: float) -> bool:
        return True

    def to_dict(self) -> dict:
        return {
            "kind": "sinusoid",
            "amplitude_k": self.amplitude,
            "period_s": self.period,
            "phase_rad": self.phase,
            "mean_k": self.mean,
        }


@dataclass(frozen=True)
class RampProfile:
    rate: float = 0.0  # K/s
    start: float = 293.15

    def temperature(self, t):
        t = np.asarray(t, dtype=float)
        return self.start + self.rate * t

    def covers(self, duration: float) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "ramp", "rate_k_per_s": self.rate, "start_k": self.start}


@dataclass(frozen=True)
class TraceProfile:
    times: np.ndarray = field(repr=False)
    temps: np.ndarray = field(repr=False)
    source: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.temps, dtype=float)
        if t.ndim != 1 or t.shape != y.shape or t.size < 2:
            raise ValueError("trace needs matching 1-D time and temperature columns (>= 2 rows)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "temps", y)

    def temperature(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ProfileDomainError(
                f"trace covers [{self.times[0]}, {self.times[-1]}] s; query outside it"
            )
        return np.interp(t, self.times, self.temps)

    def covers(self, duration: float) -> bool:
        return self.times[0] <= 0 and self.times[-1] >= duration

    @classmethod
    def from_csv(cls, path) -> "TraceProfile":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], source=str(path))

    def to_dict(self) -> dict:
        if self.source:
            return {"kind": "trace", "path": self.source}
        return {"kind": "trace", "times_s": self.times.tolist(), "temps_k": self.temps.tolist()}


TemperatureProfile = SinusoidProfile | RampProfile | TraceProfile


def profile_from_dict(d: dict, base_dir=None) -> TemperatureProfile:
    kind = d.get("kind")
    if kind == "sinusoid":
        return SinusoidProfile(
            float(d.get("amplitude_k", 1.0)),
            float(d.get("period_s", 86400.0)),
            float(d.get("phase_rad", -math.pi / 2)),
            float(d.get("mean_k", 293.15)),
        )
    if kind == "ramp":
        return RampProfile(float(d.get("rate_k_per_s", 0.0)), float(d.get("start_k", 293.15)))
    if kind == "constant":
        return RampProfile(0.0, float(d.get("temp_k", 293.15)))
    if kind == "trace":
        if "path" in d:
            path = Path(d["path"])
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return TraceProfile.from_csv(path)
        return TraceProfile(d["times_s"], d["temps_k"])
    raise ValueError(f"unknown temperature profile kind {kind!r}")


@dataclass(frozen=True)
class FiberLink:
    length: float  # km
    profile: TemperatureProfile = field(default_factory=SinusoidProfile)
    thermal_coeff: float = SSMF_THERMAL_COEFF  # ps/(km K)
    group_index: float = SSMF_GROUP_INDEX
    attenuation: float = 0.2  # dB/km
    dispersion: float = 17.0  # ps/(nm km)

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("fiber length must be >= 0")

    @property
    def base_delay(self) -> float:
        """Propagation delay at the reference temperature, seconds."""
        return self.length * 1e3 * self.group_index / C

    @property
    def loss_db(self) -> float:
        return self.length * self.attenuation

    def span(self) -> DispersiveSpan:
        return DispersiveSpan.ssmf(self.length, self.dispersion)

    def to_dict(self) -> dict:
        return {
            "length_km": self.length,
            "thermal_coeff_ps_per_km_k": self.thermal_coeff,
            "group_index": self.group_index,
            "attenuation_db_per_km": self.attenuation,
            "dispersion_ps_per_nm_km": self.dispersion,
            "temperature": self.profile.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "FiberLink":
        prof = d.get("temperature", {"kind": "sinusoid"})
        return cls(
            float(d["length_km"]),
            profile_from_dict(prof, base_dir),
            float(d.get("thermal_coeff_ps_per_km_k", SSMF_THERMAL_COEFF)),
            float(d.get("group_index", SSMF_GROUP_INDEX)),
            float(d.get("attenuation_db_per_km", 0.2)),
            float(d.get("dispersion_ps_per_nm_km", 17.0)),
        )


def one_way_shift(link: FiberLink, t):
    """Thermal delay change since t=0, seconds (scalar or array)."""
    dT = link.profile.temperature(t) - link.profile.temperature(0.0)
    out = link.length * link.thermal_coeff * 1e-12 * dT
    return float(out) if np.ndim(out) == 0 else out


def forward_shift(link: FiberLink, t, asymmetry: float = 0.0):
    """Out-bound share of the two-way drift: (1 + asymmetry) * one-way drift."""
    _check_asymmetry(asymmetry)
    return (1.0 + asymmetry) * one_way_shift(link, t)


def return_shift(link: FiberLink, t, asymmetry: float = 0.0):
    _check_asymmetry(asymmetry)
    return (1.0 - asymmetry) * one_way_shift(link, t)


def two_way_shift(link: FiberLink, t, asymmetry: float = 0.0):
    """Round-trip drift; equals 2x the one-way drift whatever the asymmetry."""
    return forward_shift(link, t, asymmetry) + return_shift(link, t, asymmetry)


def _check_asymmetry(a: float) -> None:
    if not -1.0 <= a <= 1.0:
        raise ValueError("asymmetry must lie in [-1, 1]")
