"""Phase-noise profiles, jitter integration and phase time-series synthesis.

A :class:`PhaseNoiseProfile` is an explicit piecewise power law: each segment
carries its level (dBc/Hz) at its start offset and a slope in dB/decade.
Jitter is integrated in closed form per segment.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

JITTER_BAND = (1e3, 1e7)
PRESET_ENV = "COMBSYNC_PRESET_DIR"
_BUNDLED_PRESETS = Path(__file__).parent / "presets"

# name -> (carrier Hz, white floor dBc/Hz, total jitter over JITTER_BAND in s)
REFERENCE_TARGETS = {
    "carrier_25ghz": (25e9, -130.0, 90e-15),
    "clock_2g5_no_data": (2.5e9, -136.0, 70.3e-15),
    "clock_2g5_with_data": (2.5e9, -133.0, 93.1e-15),
    "embedded_clock_2g5": (2.5e9, -110.0, 18e-12),
}


class ProfileRangeError(ValueError):
    """Offset or band outside the frequency span a profile defines."""


@dataclass(frozen=True)
class Segment:
    f_start: float
    f_end: float
    level: float
    slope: float = 0.0

    def level_at(self, f):
        return self.level + self.slope * np.log10(np.asarray(f, dtype=float) / self.f_start)

    def power_integral(self, f1: float, f2: float) -> float:
        """Integral of the linear PSD 10**(L/10) from f1 to f2 (f1 <= f2)."""
        if f2 <= f1:
            return 0.0
        # L(f) = c * (f / f_start)**a ; integrate in log space for stability
        a = self.slope / 10.0
        c1 = 10.0 ** (self.level_at(f1) / 10.0)
        r = math.log(f2 / f1)
        b = a + 1.0
        if b == 0.0:
            return float(c1 * f1 * r)
        return float(c1 * f1 * math.expm1(b * r) / b)


@dataclass(frozen=True)
class PhaseNoiseProfile:
    carrier_frequency: float
    segments: tuple[Segment, ...]
    name: str = ""

    def __post_init__(self):
        if not self.carrier_frequency > 0:
            raise ValueError("carrier_frequency must be positive")
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("profile needs at least one segment")
        for s in segs:
            if not (0 < s.f_start < s.f_end):
                raise ValueError(f"bad segment span [{s.f_start}, {s.f_end}]")
            if not (math.isfinite(s.level) and math.isfinite(s.slope)):
                raise ValueError("segment level and slope must be finite")
        for left, right in zip(segs, segs[1:]):
            if not math.isclose(left.f_end, right.f_start, rel_tol=1e-12):
                raise ValueError("segments must be contiguous and increasing")
        object.__setattr__(self, "segments", segs)

    @property
    def f_min(self) -> float:
        return self.segments[0].f_start

    @property
    def f_max(self) -> float:
        return self.segments[-1].f_end

    @property
    def white_floor(self) -> float | None:
        """Level of the final segment when it is flat, else None."""
        last = self.segments[-1]
        return last.level if last.slope == 0 else None

    def _segment_index(self, f):
        starts = np.array([s.f_start for s in self.segments])
        idx = np.searchsorted(starts, f, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def psd_linear(self, f) -> np.ndarray:
        """Linear L(f) (1/Hz) on an array of offsets; zero outside the profile."""
        f = np.asarray(f, dtype=float)
        out = np.zeros_like(f)
        inside = (f >= self.f_min) & (f <= self.f_max)
        if np.any(inside):
            fi = f[inside]
            idx = self._segment_index(fi)
            lv = np.array([s.level for s in self.segments])[idx]
            sl = np.array([s.slope for s in self.segments])[idx]
            st = np.array([s.f_start for s in self.segments])[idx]
            out[inside] = 10.0 ** ((lv + sl * np.log10(fi / st)) / 10.0)
        return out

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        d = {
            "carrier_hz": self.carrier_frequency,
            "segments": [
                {
                    "f_start_hz": s.f_start,
                    "f_end_hz": s.f_end,
                    "level_dbc_hz": s.level,
                    "slope_db_per_decade": s.slope,
                }
                for s in self.segments
            ],
        }
        if self.name:
            d["name"] = self.name
        return d

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "PhaseNoiseProfile":
        segs = tuple(
            Segment(
                float(s["f_start_hz"]),
                float(s["f_end_hz"]),
                float(s["level_dbc_hz"]),
                float(s.get("slope_db_per_decade", 0.0)),
            )
            for s in d["segments"]
        )
        return cls(float(d["carrier_hz"]), segs, name=d.get("name", name))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PhaseNoiseProfile":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), name=path.stem)


@dataclass(frozen=True)
class JitterFigure:
    rms_jitter: float
    integration_band: tuple[float, float]
    carrier_frequency: float

    @property
    def rms_phase(self) -> float:
        """RMS phase deviation in radians."""
        return self.rms_jitter * 2 * math.pi * self.carrier_frequency


@dataclass
class PhaseRecord:
    sample_rate: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "phase_s"])
            for t, x in zip(self.times, self.samples):
                w.writerow([repr(float(t)), repr(float(x))])

    @classmethod
    def from_csv(cls, path) -> "PhaseRecord":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, x = data[:, 0], data[:, 1]
        if t.size < 2:
            raise ValueError("need at least two samples to infer the sample rate")
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-6, atol=0):
            raise ValueError("time_s column is not uniformly sampled")
        return cls(1.0 / float(np.mean(dt)), x)


def evaluate_psd(profile: PhaseNoiseProfile, offset: float) -> float:
    """Level in dBc/Hz at ``offset``. Breakpoints belong to the right segment."""
    if not (profile.f_min <= offset <= profile.f_max):
        raise ProfileRangeError(
            f"offset {offset} Hz outside [{profile.f_min}, {profile.f_max}]"
        )
    seg = profile.segments[int(profile._segment_index(offset))]
    return float(seg.level_at(offset))


def integrated_phase_power(profile: PhaseNoiseProfile, band: tuple[float, float]) -> float:
    """Closed-form integral of linear L(f) over ``band`` (rad^2/2)."""
    f_lo, f_hi = band
    if f_lo > f_hi:
        raise ValueError("band must satisfy f_low <= f_high")
    if f_lo < profile.f_min * (1 - 1e-12) or f_hi > profile.f_max * (1 + 1e-12):
        raise ProfileRangeError(
            f"band [{f_lo}, {f_hi}] outside profile [{profile.f_min}, {profile.f_max}]"
        )
    total = 0.0
    for s in profile.segments:
        a, b = max(f_lo, s.f_start), min(f_hi, s.f_end)
        if b > a:
            total += s.power_integral(a, b)
    return total


def integrate_jitter(profile: PhaseNoiseProfile, band=JITTER_BAND) -> JitterFigure:
    """RMS timing jitter sqrt(2 * int L(f) df) / (2 pi f_c) over ``band``."""
    power = integrated_phase_power(profile, band)
    sigma = math.sqrt(2.0 * power) / (2 * math.pi * profile.carrier_frequency)
    return JitterFigure(sigma, (float(band[0]), float(band[1])), profile.carrier_frequency)


def apply_divider(profile: PhaseNoiseProfile, ratio: int) -> PhaseNoiseProfile:
    """Ideal frequency divider: carrier / ratio, every level down 20*log10(ratio)."""
    if int(ratio) != ratio or ratio < 1:
        raise ValueError("divider ratio must be a positive integer")
    if ratio == 1:
        return profile
    drop = 20.0 * math.log10(ratio)
    segs = tuple(Segment(s.f_start, s.f_end, s.level - drop, s.slope) for s in profile.segments)
    name = f"{profile.name}_div{ratio}" if profile.name else ""
    return PhaseNoiseProfile(profile.carrier_frequency / ratio, segs, name=name)


def synthesize_phase(
    profile: PhaseNoiseProfile, sample_rate: float, n: int, seed: int
) -> PhaseRecord:
    """Gaussian phase realization whose spectrum follows ``profile``.

    Unit complex white noise is shaped by the square root of the two-sided
    phase PSD (numerically equal to L(f)) and inverse transformed. Bins
    outside the profile span carry no power. Output is in seconds.
    """
    if n < 2 or n & (n - 1):
        raise ValueError("n must be a power of two >= 2")
    if sample_rate / 2 < profile.f_max:
        raise ValueError(
            f"sample_rate {sample_rate} Hz too low for profile up to {profile.f_max} Hz"
        )
    rng = np.random.default_rng(seed)
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    psd = profile.psd_linear(freqs)
    # E|X_k|^2 = n * fs * L(f_k) gives a one-sided periodogram of 2 L(f)
    amp = np.sqrt(n * sample_rate * psd)
    bins = amp * (rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size))
    bins /= math.sqrt(2.0)
    bins[0] = 0.0
    bins[-1] = amp[-1] * rng.standard_normal()
    phase_rad = np.fft.irfft(bins, n=n)
    return PhaseRecord(sample_rate, phase_rad / (2 * math.pi * profile.carrier_frequency))


def rms_of_record(record) -> float:
    """Mean-removed RMS of a PhaseRecord or plain sequence, in seconds."""
    x = record.samples if isinstance(record, PhaseRecord) else np.asarray(record, dtype=float)
    if x.size == 0:
        raise ValueError("cannot take the RMS of an empty record")
    x = x - x[0]  # conditioning for records with a large fixed offset
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


# -- presets ---------------------------------------------------------------

def calibrate_corner_profile(
    carrier_hz: float,
    floor_dbc_hz: float,
    target_jitter: float,
    band=JITTER_BAND,
    name: str = "",
) -> PhaseNoiseProfile:
    """Profile of a 1/f^2 skirt meeting a white floor, tuned to a jitter target.

    With floor power F and corner fc the band power is
    F * (f_hi - 2 fc + fc**2 / f_lo); the corner is the root of that
    quadratic lying inside the band.
    """
    f_lo, f_hi = band
    F = 10.0 ** (floor_dbc_hz / 10.0)
    needed = (target_jitter * 2 * math.pi * carrier_hz) ** 2 / 2.0
    ratio = needed / F
    if ratio < f_hi - f_lo:
        raise ValueError("target jitter is below what the white floor alone produces")
    fc = f_lo * (1.0 + math.sqrt(1.0 - (f_hi - ratio) / f_lo))
    if fc >= f_hi:
        raise ValueError("corner falls outside the band; raise the floor")
    if math.isclose(fc, f_lo, rel_tol=1e-12):
        segs = (Segment(f_lo, f_hi, floor_dbc_hz, 0.0),)
    else:
        start_level = floor_dbc_hz + 20.0 * math.log10(fc / f_lo)
        segs = (
            Segment(f_lo, fc, start_level, -20.0),
            Segment(fc, f_hi, floor_dbc_hz, 0.0),
        )
    return PhaseNoiseProfile(carrier_hz, segs, name=name)


def reference_presets() -> dict[str, PhaseNoiseProfile]:
    return {
        name: calibrate_corner_profile(fc, floor, target, name=name)
        for name, (fc, floor, target) in REFERENCE_TARGETS.items()
    }


def write_reference_presets(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, prof in reference_presets().items():
        p = directory / f"{name}.json"
        prof.save(p)
        paths.append(p)
    return paths


def preset_dir() -> Path:
    env = os.environ.get(PRESET_ENV)
    return Path(env) if env else _BUNDLED_PRESETS


def available_presets(directory=None) -> list[str]:
    d = Path(directory) if directory is not None else preset_dir()
    if not d.is_dir():
        return []
    return sorted(p.stem for p in d.glob("*.json"))


def load_preset(name: str, directory=None) -> PhaseNoiseProfile:
    d = Path(directory) if directory is not None else preset_dir()
    path = d / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(f"noise preset {name!r} not found in {d}")
    return PhaseNoiseProfile.load(path)


def load_presets(names=None, directory=None) -> dict[str, PhaseNoiseProfile]:
    names = available_presets(directory) if names is None else names
    return {n: load_preset(n, directory) for n in names}
