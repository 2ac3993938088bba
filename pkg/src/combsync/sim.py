"""Scenario engine binding fiber drift, optics, noise presets and caching sessions.

Slow wander (fiber drift plus the caching loop) is stepped explicitly at the
update interval; fast phase noise is handled spectrally through the noise
presets and reported as integrated jitter.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import noise
from .fiber import FiberLink, RampProfile, one_way_shift
from .optics import CombSpec, DispersiveSpan, PhotodetectorSpec, filtered_comb, harmonic_amplitude
from .protocol import (
    CachingConfig,
    SessionTrace,
    estimate_uncompensated,
    run_session,
    session_rngs,
)

log = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
CARRIER_SURVIVAL_THRESHOLD = 0.9
# recorded offsets sit on a 2**-50 s (~0.89 fs) grid so the reconstruction
# sync + two_way / 2 is exact in binary floating point
RECORD_GRID = 2.0**-50


class ScenarioError(ValueError):
    """Scenario fails validation."""


def _snap(x: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(x) / RECORD_GRID) * RECORD_GRID


@dataclass(frozen=True)
class Scenario:
    trunk: FiberLink = field(default_factory=lambda: FiberLink(13.0))
    feeders: tuple[FiberLink, ...] = field(default_factory=lambda: (FiberLink(0.08),))
    comb: CombSpec = field(default_factory=lambda: CombSpec.uniform(2.5e9, 1551.1e-9, 161))
    pd: PhotodetectorSpec = field(default_factory=lambda: PhotodetectorSpec(40e9))
    caching: CachingConfig = field(default_factory=CachingConfig)
    duration: float = 57600.0
    noise_presets: tuple[str, ...] = tuple(noise.REFERENCE_TARGETS)
    seed: int = 1
    n_rus: int = 1
    obpf_bandwidth: float = 50e9
    asymmetry: float = 0.0
    caching_enabled: bool = True
    feeder_in_return_path: bool = False
    histogram_bin: float = 0.5e-12
    carrier_frequency: float = 25e9
    name: str = "default"

    @property
    def links(self) -> tuple[FiberLink, ...]:
        return (self.trunk, *self.feeders)

    def feeder(self, i: int) -> FiberLink:
        return self.feeders[0] if len(self.feeders) == 1 else self.feeders[i]

    def validate(self) -> None:
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        if self.n_rus < 1:
            raise ScenarioError("n_rus must be >= 1")
        if len(self.feeders) not in (1, self.n_rus):
            raise ScenarioError("give one feeder per RU or a single shared feeder template")
        if not -1.0 <= self.asymmetry <= 1.0:
            raise ScenarioError("asymmetry must lie in [-1, 1]")
        if not self.histogram_bin > 0:
            raise ScenarioError("histogram_bin must be positive")
        steps = self.duration / self.caching.update_interval
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ScenarioError("duration must be a whole number of update intervals")
        for link in self.links:
            if not link.profile.covers(self.duration):
                raise ScenarioError("temperature trace is shorter than the scenario duration")
        missing = [n for n in self.noise_presets if n not in noise.available_presets()]
        if missing:
            raise ScenarioError(f"noise presets not found: {missing}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "duration_s": self.duration,
            "seed": self.seed,
            "n_rus": self.n_rus,
            "caching_enabled": self.caching_enabled,
            "asymmetry": self.asymmetry,
            "feeder_in_return_path": self.feeder_in_return_path,
            "trunk": self.trunk.to_dict(),
            "feeders": [f.to_dict() for f in self.feeders],
            "comb": self.comb.to_dict(),
            "obpf_bandwidth_hz": self.obpf_bandwidth,
            "photodetector": {
                "bandwidth_hz": self.pd.bandwidth,
                "responsivity_relative": self.pd.responsivity_relative,
            },
            "caching": self.caching.to_dict(),
            "noise_presets": list(self.noise_presets),
            "histogram_bin_s": self.histogram_bin,
            "carrier_hz": self.carrier_frequency,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "Scenario":
        try:
            base = cls()
            pd = d.get("photodetector", {})
            kw = dict(
                name=d.get("name", base.name),
                duration=float(d.get("duration_s", base.duration)),
                seed=int(d.get("seed", base.seed)),
                n_rus=int(d.get("n_rus", base.n_rus)),
                caching_enabled=bool(d.get("caching_enabled", True)),
                asymmetry=float(d.get("asymmetry", 0.0)),
                feeder_in_return_path=bool(d.get("feeder_in_return_path", False)),
                obpf_bandwidth=float(d.get("obpf_bandwidth_hz", base.obpf_bandwidth)),
                pd=PhotodetectorSpec(
                    float(pd.get("bandwidth_hz", base.pd.bandwidth)),
                    float(pd.get("responsivity_relative", 1.0)),
                ),
                histogram_bin=float(d.get("histogram_bin_s", base.histogram_bin)),
                carrier_frequency=float(d.get("carrier_hz", base.carrier_frequency)),
            )
            if "trunk" in d:
                kw["trunk"] = FiberLink.from_dict(d["trunk"], base_dir)
            if "feeders" in d:
                kw["feeders"] = tuple(FiberLink.from_dict(f, base_dir) for f in d["feeders"])
            if "comb" in d:
                kw["comb"] = CombSpec.from_dict(d["comb"])
            if "caching" in d:
                kw["caching"] = CachingConfig.from_dict(d["caching"])
            if "noise_presets" in d:
                kw["noise_presets"] = tuple(d["noise_presets"])
            return cls(**kw)
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def default_scenario() -> Scenario:
    return Scenario.load(SCENARIO_DIR / "default.json")


@dataclass
class Histogram:
    start: float
    bin_width: float
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return self.start + (np.arange(self.counts.size) + 0.5) * self.bin_width

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center_s", "count"])
            for c, n in zip(self.centers.tolist(), self.counts.tolist()):
                w.writerow([repr(c), n])


def histogram(offsets, bin_width: float) -> Histogram:
    """Fixed-width bins starting at min(offsets) and covering max(offsets)."""
    x = np.asarray(offsets, dtype=float)
    if x.size == 0:
        raise ValueError("cannot histogram an empty series")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    lo, hi = float(x.min()), float(x.max())
    nbins = int(math.floor((hi - lo) / bin_width)) + 1
    if nbins > 10_000_000:
        raise ValueError("bin_width too small for the data span")
    idx = np.clip(np.floor((x - lo) / bin_width).astype(np.int64), 0, nbins - 1)
    return Histogram(lo, float(bin_width), np.bincount(idx, minlength=nbins))


@dataclass
class JitterTable:
    figures: dict[str, noise.JitterFigure]
    carrier_harmonic: int
    carrier_amplitude: float

    @property
    def carrier_survives(self) -> bool:
        return self.carrier_amplitude >= CARRIER_SURVIVAL_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "presets": [
                {
                    "name": n,
                    "carrier_hz": f.carrier_frequency,
                    "band_hz": list(f.integration_band),
                    "rms_jitter_s": f.rms_jitter,
                    "rms_jitter_fs": f.rms_jitter * 1e15,
                }
                for n, f in self.figures.items()
            ],
            "carrier_harmonic": self.carrier_harmonic,
            "carrier_amplitude": self.carrier_amplitude,
            "carrier_survives": self.carrier_survives,
        }


def carrier_amplitude(scenario: Scenario, feeder_index: int = 0) -> tuple[int, float]:
    """Harmonic index and faded amplitude of the RF carrier over trunk + feeder."""
    k = round(scenario.carrier_frequency / scenario.comb.f_rep)
    if k * scenario.comb.f_rep > scenario.pd.bandwidth:
        return k, 0.0
    comb = filtered_comb(scenario.comb, scenario.obpf_bandwidth)
    feeder = scenario.feeder(feeder_index)
    length_m = (scenario.trunk.length + feeder.length) * 1e3
    span = DispersiveSpan(length_m, scenario.trunk.span().dispersion_D)
    return k, harmonic_amplitude(comb, span, k)


def jitter_report(presets, scenario: Scenario | None = None) -> JitterTable:
    """Integrate every preset over 1 kHz - 10 MHz and attach the carrier fading."""
    scenario = Scenario() if scenario is None else scenario
    if isinstance(presets, dict):
        items = presets.items()
    else:
        items = ((p.name, p) for p in presets)
    figs = {}
    for name, prof in items:
        try:
            figs[name] = noise.integrate_jitter(prof, noise.JITTER_BAND)
        except noise.ProfileRangeError as exc:
            raise noise.ProfileRangeError(f"preset {name!r} band too narrow: {exc}") from exc
    k, amp = carrier_amplitude(scenario)
    return JitterTable(figs, k, amp)


@dataclass
class RuReport:
    index: int
    time: np.ndarray = field(repr=False)
    true_forward: np.ndarray = field(repr=False)
    two_way_measured: np.ndarray = field(repr=False)
    synchronized_offset: np.ndarray = field(repr=False)
    estimated_uncompensated: np.ndarray = field(repr=False)
    histogram: Histogram = field(repr=False)
    trace: SessionTrace = field(repr=False)

    @property
    def rms_wander(self) -> float:
        return noise.rms_of_record(self.synchronized_offset)

    @property
    def max_abs_offset(self) -> float:
        return float(np.max(np.abs(self.synchronized_offset)))

    @property
    def rms_uncompensated(self) -> float:
        return noise.rms_of_record(self.estimated_uncompensated)

    @property
    def wrap_slips(self) -> int:
        return self.trace.wrap_slips

    def metrics(self) -> dict:
        return {
            "ru": self.index,
            "rms_wander_s": self.rms_wander,
            "max_abs_offset_s": self.max_abs_offset,
            "rms_uncompensated_s": self.rms_uncompensated,
            "wrap_slips": self.wrap_slips,
            "n_samples": int(self.time.size),
            "histogram_bins": int(self.histogram.counts.size),
        }


@dataclass
class ScenarioReport:
    scenario: Scenario = field(repr=False)
    rus: list[RuReport] = field(repr=False)
    jitter: JitterTable | None
    seed: int
    config_hash: str

    @property
    def rms_wander(self) -> float:
        """Worst RU's RMS wander."""
        return max(r.rms_wander for r in self.rus)

    @property
    def max_abs_offset(self) -> float:
        return max(r.max_abs_offset for r in self.rus)

    @property
    def wrap_slips(self) -> int:
        return sum(r.wrap_slips for r in self.rus)

    def metrics(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "caching_enabled": self.scenario.caching_enabled,
            "rms_wander_s": self.rms_wander,
            "max_abs_offset_s": self.max_abs_offset,
            "wrap_slips": self.wrap_slips,
            "per_ru": [r.metrics() for r in self.rus],
            "jitter": None if self.jitter is None else self.jitter.to_dict(),
        }

    def summary_line(self) -> str:
        parts = [
            f"rms_wander_ps={self.rms_wander * 1e12:.3f}",
            f"max_offset_ps={self.max_abs_offset * 1e12:.3f}",
            f"wrap_slips={self.wrap_slips}",
        ]
        if self.jitter is not None:
            parts += [
                f"jitter_fs[{n}]={f.rms_jitter * 1e15:.2f}" for n, f in self.jitter.figures.items()
            ]
            parts.append(f"carrier_amplitude={self.jitter.carrier_amplitude:.4f}")
        parts.append(f"seed={self.seed}")
        return " ".join(parts)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "report.json"]
        written[0].write_text(json.dumps(self.metrics(), indent=2) + "\n")
        for r in self.rus:
            sfx = "" if r.index == 0 else f"_ru{r.index}"
            for stem, series in (
                ("offsets", r.synchronized_offset),
                ("two_way", r.two_way_measured),
                ("uncompensated", r.estimated_uncompensated),
            ):
                p = out / f"{stem}{sfx}.csv"
                write_series_csv(p, r.time, series)
                written.append(p)
            p = out / f"histogram{sfx}.csv"
            r.histogram.to_csv(p)
            written.append(p)
        return written


def write_series_csv(path, time, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "offset_s"])
        for t, v in zip(np.asarray(time).tolist(), np.asarray(values).tolist()):
            w.writerow([repr(t), repr(v)])


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def _state_at(trace: SessionTrace, times: np.ndarray, tol: float):
    idx = np.searchsorted(trace.apply_times, times + tol, side="right") - 1
    have = idx >= 0
    safe = np.where(have, idx, 0)
    if trace.clock_pi.size == 0:
        zeros = np.zeros_like(times)
        return zeros, zeros.copy()
    clock = np.where(have, trace.clock_pi[safe], 0.0)
    cached = np.where(have, trace.cached[safe], 0.0)
    return clock, cached


def _ru_seed(seed: int, i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(i,))


def run_scenario(s: Scenario, with_jitter: bool = True) -> ScenarioReport:
    s.validate()
    cfg = s.caching
    n_updates = int(round(s.duration / cfg.update_interval))
    t_upd = np.arange(n_updates) * cfg.update_interval
    n_eval = int(round(s.duration * cfg.eval_rate))
    t_eval = np.arange(n_eval) / cfg.eval_rate
    tol = 1e-6 * min(cfg.update_interval, 1.0 / cfg.eval_rate)

    trunk_upd = one_way_shift(s.trunk, t_upd)
    trunk_eval = one_way_shift(s.trunk, t_eval)

    rus = []
    for i in range(s.n_rus):
        feeder = s.feeder(i)
        two_way_true = 2.0 * trunk_upd
        if s.feeder_in_return_path:
            two_way_true = two_way_true + 2.0 * one_way_shift(feeder, t_upd)
        trace = run_session(two_way_true, cfg, _ru_seed(s.seed, i), enabled=s.caching_enabled)
        if trace.wrap_slips:
            log.warning("RU %d: %d wrap slips; drift per update exceeds UI/2", i, trace.wrap_slips)

        forward = (1.0 + s.asymmetry) * trunk_eval + one_way_shift(feeder, t_eval)
        clock_pi, cached = _state_at(trace, t_eval, tol)
        eval_rng = session_rngs(_ru_seed(s.seed, i))[2]
        meas = cfg.eval_noise_sigma * eval_rng.standard_normal(n_eval)

        sync = _snap(forward + clock_pi + meas)
        two_way = _snap(cached)
        green = estimate_uncompensated(sync, two_way)
        rus.append(
            RuReport(
                index=i,
                time=t_eval,
                true_forward=_snap(forward),
                two_way_measured=two_way,
                synchronized_offset=sync,
                estimated_uncompensated=green,
                histogram=histogram(sync, s.histogram_bin),
                trace=trace,
            )
        )

    jt = None
    if with_jitter:
        jt = jitter_report(noise.load_presets(list(s.noise_presets)), s)
    return ScenarioReport(s, rus, jt, s.seed, s.config_hash())


def linear_drift_scenario(
    drift_rate: float, duration: float, caching: CachingConfig | None = None, **kw
) -> Scenario:
    """Trunk-only linear one-way drift of ``drift_rate`` s/s; feeder held still."""
    trunk = FiberLink(13.0)
    k_per_s = drift_rate / (trunk.length * trunk.thermal_coeff * 1e-12)
    trunk = replace(trunk, profile=RampProfile(k_per_s))
    feeder = FiberLink(0.08, profile=RampProfile(0.0))
    return Scenario(
        trunk=trunk,
        feeders=(feeder,),
        caching=caching or CachingConfig(),
        duration=duration,
        name=f"linear_{drift_rate:g}",
        **kw,
    )

