"""Optical comb, square-law photodetection and dispersion fading of RF beat tones."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

C = 299_792_458.0
PS_PER_NM_KM = 1e-6  # ps/(nm km) -> s/m^2

REFERENCE_RATIO_DB = 6.57
CROSSTALK_ALPHA = 0.05
DEFAULT_Q = 7.0


@dataclass(frozen=True)
class CombSpec:
    f_rep: float
    center_wavelength: float
    n_lines: int
    envelope: tuple[float, ...]

    def __post_init__(self):
        env = tuple(float(w) for w in self.envelope)
        object.__setattr__(self, "envelope", env)
        if not self.f_rep > 0:
            raise ValueError("f_rep must be positive")
        if not self.center_wavelength > 0:
            raise ValueError("center_wavelength must be positive")
        if self.n_lines < 1:
            raise ValueError("comb needs at least one line")
        if len(env) != self.n_lines:
            raise ValueError("envelope length must equal n_lines")
        if any(w < 0 or not math.isfinite(w) for w in env) or not any(env):
            raise ValueError("envelope weights must be finite, >= 0 and not all zero")

    @classmethod
    def uniform(cls, f_rep: float, center_wavelength: float, n_lines: int) -> "CombSpec":
        return cls(f_rep, center_wavelength, n_lines, (1.0,) * n_lines)

    @classmethod
    def gaussian(
        cls, f_rep: float, center_wavelength: float, n_lines: int, fwhm: float
    ) -> "CombSpec":
        """Gaussian field envelope; ``fwhm`` is the optical power FWHM in Hz."""
        offs = (np.arange(n_lines) - (n_lines - 1) / 2) * f_rep
        sigma_p = fwhm / (2 * math.sqrt(2 * math.log(2)))
        w = np.exp(-(offs**2) / (4 * sigma_p**2))
        return cls(f_rep, center_wavelength, n_lines, tuple(w))

    @property
    def offsets(self) -> np.ndarray:
        """Line frequency offsets from the comb centre, Hz."""
        return (np.arange(self.n_lines) - (self.n_lines - 1) / 2) * self.f_rep

    def to_dict(self) -> dict:
        return {
            "f_rep_hz": self.f_rep,
            "center_wavelength_m": self.center_wavelength,
            "n_lines": self.n_lines,
            "envelope": list(self.envelope),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CombSpec":
        n = int(d["n_lines"])
        env = d.get("envelope")
        if env is None or env == "uniform":
            env = (1.0,) * n
        return cls(float(d["f_rep_hz"]), float(d["center_wavelength_m"]), n, tuple(env))


@dataclass(frozen=True)
class DispersiveSpan:
    length: float  # m
    dispersion_D: float  # s/m^2
    reference_wavelength: float = 1550e-9

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("span length must be >= 0")

    @classmethod
    def ssmf(cls, length_km: float, d_ps_nm_km: float = 17.0) -> "DispersiveSpan":
        return cls(length_km * 1e3, d_ps_nm_km * PS_PER_NM_KM)


@dataclass(frozen=True)
class PhotodetectorSpec:
    bandwidth: float
    responsivity_relative: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("photodetector bandwidth must be positive")


@dataclass(frozen=True)
class LinkBudget:
    ledger: tuple[tuple[str, float], ...]
    clock_to_data_power_ratio: float  # dB

    def __post_init__(self):
        if not self.ledger:
            raise ValueError("link budget ledger must not be empty")
        object.__setattr__(
            self, "ledger", tuple((str(k), float(v)) for k, v in self.ledger)
        )

    def to_dict(self) -> dict:
        return {
            "ledger": [{"stage": k, "power_dbm": v} for k, v in self.ledger],
            "clock_to_data_power_ratio_db": self.clock_to_data_power_ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinkBudget":
        return cls(
            tuple((e["stage"], e["power_dbm"]) for e in d["ledger"]),
            float(d["clock_to_data_power_ratio_db"]),
        )


def default_link_budget() -> LinkBudget:
    return LinkBudget(
        (
            ("du_data_after_eml", -19.75),
            ("du_filtered_comb", -10.17),
            ("trunk_launch", 10.35),
            ("ru_data_before_coupler", -9.77),
            ("ru_pd_received", -7.08),
            ("ru_return_launch", -1.00),
            ("du_return_received", -17.7),
        ),
        REFERENCE_RATIO_DB,
    )


def pair_phase_step(comb: CombSpec, span: DispersiveSpan) -> float:
    """Beat-phase increment per line index for unit harmonic order, rad."""
    lam = comb.center_wavelength
    return 2 * math.pi * comb.f_rep**2 * span.dispersion_D * span.length * lam**2 / C


def harmonic_amplitude(comb: CombSpec, span: DispersiveSpan, k: int) -> float:
    """Normalized amplitude of the k-th RF harmonic after dispersion."""
    w = np.asarray(comb.envelope)
    if k < 0 or k >= comb.n_lines:
        return 0.0
    pairs = w[: comb.n_lines - k] * w[k:]
    norm = pairs.sum()
    if norm == 0:
        return 0.0
    if k == 0:
        return 1.0
    theta = pair_phase_step(comb, span)
    n = np.arange(pairs.size)
    return float(abs(np.sum(pairs * np.exp(1j * theta * n * k))) / norm)


def rf_comb_harmonics(
    comb: CombSpec, span: DispersiveSpan, pd: PhotodetectorSpec
) -> list[tuple[int, float, float]]:
    """(k, k*f_rep, amplitude) for every harmonic inside the PD bandwidth.

    Harmonics with no contributing line pair report amplitude 0.
    """
    k_max = int(math.floor(pd.bandwidth / comb.f_rep * (1 + 1e-12)))
    if k_max < 1:
        raise ValueError("f_rep exceeds photodetector bandwidth; no RF harmonics")
    return [(k, k * comb.f_rep, harmonic_amplitude(comb, span, k)) for k in range(k_max + 1)]


def filtered_comb(comb: CombSpec, filter_bandwidth: float) -> CombSpec:
    """Ideal rectangular band-pass centred on the comb; lines strictly inside survive."""
    if not filter_bandwidth > 0:
        raise ValueError("filter bandwidth must be positive")
    keep = np.abs(comb.offsets) < filter_bandwidth / 2
    env = np.asarray(comb.envelope)[keep]
    if env.size == 0 or not env.any():
        raise ValueError("filter removes all comb lines")
    return CombSpec(comb.f_rep, comb.center_wavelength, int(env.size), tuple(env))


def fading_table(
    comb: CombSpec,
    filter_bandwidths,
    lengths_km,
    pd: PhotodetectorSpec,
    d_ps_nm_km: float = 17.0,
) -> list[dict]:
    """Harmonic amplitude rows for each (filter bandwidth, fiber length) pair."""
    rows = []
    for bw in filter_bandwidths:
        fc = filtered_comb(comb, bw)
        for L in lengths_km:
            span = DispersiveSpan.ssmf(L, d_ps_nm_km)
            k_max = int(math.floor(pd.bandwidth / comb.f_rep * (1 + 1e-12)))
            for k in range(1, k_max + 1):
                rows.append(
                    {
                        "filter_bw_hz": float(bw),
                        "length_km": float(L),
                        "n_lines": fc.n_lines,
                        "k": k,
                        "freq_hz": k * comb.f_rep,
                        "amplitude": harmonic_amplitude(fc, span, k),
                    }
                )
    return rows


def write_harmonics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "freq_hz", "amplitude"])
        for k, f, a in rows:
            w.writerow([k, repr(float(f)), repr(float(a))])


def ber_from_q(q: float) -> float:
    return 0.5 * math.erfc(q / math.sqrt(2.0))


def effective_q(budget: LinkBudget, q_at_reference: float, alpha: float = CROSSTALK_ALPHA) -> float:
    """Q after comb crosstalk: Q * (1 - alpha * r), r = clock/data ratio vs 6.57 dB."""
    r = 10.0 ** ((budget.clock_to_data_power_ratio - REFERENCE_RATIO_DB) / 10.0)
    return max(0.0, q_at_reference * (1.0 - alpha * r))


def estimate_ber(
    budget: LinkBudget, q_at_reference: float = DEFAULT_Q, alpha: float = CROSSTALK_ALPHA
) -> float:
    if not q_at_reference > 0:
        raise ValueError("q_at_reference must be positive")
    return ber_from_q(effective_q(budget, q_at_reference, alpha))


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict(), indent=2) + "\n")
