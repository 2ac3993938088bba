"""Clock phase caching: DU two-way measurement and RU phase-store corrections.

The DU measures the two-way phase of returning data modulo one unit
interval and sends the wrapped residual. The RU accumulates residuals into an
unwrapped cache, drives the return-data interpolator with the quantized
negative cache and its main-clock interpolator with the quantized negative
half-cache.
"""

from __future__ import annotations

import csv
import math
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

FS = 1e-15
WIRE = struct.Struct("<IqQ")  # seq u32, residual fs i64, timestamp ns u64


class ReorderError(ValueError):
    """An update arrived with a sequence number not newer than the last applied."""


@dataclass(frozen=True)
class CachingConfig:
    update_interval: float = 0.1
    unit_interval: float = 400e-12
    pi_resolution: float = 3.125e-12
    measurement_noise_sigma: float = 1e-12
    eval_rate: float = 10.0
    eval_noise_sigma: float = 6e-12
    transport_latency: float | None = None  # None -> one update interval
    loss_probability: float = 0.0

    def __post_init__(self):
        for name in ("update_interval", "unit_interval", "pi_resolution", "eval_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.measurement_noise_sigma < 0 or self.eval_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0.0 <= self.loss_probability < 1.0:
            raise ValueError("loss_probability must lie in [0, 1)")
        lat = self.latency
        # longer latency makes the unity-gain accumulator count a residual twice
        if not 0.0 <= lat <= self.update_interval * (1 + 1e-12):
            raise ValueError("transport_latency must lie in [0, update_interval]")

    @property
    def latency(self) -> float:
        return self.update_interval if self.transport_latency is None else self.transport_latency

    def to_dict(self) -> dict:
        return {
            "update_interval_s": self.update_interval,
            "unit_interval_s": self.unit_interval,
            "pi_resolution_s": self.pi_resolution,
            "measurement_noise_sigma_s": self.measurement_noise_sigma,
            "eval_rate_hz": self.eval_rate,
            "eval_noise_sigma_s": self.eval_noise_sigma,
            "transport_latency_s": self.transport_latency,
            "loss_probability": self.loss_probability,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CachingConfig":
        keys = {
            "update_interval_s": "update_interval",
            "unit_interval_s": "unit_interval",
            "pi_resolution_s": "pi_resolution",
            "measurement_noise_sigma_s": "measurement_noise_sigma",
            "eval_rate_hz": "eval_rate",
            "eval_noise_sigma_s": "eval_noise_sigma",
            "transport_latency_s": "transport_latency",
            "loss_probability": "loss_probability",
        }
        unknown = set(d) - set(keys)
        if unknown:
            raise ValueError(f"unknown caching keys: {sorted(unknown)}")
        return cls(**{keys[k]: v for k, v in d.items()})


@dataclass(frozen=True)
class CachingState:
    cached_two_way: float = 0.0
    last_wrapped_measurement: float = 0.0
    return_pi_setting: float = 0.0
    clock_pi_setting: float = 0.0
    update_count: int = 0
    last_sequence: int = -1


@dataclass(frozen=True)
class PhaseUpdateMsg:
    sequence_number: int
    residual_two_way: float
    timestamp: float

    def encode(self) -> bytes:
        return WIRE.pack(
            self.sequence_number,
            round(self.residual_two_way / FS),
            round(self.timestamp * 1e9),
        )

    @classmethod
    def decode(cls, buf: bytes) -> "PhaseUpdateMsg":
        seq, res_fs, ts_ns = WIRE.unpack(buf)
        return cls(seq, res_fs * FS, ts_ns * 1e-9)


def encode_log(msgs) -> bytes:
    return b"".join(m.encode() for m in msgs)


def decode_log(buf: bytes) -> list[PhaseUpdateMsg]:
    if len(buf) % WIRE.size:
        raise ValueError(f"log length {len(buf)} is not a multiple of {WIRE.size}")
    return [PhaseUpdateMsg.decode(buf[i : i + WIRE.size]) for i in range(0, len(buf), WIRE.size)]


def wrap_to_half_ui(x: float, ui: float) -> float:
    """Map x into (-ui/2, +ui/2]."""
    return x - ui * math.ceil(x / ui - 0.5)


def quantize(x: float, step: float) -> float:
    return step * round(x / step)


def _fs_grid(x: float) -> float:
    # residuals travel as integer femtoseconds
    return round(x / FS) * FS


def _fs(x: float) -> int:
    return round(x / FS)


def _round_half_even(a: int, b: int) -> int:
    q, r = divmod(a, b)
    return q + (2 * r > b or (2 * r == b and q & 1))


def _pi_settings(cached_fs: int, step: float) -> tuple[float, float]:
    """(return_pi, clock_pi) for an integer-fs cache.

    Whole-fs steps are quantized exactly in integers so that ties round the
    same way every time; finer steps fall back to float rounding.
    """
    step_fs = round(step / FS)
    if step_fs >= 1 and abs(step / FS - step_fs) < 1e-9:
        ret = -step_fs * _round_half_even(cached_fs, step_fs)
        clk = -step_fs * _round_half_even(cached_fs, 2 * step_fs)
        return ret * FS, clk * FS
    cached = cached_fs * FS
    return -quantize(cached, step), -quantize(cached / 2, step)


def du_measure(
    true_two_way: float,
    state: CachingState,
    cfg: CachingConfig,
    rng=None,
    sequence_number: int = 0,
    timestamp: float = 0.0,
) -> PhaseUpdateMsg:
    """Wrapped two-way residual seen by the DU against the RU's pre-correction."""
    rng = np.random.default_rng(rng)
    noise = cfg.measurement_noise_sigma * rng.standard_normal()
    raw = true_two_way + state.return_pi_setting + noise
    residual = _fs_grid(wrap_to_half_ui(raw, cfg.unit_interval))
    return PhaseUpdateMsg(sequence_number, residual, timestamp)


def ru_apply_update(msg: PhaseUpdateMsg, state: CachingState, cfg: CachingConfig) -> CachingState:
    if msg.sequence_number <= state.last_sequence:
        raise ReorderError(
            f"update {msg.sequence_number} not newer than {state.last_sequence}"
        )
    # accumulate in integer fs so long sessions carry no float roundoff
    cached_fs = _fs(state.cached_two_way) + _fs(msg.residual_two_way)
    ret, clk = _pi_settings(cached_fs, cfg.pi_resolution)
    return CachingState(
        cached_two_way=cached_fs * FS,
        last_wrapped_measurement=msg.residual_two_way,
        return_pi_setting=ret,
        clock_pi_setting=clk,
        update_count=state.update_count + 1,
        last_sequence=msg.sequence_number,
    )


def ru_clock_offset(state: CachingState, true_one_way_forward: float) -> float:
    """Residual RU clock offset against the DU after the main-clock correction."""
    return true_one_way_forward + state.clock_pi_setting


def estimate_uncompensated(synchronized_offsets, two_way_series) -> np.ndarray:
    """Synchronized offset plus half the measured two-way shift."""
    s = np.asarray(synchronized_offsets, dtype=float)
    w = np.asarray(two_way_series, dtype=float)
    if s.shape != w.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {w.shape}")
    return s + w / 2


def replay(msgs, cfg: CachingConfig, state: CachingState | None = None) -> list[CachingState]:
    """RU state after each message of a recorded update log."""
    state = CachingState() if state is None else state
    out = []
    for m in msgs:
        state = ru_apply_update(m, state, cfg)
        out.append(state)
    return out


def session_rngs(seed) -> tuple[np.random.Generator, ...]:
    """Independent (measurement, loss, evaluation) streams for one session."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


class Session:
    """One DU-RU caching session advanced by explicit ``tick`` calls."""

    def __init__(self, cfg: CachingConfig, seed=0, enabled: bool = True):
        self.cfg = cfg
        self.enabled = enabled
        self.state = CachingState()
        self._noise_rng, self._loss_rng, _ = session_rngs(seed)
        self._next_seq = 0
        self._in_flight: deque[tuple[float, PhaseUpdateMsg]] = deque()
        self.sent: list[PhaseUpdateMsg] = []
        self.lost: list[int] = []

    def deliver(self, t: float) -> None:
        tol = 1e-9 * self.cfg.update_interval
        while self._in_flight and self._in_flight[0][0] <= t + tol:
            _, msg = self._in_flight.popleft()
            self.state = ru_apply_update(msg, self.state, self.cfg)

    def tick(self, t: float, true_two_way: float) -> PhaseUpdateMsg:
        self.deliver(t)
        msg = du_measure(
            true_two_way, self.state, self.cfg, self._noise_rng, self._next_seq, t
        )
        self._next_seq += 1
        self.sent.append(msg)
        if not self.enabled:
            return msg
        if self.cfg.loss_probability > 0 and self._loss_rng.random() < self.cfg.loss_probability:
            self.lost.append(msg.sequence_number)
        else:
            self._in_flight.append((t + self.cfg.latency, msg))
        return msg


@dataclass
class SessionTrace:
    """Per-update history of one session run.

    ``residuals`` and ``lost`` have one entry per measurement; the
    ``apply_*``/``cached``/``clock_pi``/``return_pi`` arrays have one entry per
    applied update, in application order.
    """

    measure_times: np.ndarray
    residuals: np.ndarray
    lost: np.ndarray
    apply_times: np.ndarray
    applied_seq: np.ndarray
    cached: np.ndarray
    clock_pi: np.ndarray
    return_pi: np.ndarray
    cache_error: np.ndarray = field(repr=False)
    wrap_slips: int = 0

    def messages(self) -> list[PhaseUpdateMsg]:
        return [
            PhaseUpdateMsg(k, r, t)
            for k, (r, t) in enumerate(zip(self.residuals.tolist(), self.measure_times.tolist()))
        ]

    def write_event_csv(self, path) -> None:
        applied = dict(zip(self.applied_seq.tolist(), range(self.applied_seq.size)))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["sequence", "timestamp_s", "residual_s", "lost", "apply_time_s",
                 "cached_two_way_s", "clock_pi_s", "return_pi_s"]
            )
            for k, (t, r, lost) in enumerate(
                zip(self.measure_times.tolist(), self.residuals.tolist(), self.lost.tolist())
            ):
                i = applied.get(k)
                tail = (
                    ["", "", "", ""]
                    if i is None
                    else [repr(float(self.apply_times[i])), repr(float(self.cached[i])),
                          repr(float(self.clock_pi[i])), repr(float(self.return_pi[i]))]
                )
                w.writerow([k, repr(t), repr(r), int(lost), *tail])


def count_slips(cache_error: np.ndarray, ui: float) -> int:
    """Number of whole-UI jumps in the cache-vs-truth error sequence."""
    if cache_error.size == 0:
        return 0
    cycles = np.rint(cache_error / ui).astype(np.int64)
    return int(np.count_nonzero(np.diff(np.concatenate(([0], cycles)))))


def run_session(two_way_true, cfg: CachingConfig, seed=0, enabled: bool = True) -> SessionTrace:
    """Run a session over true two-way shifts sampled at each update instant.

    Equivalent to calling :meth:`Session.tick` at ``k * update_interval`` for
    every sample, written as one tight loop.
    """
    true = np.asarray(two_way_true, dtype=float)
    K = true.size
    noise_rng, loss_rng, _ = session_rngs(seed)
    noise = (cfg.measurement_noise_sigma * noise_rng.standard_normal(K)).tolist()
    if enabled and cfg.loss_probability > 0:
        lost = loss_rng.random(K) < cfg.loss_probability
    else:
        lost = np.zeros(K, dtype=bool)
    times = np.arange(K) * cfg.update_interval
    true_l = true.tolist()
    lost_l = lost.tolist()
    ui, res, lat = cfg.unit_interval, cfg.pi_resolution, cfg.latency

    residuals = [0.0] * K
    applied_seq, cached_l, clk_l, ret_l = [], [], [], []
    cached = ret = clk = 0.0
    cached_fs = 0
    pending = -1
    for k in range(K):
        if pending >= 0:
            cached_fs += round(residuals[pending] / FS)
            cached = cached_fs * FS
            ret, clk = _pi_settings(cached_fs, res)
            applied_seq.append(pending)
            cached_l.append(cached)
            clk_l.append(clk)
            ret_l.append(ret)
            pending = -1
        raw = true_l[k] + ret + noise[k]
        residuals[k] = _fs_grid(wrap_to_half_ui(raw, ui))
        if enabled and not lost_l[k]:
            pending = k
    if pending >= 0:
        cached_fs += round(residuals[pending] / FS)
        cached = cached_fs * FS
        ret, clk = _pi_settings(cached_fs, res)
        applied_seq.append(pending)
        cached_l.append(cached)
        clk_l.append(clk)
        ret_l.append(ret)

    seq = np.asarray(applied_seq, dtype=np.int64)
    cached_a = np.asarray(cached_l, dtype=float)
    err = cached_a - true[seq] if seq.size else np.zeros(0)
    return SessionTrace(
        measure_times=times,
        residuals=np.asarray(residuals),
        lost=lost,
        apply_times=times[seq] + lat if seq.size else np.zeros(0),
        applied_seq=seq,
        cached=cached_a,
        clock_pi=np.asarray(clk_l, dtype=float),
        return_pi=np.asarray(ret_l, dtype=float),
        cache_error=err,
        wrap_slips=count_slips(err, ui),
    )
