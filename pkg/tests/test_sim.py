import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from combsync import noise
from combsync.fiber import FiberLink, RampProfile, SinusoidProfile, TraceProfile
from combsync.protocol import CachingConfig
from combsync.sim import (
    Scenario,
    ScenarioError,
    default_scenario,
    histogram,
    jitter_report,
    linear_drift_scenario,
    read_series_csv,
    run_scenario,
)

PS = 1e-12
SILENT = CachingConfig(measurement_noise_sigma=0.0, eval_noise_sigma=0.0, pi_resolution=1e-18)


@pytest.fixture(scope="module")
def default_report():
    return run_scenario(default_scenario())


def short(**kw):
    base = dict(duration=600.0, noise_presets=())
    base.update(kw)
    return Scenario(**base)


class TestZeroAndDisabled:
    def test_no_drift_no_noise_is_silent(self):
        s = linear_drift_scenario(0.0, 600.0, caching=replace(SILENT, pi_resolution=3.125e-12))
        r = run_scenario(s, with_jitter=False).rus[0]
        assert not np.any(r.synchronized_offset)
        assert not np.any(r.two_way_measured)

    def test_caching_disabled_green_equals_sync(self):
        s = short(caching_enabled=False, caching=replace(SILENT, eval_noise_sigma=0.0))
        r = run_scenario(s, with_jitter=False).rus[0]
        assert np.array_equal(r.estimated_uncompensated, r.synchronized_offset)
        assert not np.any(r.two_way_measured)
        true_rms = noise.rms_of_record(r.true_forward)
        assert abs(r.rms_wander - true_rms) < 1e-12
        assert r.wrap_slips == 0


class TestDefaultRun:
    def test_wander_band(self, default_report):
        assert default_report.rms_wander < 30 * PS
        assert 5 * PS <= default_report.rms_wander <= 8 * PS
        assert default_report.wrap_slips == 0

    def test_uncompensated_is_large(self, default_report):
        # ~1 ns one-way swing over 16 h without caching
        assert default_report.rus[0].rms_uncompensated > 200 * PS

    def test_green_identity_exact(self, default_report):
        r = default_report.rus[0]
        assert np.array_equal(r.estimated_uncompensated, r.synchronized_offset + r.two_way_measured / 2)

    def test_sample_count(self, default_report):
        r = default_report.rus[0]
        assert r.time.size == 576_000
        assert r.histogram.counts.sum() == r.time.size

    def test_histogram_unimodal(self, default_report):
        h = default_report.rus[0].histogram
        c = np.convolve(h.counts, np.ones(9) / 9, mode="same")
        m = int(np.argmax(c))
        slack = 4 * np.sqrt(c + 1)
        assert np.all(np.diff(c[: m + 1]) >= -slack[1 : m + 1])
        assert np.all(np.diff(c[m:]) <= slack[m + 1 :])

    def test_jitter_and_carrier(self, default_report):
        jt = default_report.jitter
        assert jt.carrier_harmonic == 10
        assert 0.0 <= jt.carrier_amplitude <= 1.0
        for name, (_, _, target) in noise.REFERENCE_TARGETS.items():
            assert jt.figures[name].rms_jitter == pytest.approx(target, rel=5e-3)

    def test_bit_identical_rerun(self, default_report):
        again = run_scenario(default_scenario(), with_jitter=False)
        assert np.array_equal(again.rus[0].synchronized_offset, default_report.rus[0].synchronized_offset)
        other = run_scenario(replace(default_scenario(), seed=2), with_jitter=False)
        assert not np.array_equal(other.rus[0].synchronized_offset, default_report.rus[0].synchronized_offset)


class TestDrift:
    def test_faster_updates_do_not_hurt(self):
        rate = 5 * PS
        slow = run_scenario(linear_drift_scenario(rate, 300.0, caching=SILENT), with_jitter=False)
        fast_cfg = replace(SILENT, update_interval=0.05)
        fast = run_scenario(linear_drift_scenario(rate, 300.0, caching=fast_cfg), with_jitter=False)
        assert fast.max_abs_offset <= slow.max_abs_offset
        assert fast.rms_wander <= slow.rms_wander

    def test_eval_rate_barely_moves_rms(self):
        s = replace(default_scenario(), duration=3600.0, noise_presets=())
        lo = run_scenario(s, with_jitter=False).rms_wander
        hi = run_scenario(replace(s, caching=replace(s.caching, eval_rate=100.0)), with_jitter=False).rms_wander
        assert hi == pytest.approx(lo, rel=0.05)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.1, 2.0), st.floats(200.0, 1200.0), st.floats(-3.0, 3.0), st.integers(0, 100))
    def test_compensation_gain(self, amp_k, period, phase, seed):
        # loop noise at defaults; the evaluation-link noise floor is switched off
        trunk = FiberLink(13.0, SinusoidProfile(amp_k, period, phase))
        s = Scenario(
            trunk=trunk,
            feeders=(FiberLink(0.08, RampProfile(0.0)),),
            caching=replace(CachingConfig(), eval_noise_sigma=0.0),
            duration=1200.0,
            seed=seed,
            noise_presets=(),
        )
        r = run_scenario(s, with_jitter=False).rus[0]
        assert np.ptp(r.true_forward) > 100 * PS
        assert r.rms_wander < 0.05 * r.rms_uncompensated
        assert r.wrap_slips == 0

    def test_compensation_gain_with_all_noise_at_default_scale(self, default_report):
        r = default_report.rus[0]
        assert r.rms_wander < 0.05 * r.rms_uncompensated

    def test_fast_drift_reports_slips(self, caplog):
        rate = 0.6 * 400 * PS / 0.1 / 2  # 0.6 UI two-way per update
        s = linear_drift_scenario(rate, 60.0, caching=replace(SILENT, pi_resolution=3.125e-12))
        with caplog.at_level("WARNING"):
            rep = run_scenario(s, with_jitter=False)
        assert rep.wrap_slips > 0
        assert "wrap slips" in caplog.text

    def test_asymmetry_leaves_residual(self):
        s = short(asymmetry=0.1, caching=SILENT,
                  trunk=FiberLink(13.0, RampProfile(0.01)),
                  feeders=(FiberLink(0.08, RampProfile(0.0)),))
        r = run_scenario(s, with_jitter=False).rus[0]
        # forward = 1.1 x one-way, cache corrects 1.0 x one-way
        one_way = r.true_forward[-1] / 1.1
        assert r.synchronized_offset[-1] == pytest.approx(0.1 * one_way, rel=0.02)


class TestHistogram:
    def test_single_value(self):
        h = histogram(np.full(10, 3 * PS), 0.5 * PS)
        assert h.counts.tolist() == [10]
        assert h.centers[0] == pytest.approx(3.25 * PS)

    def test_uniform_chi_square(self):
        from scipy import stats

        x = np.random.default_rng(0).uniform(0, 50 * PS, 100_000)
        h = histogram(x, 0.5 * PS)
        full = h.counts[:-1]  # last bin only partly covered
        chi2 = stats.chisquare(full)
        assert chi2.pvalue > 1e-3

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            histogram([], PS)
        with pytest.raises(ValueError):
            histogram([1.0], 0.0)

    def test_csv(self, tmp_path):
        h = histogram(np.arange(10) * PS, PS)
        h.to_csv(tmp_path / "h.csv")
        data = np.loadtxt(tmp_path / "h.csv", delimiter=",", skiprows=1)
        assert data[:, 1].sum() == 10


class TestScenarioModel:
    def test_json_roundtrip_and_hash(self, tmp_path):
        s = default_scenario()
        p = tmp_path / "s.json"
        s.save(p)
        back = Scenario.load(p)
        assert back == s
        assert back.config_hash() == s.config_hash()
        assert replace(s, seed=9).config_hash() != s.config_hash()

    def test_short_trace_rejected(self):
        trace = TraceProfile([0.0, 100.0], [293.0, 294.0])
        with pytest.raises(ScenarioError, match="shorter"):
            short(trunk=FiberLink(13.0, trace)).validate()

    def test_missing_preset_rejected(self):
        with pytest.raises(ScenarioError, match="presets"):
            short(noise_presets=("nope",)).validate()

    def test_feeder_count(self):
        with pytest.raises(ScenarioError):
            short(n_rus=3, feeders=(FiberLink(0.08), FiberLink(0.1))).validate()

    @pytest.mark.parametrize(
        "patch", [{"duration_s": -1}, {"caching": {"update_interval_s": 0}}, {"comb": {"f_rep_hz": 1}}]
    )
    def test_bad_dict(self, patch):
        d = default_scenario().to_dict()
        d.update(patch)
        with pytest.raises(ScenarioError):
            Scenario.from_dict(d).validate()

    def test_bad_json(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{ nope")
        with pytest.raises(ScenarioError):
            Scenario.load(p)

    def test_multi_ru(self):
        feeders = (FiberLink(0.05), FiberLink(0.5), FiberLink(2.0))
        s = short(n_rus=3, feeders=feeders)
        rep = run_scenario(s, with_jitter=False)
        assert [r.index for r in rep.rus] == [0, 1, 2]
        assert not np.array_equal(rep.rus[0].synchronized_offset, rep.rus[1].synchronized_offset)
        assert rep.rms_wander == max(r.rms_wander for r in rep.rus)


def test_jitter_report_default_scenario():
    jt = jitter_report(noise.load_presets(list(noise.REFERENCE_TARGETS)))
    assert jt.figures["clock_2g5_no_data"].rms_jitter == pytest.approx(70.3e-15, rel=5e-3)
    assert jt.figures["embedded_clock_2g5"].rms_jitter == pytest.approx(18e-12, rel=5e-3)
    assert json.loads(json.dumps(jt.to_dict()))["carrier_harmonic"] == 10


def test_report_files(tmp_path):
    s = short(n_rus=2, noise_presets=("carrier_25ghz",))
    rep = run_scenario(s)
    files = rep.write(tmp_path)
    names = sorted(p.name for p in files)
    assert "offsets.csv" in names and "offsets_ru1.csv" in names
    meta = json.loads((tmp_path / "report.json").read_text())
    assert meta["seed"] == s.seed and meta["config_hash"] == s.config_hash()
    t, off = read_series_csv(tmp_path / "offsets.csv")
    assert np.array_equal(off, rep.rus[0].synchronized_offset)
    assert np.array_equal(t, rep.rus[0].time)
    assert rep.summary_line().startswith("rms_wander_ps=")
