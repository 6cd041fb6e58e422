import json
import math

import numpy as np
import pytest
from scipy import stats

from ewmark.baselines import SumTestConfig
from ewmark.engine import OG, Average, WeightAdaptive
from ewmark.gumbel import WatermarkKey
from ewmark.simulate import (
    ErrorCurves,
    ExperimentConfig,
    SpikeConfig,
    _replicate_key,
    _replicate_rng,
    emit_results,
    gen_spike_ntp,
    gen_stream_records,
    gen_streams,
    read_results,
    run_experiment,
)


class TestSpikeNtp:
    def test_spike_mass_bounds(self):
        cfg = SpikeConfig(K=100, delta_max=0.5, T=1, seed=0)
        rng = np.random.default_rng(0)
        for t in range(500):
            p = gen_spike_ntp(cfg, t, rng)
            assert 1.0 - 0.5 <= p.max_prob() <= 1.0 - 0.001
            assert abs(p.probs.sum() - 1.0) <= 1e-12
            assert not p.degenerate

    def test_spike_size_distribution(self):
        cfg = SpikeConfig(K=1000, delta_max=0.5, T=1, seed=0)
        rng = np.random.default_rng(1)
        maxima = np.array([gen_spike_ntp(cfg, t, rng).max_prob() for t in range(10_000)])
        d = stats.kstest(1.0 - maxima, stats.uniform(loc=0.001, scale=0.499).cdf).statistic
        assert d < 0.02

    def test_spike_position_random(self):
        cfg = SpikeConfig(K=10, delta_max=0.3, T=1, seed=0)
        rng = np.random.default_rng(2)
        positions = {int(np.argmax(gen_spike_ntp(cfg, t, rng).probs)) for t in range(200)}
        assert len(positions) == 10

    @pytest.mark.parametrize("kwargs", [
        dict(K=1), dict(delta_max=0.001), dict(delta_max=1.0), dict(T=0),
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            SpikeConfig(**{**dict(K=10, delta_max=0.2, T=5, seed=0), **kwargs})


class TestGenStreams:
    def test_null_pivotals_uniform(self):
        cfg = SpikeConfig(K=100, delta_max=0.5, T=500, seed=3)
        pooled = []
        for rep in range(200):
            key = _replicate_key(3, rep, 0, 1)
            recs = gen_streams(cfg, False, key, _replicate_rng(3, rep, 0))
            pooled.extend(r.y for r in recs)
        d = stats.kstest(np.asarray(pooled), "uniform").statistic
        assert d < 0.01

    def test_watermarked_pivotals_super_uniform(self):
        cfg = SpikeConfig(K=100, delta_max=0.5, T=700, seed=4)
        pooled = []
        for rep in range(20):
            key = _replicate_key(4, rep, 1, 1)
            recs = gen_streams(cfg, True, key, _replicate_rng(4, rep, 1))
            pooled.extend(r.y for r in recs)
        assert np.mean(pooled) > 0.5

    def test_degenerate_ntps_give_uniform_watermarked_pivotals(self):
        # deterministic tokens carry no watermark signal
        ntps = [np.array([1.0] + [0.0] * 9) for _ in range(20_000)]
        key = WatermarkKey(b"degenerate", context_window=1)
        rng = np.random.default_rng(5)
        recs = gen_stream_records(ntps, True, key, rng)
        ys = np.array([r.y for r in recs])
        assert stats.kstest(ys, "uniform").statistic < 0.015
        assert all(r.token_id == 0 for r in recs)

    def test_steps_are_one_based_and_ordered(self):
        cfg = SpikeConfig(K=10, delta_max=0.2, T=5, seed=6)
        recs = gen_streams(cfg, False, WatermarkKey(b"k"))
        assert [r.step for r in recs] == [1, 2, 3, 4, 5]


class TestRunExperiment:
    def small_cfg(self, detectors=None, reps=6):
        return ExperimentConfig(
            spike=SpikeConfig(K=30, delta_max=0.4, T=40, seed=7),
            detectors=detectors,
            replicates=reps,
            alpha=0.05,
        )

    def test_reproducible(self):
        cfg = self.small_cfg()
        assert run_experiment(cfg) == run_experiment(cfg)

    def test_seed_changes_results(self):
        a = run_experiment(self.small_cfg())
        b = run_experiment(ExperimentConfig(
            spike=SpikeConfig(K=30, delta_max=0.4, T=40, seed=8),
            replicates=6, alpha=0.05))
        assert a != b

    def test_seq_dominates_fixed(self):
        curves = run_experiment(self.small_cfg())
        for name in curves.names:
            assert np.all(curves.rates[name]["seq_type1"] >= curves.rates[name]["type1"])
            assert np.all(np.diff(curves.rates[name]["seq_type1"]) >= 0)

    def test_rates_in_unit_interval(self):
        curves = run_experiment(self.small_cfg())
        for name in curves.names:
            for metric in ErrorCurves.METRICS:
                r = curves.rates[name][metric]
                assert np.all((r >= 0) & (r <= 1))

    def test_eprocess_type2_nonincreasing(self):
        curves = run_experiment(self.small_cfg(
            detectors=(("weight-adaptive", WeightAdaptive()), ("og", OG()))))
        for name in curves.names:
            assert np.all(np.diff(curves.rates[name]["type2"]) <= 0 + 1e-15)

    def test_branch_sharing_matches_standalone(self):
        # the average-run shortcut must not change any detector's curves
        shared = run_experiment(self.small_cfg(detectors=(
            ("weight-adaptive", WeightAdaptive()),
            ("og", OG()),
            ("average", Average()),
        )))
        lone_wa = run_experiment(self.small_cfg(detectors=(("weight-adaptive", WeightAdaptive()),)))
        lone_og = run_experiment(self.small_cfg(detectors=(("og", OG()),)))
        for metric in ErrorCurves.METRICS:
            assert np.array_equal(shared.rates["weight-adaptive"][metric],
                                  lone_wa.rates["weight-adaptive"][metric])
            assert np.array_equal(shared.rates["og"][metric],
                                  lone_og.rates["og"][metric])


class TestEmitResults:
    def test_round_trip_identity(self, tmp_path):
        cfg = ExperimentConfig(
            spike=SpikeConfig(K=20, delta_max=0.3, T=25, seed=9),
            detectors=(("ars", SumTestConfig("ars", 0.05)), ("og", OG())),
            replicates=5,
        )
        curves = run_experiment(cfg)
        emit_results(curves, tmp_path)
        assert read_results(tmp_path) == curves

    def test_long_format_schema(self, tmp_path):
        cfg = ExperimentConfig(
            spike=SpikeConfig(K=20, delta_max=0.3, T=10, seed=10),
            detectors=(("ars", SumTestConfig("ars", 0.05)),),
            replicates=3,
        )
        emit_results(run_experiment(cfg), tmp_path)
        lines = (tmp_path / "curves.csv").read_text().strip().split("\n")
        assert lines[0] == "detector,t,metric,value,se"
        assert all(len(line.split(",")) == 5 for line in lines)
        metrics = {line.split(",")[2] for line in lines[1:]}
        assert metrics == {"type1", "seq_type1", "type2", "type2_log10"}

    def test_empty_detector_list_header_only(self, tmp_path):
        cfg = ExperimentConfig(
            spike=SpikeConfig(K=20, delta_max=0.3, T=10, seed=11),
            detectors=(),
            replicates=2,
        )
        emit_results(run_experiment(cfg), tmp_path)
        lines = (tmp_path / "curves.csv").read_text().strip().split("\n")
        assert lines == ["detector,t,metric,value,se"]

    def test_manifest_written(self, tmp_path):
        cfg = ExperimentConfig(
            spike=SpikeConfig(K=20, delta_max=0.3, T=10, seed=12),
            detectors=(("log", SumTestConfig("log", 0.05)),),
            replicates=2,
        )
        emit_results(run_experiment(cfg), tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seed"] == 12
        assert set(manifest["versions"]) == {"ewmark", "numpy", "scipy"}
        assert len(manifest["config_hash"]) == 64

    def test_type2_log10_values(self, tmp_path):
        cfg = ExperimentConfig(
            spike=SpikeConfig(K=20, delta_max=0.3, T=10, seed=13),
            detectors=(("og", OG()),),
            replicates=4,
        )
        curves = run_experiment(cfg)
        emit_results(curves, tmp_path)
        for line in (tmp_path / "curves.csv").read_text().strip().split("\n")[1:]:
            det, t, metric, value, _ = line.split(",")
            if metric == "type2_log10":
                rate = curves.rates[det]["type2"][int(t) - 1]
                expected = -math.inf if rate == 0 else math.log10(rate)
                assert float(value) == expected
