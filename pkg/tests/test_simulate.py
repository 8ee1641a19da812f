import pytest

from agemm import (GemmProblem, BlockingParams, CoreTopology, ParallelConfig,
                   PerfRatio, ClusterProfile, predict_makespan,
                   predict_ratio_split, ideal_throughput, optimal_ratio,
                   predict_quantized, flop_count, PowerDomainError)

# Measured per-cluster peaks from the sensor table: four fast cores sustain
# 10.374 GFLOPS, four slow cores 2.086 GFLOPS.
PROFILE = ClusterProfile(10.374, 2.086)


class TestPredictMakespan:
    def test_equal_split_runs_at_twice_the_slow_cluster(self):
        total = 2.0 * 4096 ** 3
        pred = predict_ratio_split(total, PerfRatio(1, 1), PROFILE)
        assert pred.combined_gflops == pytest.approx(2 * 2.086, abs=1e-9)
        # the measured symmetric run reached 3.897; the model lands within 7.1%
        assert abs(pred.combined_gflops - 3.897) / 3.897 < 0.071

    def test_six_to_one_split(self):
        total = 2.0 * 4096 ** 3
        pred = predict_ratio_split(total, PerfRatio(6, 1), PROFILE)
        assert pred.combined_gflops == pytest.approx(10.374 * 7 / 6, abs=1e-9)
        assert pred.combined_gflops == pytest.approx(12.103, abs=0.001)
        # measured 12.035: within 0.6%
        assert abs(pred.combined_gflops - 12.035) / 12.035 < 0.006

    def test_all_work_to_fast_cluster(self):
        pred = predict_makespan(1e12, (1e12, 0.0), PROFILE)
        assert pred.combined_gflops == pytest.approx(10.374, rel=1e-12)

    def test_shares_must_sum(self):
        with pytest.raises(PowerDomainError):
            predict_makespan(100.0, (10.0, 10.0), PROFILE)

    def test_combined_never_exceeds_ideal(self, rng):
        ideal = ideal_throughput(PROFILE)
        total = 1e12
        for _ in range(300):
            f = float(rng.uniform(0.0, 1.0))
            pred = predict_makespan(total, (total * f, total * (1.0 - f)), PROFILE)
            assert pred.combined_gflops <= ideal + 1e-6
        exact = total * PROFILE.fast_gflops / ideal
        pred = predict_makespan(total, (exact, total - exact), PROFILE)
        assert pred.combined_gflops == pytest.approx(ideal, rel=1e-12)


class TestIdealThroughput:
    def test_sum_of_peaks(self):
        assert ideal_throughput(PROFILE) == pytest.approx(12.460, abs=1e-9)

    def test_vanishing_slow_cluster(self):
        assert ideal_throughput(ClusterProfile(9.5, 1e-9)) == pytest.approx(9.5, abs=1e-6)

    def test_measured_over_ideal(self):
        assert 12.035 / ideal_throughput(PROFILE) == pytest.approx(0.966, abs=0.0005)


class TestOptimalRatio:
    def test_measured_profile_rationalizes_to_five_to_one(self):
        assert optimal_ratio(PROFILE) == PerfRatio(5, 1)
        assert PROFILE.fast_gflops / PROFILE.slow_gflops == pytest.approx(4.97, abs=0.01)

    def test_equal_throughputs(self):
        assert optimal_ratio(ClusterProfile(3.3, 3.3)) == PerfRatio(1, 1)

    def test_exact_integer_ratio(self):
        assert optimal_ratio(ClusterProfile(12.0, 2.0)) == PerfRatio(6, 1)

    def test_tight_tolerance_needs_larger_terms(self):
        ratio = optimal_ratio(PROFILE, tolerance=0.001)
        assert ratio.fast_weight / ratio.slow_weight == pytest.approx(
            PROFILE.fast_gflops / PROFILE.slow_gflops, rel=0.001)
        assert ratio != PerfRatio(5, 1)

    def test_beats_every_small_integer_ratio(self):
        best = optimal_ratio(PROFILE)
        total = 1e12
        reference = predict_ratio_split(total, best, PROFILE).combined_gflops
        for f in range(1, 13):
            for s in range(1, 13):
                other = predict_ratio_split(total, PerfRatio(f, s), PROFILE)
                assert reference >= other.combined_gflops - 1e-6, f"{f}:{s}"


def quantized(m, ratio=PerfRatio(6, 1)):
    problem = GemmProblem(m, m, m)
    params = BlockingParams(nc=4096, kc=368, mc=176, nr=4, mr=4)
    config = ParallelConfig(topology=CoreTopology(4, 4), ratio=ratio)
    return predict_quantized(problem, params, config, PROFILE)


class TestPredictQuantized:
    def test_whole_unit_shares(self):
        # 24 row units split [21, 3]: the fast cluster carries 21/24 of the
        # flops, so combined = 10.374 / (21/24)
        pred = quantized(4096)
        assert pred.combined_gflops == pytest.approx(10.374 * 24 / 21, abs=1e-9)
        assert pred.combined_gflops == pytest.approx(11.856, abs=0.001)

    def test_two_units_collapse_to_fast_cluster(self):
        pred = quantized(352)
        assert pred.combined_gflops == pytest.approx(10.374, rel=1e-12)

    def test_converges_to_unquantized_limit(self):
        unquantized = predict_ratio_split(1.0, PerfRatio(6, 1), PROFILE).combined_gflops
        pred = quantized(1_000_000)
        assert abs(pred.combined_gflops - unquantized) / unquantized < 0.001

    def test_always_below_unquantized_for_small_matrices(self):
        unquantized = predict_ratio_split(1.0, PerfRatio(6, 1), PROFILE).combined_gflops
        for m in range(16, 705, 16):
            assert quantized(m).combined_gflops < unquantized

    def test_within_one_percent_beyond_seven_hundred_units(self):
        unquantized = predict_ratio_split(1.0, PerfRatio(6, 1), PROFILE).combined_gflops
        for units in (700, 701, 997, 1400, 5682):
            pred = quantized(units * 176)
            assert abs(pred.combined_gflops - unquantized) / unquantized < 0.01

    def test_respects_flop_accounting(self):
        m = 4096
        pred = quantized(m)
        total = flop_count(GemmProblem(m, m, m))
        assert pred.elapsed_s == pytest.approx(
            total / (pred.combined_gflops * 1e9), rel=1e-12)
