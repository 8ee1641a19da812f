"""Closed-form makespan and throughput prediction for static splits.

A cluster is modeled as an aggregate throughput pool; a static split
finishes when its slowest cluster finishes, so combined throughput is
total work over the maximum per-cluster time.  Quantized prediction runs
the real coarse partitioner first, exposing how few whole block units a
small matrix offers.
"""

from dataclasses import dataclass

from .errors import PowerDomainError
from .matrix import flop_count
from .scheduler import PerfRatio, plan_coarse, FAST, SLOW


@dataclass(frozen=True)
class ClusterProfile:
    """Sustained per-cluster throughput in GFLOPS, with optional power model."""

    fast_gflops: float
    slow_gflops: float
    power: object = None

    def __post_init__(self):
        for name in ("fast_gflops", "slow_gflops"):
            v = float(getattr(self, name))
            if not (v > 0.0) or v == float("inf"):
                raise PowerDomainError(f"{name} must be finite and positive, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class MakespanPrediction:
    elapsed_s: float
    combined_gflops: float
    fast_time_s: float
    slow_time_s: float


def predict_makespan(total_flops, shares, profile):
    """Finish time and combined throughput of a (fast, slow) flop split.

    elapsed is the slower cluster's share/throughput; combined throughput
    is total_flops / elapsed.
    """
    fast_share, slow_share = shares
    if fast_share < 0 or slow_share < 0:
        raise PowerDomainError("shares must be non-negative")
    if abs((fast_share + slow_share) - total_flops) > 1e-6 * max(1.0, total_flops):
        raise PowerDomainError(
            f"shares {shares} do not sum to total {total_flops}")
    fast_time = fast_share / (profile.fast_gflops * 1e9)
    slow_time = slow_share / (profile.slow_gflops * 1e9)
    elapsed = max(fast_time, slow_time)
    if elapsed <= 0.0:
        raise PowerDomainError("no work assigned; makespan undefined")
    return MakespanPrediction(elapsed, total_flops / elapsed / 1e9,
                              fast_time, slow_time)


def predict_ratio_split(total_flops, ratio, profile):
    """Makespan when work divides exactly as fast:slow = ratio."""
    w = ratio.fast_weight + ratio.slow_weight
    fast_share = total_flops * ratio.fast_weight / w
    return predict_makespan(total_flops, (fast_share, total_flops - fast_share),
                            profile)


def ideal_throughput(profile):
    """Sum of the two clusters' peak throughputs."""
    return profile.fast_gflops + profile.slow_gflops


def optimal_ratio(profile, tolerance=0.05):
    """fast:slow weights that equalize finish times, as the smallest integer
    pair within the given relative tolerance of the exact throughput ratio."""
    exact = profile.fast_gflops / profile.slow_gflops
    denom = 1
    while True:
        numer = max(1, round(exact * denom))
        if abs(numer / denom - exact) <= tolerance * exact:
            return PerfRatio(numer, denom)
        denom += 1


def predict_quantized(problem, params, config, profile):
    """Prediction from the real coarse plan's whole-unit shares.

    Work is attributed per step unit (total flops / unit count), so the
    loss from rounding the split to whole cache blocks is visible; small
    problems with few units collapse onto a single cluster.
    """
    plan = plan_coarse(problem, params, config)
    units = plan.total_units
    total = float(flop_count(problem))
    per_unit = total / units
    shares = (plan.unit_counts[FAST] * per_unit, plan.unit_counts[SLOW] * per_unit)
    return predict_makespan(total, shares, profile)
