"""Empirical search for blocking sizes and the fast:slow performance ratio.

Timing uses the median of several repetitions after one discarded warm-up.
Both searches accept an injectable measurement function so their selection
logic can be tested against a known cost surface.
"""

import io
import os
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, ConfigParseError, InvalidParamsError, AgemmError
from .matrix import Matrix, GemmProblem, flop_count
from .blocked import BlockingParams, gemm_blocked
from .scheduler import CoreTopology, PerfRatio, gemm_parallel, default_config
from .simulate import ClusterProfile, optimal_ratio
from .power import gflops

REPORT_HEADER = "mc,kc,gflops_median,gflops_min,gflops_max"


@dataclass(frozen=True)
class TunePoint:
    mc: int
    kc: int
    gflops_median: float
    gflops_min: float
    gflops_max: float


@dataclass(frozen=True)
class TuneResult:
    best: BlockingParams
    points: tuple

    def report_csv(self):
        out = io.StringIO()
        out.write(REPORT_HEADER + "\n")
        for p in self.points:
            out.write(f"{p.mc},{p.kc},{p.gflops_median:.6f},"
                      f"{p.gflops_min:.6f},{p.gflops_max:.6f}\n")
        return out.getvalue()


DEFAULT_MC_GRID = tuple(range(32, 513, 16))
DEFAULT_KC_GRID = tuple(range(64, 1025, 16))


def _default_timer(seed=0):
    """Wall-clock one blocked product per problem size; returns seconds."""
    rng = np.random.default_rng(seed)
    cache = {}

    def timer(params, m, n, k):
        key = (m, n, k)
        if key not in cache:
            cache[key] = (Matrix.random(m, k, rng), Matrix.random(k, n, rng),
                          Matrix.random(m, n, rng))
        a, b, c = cache[key]
        problem = GemmProblem(m, n, k)
        t0 = time.perf_counter()
        gemm_blocked(problem, a, b, c, params)
        return time.perf_counter() - t0

    return timer


def tune_blocking(mc_grid=DEFAULT_MC_GRID, kc_grid=DEFAULT_KC_GRID, *,
                  nr=4, mr=4, nc=4096, problem_sizes=(512,), repetitions=3,
                  timer=None):
    """Exhaustive (mc, kc) grid search maximizing median GFLOPS.

    Each grid point is timed over all problem sizes, repetitions times,
    after one discarded warm-up pass.  Ties go to the smaller mc, then the
    smaller kc, so the result does not depend on grid order.
    """
    mc_grid = sorted(set(int(v) for v in mc_grid))
    kc_grid = sorted(set(int(v) for v in kc_grid))
    if not mc_grid or not kc_grid:
        raise InvalidParamsError("the search grid is empty")
    if repetitions < 3:
        raise InvalidParamsError("need at least 3 repetitions for a median")
    if timer is None:
        timer = _default_timer()
    sizes = [int(s) for s in problem_sizes]
    total_flops = sum(flop_count(GemmProblem(s, s, s)) for s in sizes)

    points = []
    for mc in mc_grid:
        for kc in kc_grid:
            try:
                params = BlockingParams(nc=nc, kc=kc, mc=mc, nr=nr, mr=mr)
                timer(params, sizes[0], sizes[0], sizes[0])  # warm-up, discarded
                rates = []
                for _ in range(repetitions):
                    elapsed = sum(timer(params, s, s, s) for s in sizes)
                    rates.append(gflops(total_flops, elapsed))
            except AgemmError as exc:
                warnings.warn(f"skipping grid point mc={mc} kc={kc}: {exc}",
                              stacklevel=2)
                continue
            points.append(TunePoint(mc, kc, float(np.median(rates)),
                                    min(rates), max(rates)))
    if not points:
        raise CalibrationError("every grid point failed")
    best = max(points, key=lambda p: (p.gflops_median, -p.mc, -p.kc))
    return TuneResult(BlockingParams(nc=nc, kc=best.kc, mc=best.mc, nr=nr, mr=mr),
                      tuple(points))


@dataclass(frozen=True)
class CalibrationResult:
    ratio: PerfRatio
    fast_gflops: float
    slow_gflops: float


def _measured_cluster_gflops(topology, problem_sizes, repetitions):
    """Median GFLOPS of each class running alone on this machine."""
    rng = np.random.default_rng(7)

    def run_cluster(fast, slow):
        topo = CoreTopology(fast, slow)
        config = default_config(topo)
        rates = []
        for s in problem_sizes:
            problem = GemmProblem(s, s, s)
            a = Matrix.random(s, s, rng)
            b = Matrix.random(s, s, rng)
            c = Matrix.zeros(s, s)
            gemm_parallel(problem, a, b, c, config=config)  # warm-up
            for _ in range(repetitions):
                t0 = time.perf_counter()
                gemm_parallel(problem, a, b, c, config=config)
                rates.append(gflops(flop_count(problem), time.perf_counter() - t0))
        return float(np.median(rates))

    def measure_fn(cluster):
        if cluster == "fast":
            return run_cluster(topology.fast_threads, 0)
        return run_cluster(0, topology.slow_threads)

    return measure_fn


def calibrate_ratio(problem_sizes, topology, repetitions=3, *,
                    measure_fn=None, tolerance=0.05):
    """Measure each class alone, then rationalize the throughput ratio.

    measure_fn(cluster) -> GFLOPS may be injected; the default times real
    isolated runs on the current machine.
    """
    if topology.fast_threads < 1 or topology.slow_threads < 1:
        raise CalibrationError("both classes need at least one thread to calibrate")
    if measure_fn is None:
        measure_fn = _measured_cluster_gflops(topology, problem_sizes, repetitions)
    fast = float(measure_fn("fast"))
    slow = float(measure_fn("slow"))
    if fast <= 0.0 or slow <= 0.0:
        raise CalibrationError(
            f"a class measured zero throughput (fast={fast}, slow={slow})")
    ratio = optimal_ratio(ClusterProfile(fast, slow), tolerance=tolerance)
    return CalibrationResult(ratio, fast, slow)


CALIBRATION_KEYS = ("mc", "kc", "nc", "mr", "nr", "ratio_fast", "ratio_slow",
                    "gflops_fast", "gflops_slow")


def save_calibration(path, params, calibration):
    """Key-value calibration file; written atomically (no partial files)."""
    lines = [
        f"mc={params.mc}", f"kc={params.kc}", f"nc={params.nc}",
        f"mr={params.mr}", f"nr={params.nr}",
        f"ratio_fast={calibration.ratio.fast_weight}",
        f"ratio_slow={calibration.ratio.slow_weight}",
        f"gflops_fast={calibration.fast_gflops!r}",
        f"gflops_slow={calibration.slow_gflops!r}",
    ]
    directory = os.path.dirname(os.path.abspath(path))
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_calibration(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigParseError(str(path), f"line {lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip().lower()
            if key not in CALIBRATION_KEYS:
                raise ConfigParseError(str(path), f"line {lineno}: unknown key {key!r}")
            try:
                values[key] = float(raw)
            except ValueError:
                raise ConfigParseError(
                    str(path), f"line {lineno}: bad value {raw!r}") from None
    missing = [k for k in CALIBRATION_KEYS if k not in values]
    if missing:
        raise ConfigParseError(str(path), f"missing keys: {', '.join(missing)}")
    return values
