"""Benchmark, simulation, tuning and reporting front end.

Every flag has an AGEMM_-prefixed environment variable with the same
spelling (e.g. --power-model / AGEMM_POWER_MODEL); explicit flags win.
The scheduler's own variables (AGEMM_THREADS_FAST, AGEMM_THREADS_SLOW,
AGEMM_RATIO, AGEMM_COARSE_LOOP, AGEMM_FINE_LOOPS, AGEMM_PIN) seed the
defaults of the matching flags.
"""

import argparse
import csv
import os
import sys
import time

import numpy as np

from .errors import AgemmError
from .matrix import Matrix, GemmProblem, flop_count, gemm_reference
from .blocked import BlockingParams, default_params
from .scheduler import (CoreTopology, ParallelConfig, PerfRatio, CoarseLoop,
                        FineLoop, coarse_loop_from_name, fine_loops_from_names,
                        env_overrides)
from .scheduler import gemm_parallel
from .simulate import (ClusterProfile, ideal_throughput, optimal_ratio,
                       predict_ratio_split, predict_quantized)
from .power import (PowerModel, load_power_model, load_trace, measure,
                    model_power, efficiency)
from . import tune as tuning

BENCH_HEADER = ("variant,m,n,k,threads_fast,threads_slow,ratio,"
                "elapsed_s,gflops,watts_total,gflops_per_watt")
VARIANTS = ("a15only", "a7only", "symmetric", "asymmetric")


def _env(name):
    return os.environ.get("AGEMM_" + name)


def _env_flag(name):
    return (_env(name) or "0").strip() in ("1", "true", "yes")


def parse_sizes(text):
    sizes = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) not in (2, 3):
                raise ValueError(f"size range {part!r} must be LO:HI[:STEP]")
            lo, hi = int(bits[0]), int(bits[1])
            step = int(bits[2]) if len(bits) == 3 else lo
            if lo < 1 or hi < lo or step < 1:
                raise ValueError(f"bad size range {part!r}")
            sizes.extend(range(lo, hi + 1, step))
        else:
            sizes.append(int(part))
    if not sizes or min(sizes) < 1:
        raise ValueError("sizes must be integers >= 1")
    return sizes


def parse_thread_range(text):
    bits = str(text).split(":")
    if len(bits) == 1:
        lo = hi = int(bits[0])
    elif len(bits) == 2:
        lo, hi = int(bits[0]), int(bits[1])
    else:
        raise ValueError(f"thread range {text!r} must be N or LO:HI")
    if lo < 1 or hi < lo:
        raise ValueError(f"bad thread range {text!r}")
    return lo, hi


def parse_grid(text):
    """Grid spec like "mc=176,kc=368" or "mc=32:512:16,kc=64:1024:16"."""
    grids = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"grid entry {part!r} must be key=value")
        key, _, raw = part.partition("=")
        key = key.strip().lower()
        if key not in ("mc", "kc"):
            raise ValueError(f"grid key must be mc or kc, got {key!r}")
        if ":" in raw:
            bits = [int(x) for x in raw.split(":")]
            if len(bits) != 3:
                raise ValueError(f"grid range {raw!r} must be LO:HI:STEP")
            grids[key] = list(range(bits[0], bits[1] + 1, bits[2]))
        else:
            grids[key] = [int(raw)]
    return grids


def parse_profile(text):
    bits = str(text).split(",")
    if len(bits) != 2:
        raise ValueError(f"profile {text!r} must be FAST_GFLOPS,SLOW_GFLOPS")
    return float(bits[0]), float(bits[1])


def _scheduler_defaults(args):
    """Resolve ratio/loops/topology: flag, then environment, then default."""
    ov = env_overrides()
    ratio = PerfRatio.parse(args.ratio) if args.ratio else (ov.ratio or PerfRatio(6, 1))
    coarse = (coarse_loop_from_name(args.coarse_loop) if args.coarse_loop
              else (ov.coarse_loop or CoarseLoop.IC))
    fines = (fine_loops_from_names(args.fine_loops) if args.fine_loops
             else (ov.fine_loops or frozenset({FineLoop.JR})))
    tf = args.threads_fast if args.threads_fast is not None else ov.fast_threads
    ts = args.threads_slow if args.threads_slow is not None else ov.slow_threads
    pin = args.pin or bool(ov.pin)
    return ratio, coarse, fines, (4 if tf is None else tf), (4 if ts is None else ts), pin


def _load_params(args):
    if getattr(args, "calibration", None):
        calib = tuning.load_calibration(args.calibration)
        return BlockingParams(nc=int(calib["nc"]), kc=int(calib["kc"]),
                              mc=int(calib["mc"]), nr=int(calib["nr"]),
                              mr=int(calib["mr"]))
    return default_params()


def _power_source(args):
    if getattr(args, "trace", None) and getattr(args, "power_model", None):
        raise AgemmError("--trace and --power-model are mutually exclusive")
    if getattr(args, "trace", None):
        return load_trace(args.trace)
    if getattr(args, "power_model", None):
        return load_power_model(args.power_model)
    return PowerModel.default()


def _format_table(headers, rows):
    cols = [[h] + [r[i] for r in rows] for i, h in enumerate(headers)]
    widths = [max(len(str(v)) for v in col) for col in cols]
    lines = []
    for r in ([headers] + [None] + rows):
        if r is None:
            lines.append("  ".join("-" * w for w in widths))
        else:
            lines.append("  ".join(
                str(v).ljust(w) if i == 0 else str(v).rjust(w)
                for i, (v, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def cmd_bench(args):
    try:
        sizes = parse_sizes(args.sizes)
        t_lo, t_hi = parse_thread_range(args.threads)
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    except ValueError as exc:
        args.parser.error(str(exc))
    for v in variants:
        if v not in VARIANTS:
            args.parser.error(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")

    ratio, coarse, fines, tf, ts, pin = _scheduler_defaults(args)
    params = _load_params(args)
    source = _power_source(args)
    rng = np.random.default_rng(args.seed)

    def configs_for(variant):
        if variant == "a15only":
            return [(CoreTopology(t, 0), PerfRatio(1, 1), "1:0") for t in range(t_lo, t_hi + 1)]
        if variant == "a7only":
            return [(CoreTopology(0, t), PerfRatio(1, 1), "0:1") for t in range(t_lo, t_hi + 1)]
        if variant == "symmetric":
            return [(CoreTopology(tf, ts), PerfRatio(1, 1), "1:1")]
        return [(CoreTopology(tf, ts), ratio, str(ratio))]

    rows = []
    for size in sizes:
        problem = GemmProblem(size, size, size)
        a = Matrix.random(size, size, rng)
        b = Matrix.random(size, size, rng)
        c = Matrix.zeros(size, size)
        reference = gemm_reference(problem, a, b, c) if args.verify else None
        for variant in variants:
            for topo, row_ratio, ratio_text in configs_for(variant):
                config = ParallelConfig(topology=topo, ratio=row_ratio,
                                        coarse_loop=coarse, fine_loops=fines,
                                        pin=pin)
                result = {}

                def run():
                    result["out"] = gemm_parallel(problem, a, b, c, params, config)

                metrics = measure(run, flop_count(problem), source,
                                  active_fast=topo.fast_threads,
                                  active_slow=topo.slow_threads)
                if reference is not None and not result["out"].bitwise_equal(reference):
                    print(f"error: verification failed for {variant} at size {size}",
                          file=sys.stderr)
                    return 1
                rows.append({
                    "variant": variant, "m": size, "n": size, "k": size,
                    "threads_fast": topo.fast_threads, "threads_slow": topo.slow_threads,
                    "ratio": ratio_text, "elapsed_s": f"{metrics.elapsed_s:.6f}",
                    "gflops": f"{metrics.gflops:.4f}",
                    "watts_total": f"{metrics.total_watts:.4f}",
                    "gflops_per_watt": f"{metrics.gflops_per_watt:.4f}",
                })

    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=BENCH_HEADER.split(","))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            out.close()
    if args.verify:
        print(f"verification passed for {len(rows)} runs", file=sys.stderr)
    return 0


def cmd_simulate(args):
    if args.profile:
        try:
            fast, slow = parse_profile(args.profile)
        except ValueError as exc:
            args.parser.error(str(exc))
    elif args.calibration:
        calib = tuning.load_calibration(args.calibration)
        fast, slow = float(calib["gflops_fast"]), float(calib["gflops_slow"])
    else:
        args.parser.error("simulate needs --profile F,S or --calibration FILE")
    ratio, _, _, tf, ts, _ = _scheduler_defaults(args)
    model = (load_power_model(args.power_model) if args.power_model
             else PowerModel.default())
    profile = ClusterProfile(fast, slow, power=model)

    ideal = ideal_throughput(profile)
    flops = 2.0 * 4096 ** 3  # representative large problem; splits are scale-free

    def row(name, prediction, active_fast, active_slow):
        watts = model_power(model, active_fast, active_slow)["Total"]
        g = prediction
        return [name, f"{g:.3f}", f"{100.0 * g / ideal:.1f}%",
                f"{watts:.3f}", f"{efficiency(g, watts):.3f}"]

    sym = predict_ratio_split(flops, PerfRatio(1, 1), profile).combined_gflops
    asym = predict_ratio_split(flops, ratio, profile).combined_gflops
    rows = [
        row("fast cluster only", profile.fast_gflops, tf, 0),
        row("slow cluster only", profile.slow_gflops, 0, ts),
        row("symmetric 1:1", sym, tf, ts),
        row(f"asymmetric {ratio}", asym, tf, ts),
        ["ideal (sum of peaks)", f"{ideal:.3f}", "100.0%", "-", "-"],
    ]
    print(_format_table(
        ["configuration", "GFLOPS", "of ideal", "watts", "GFLOPS/W"], rows))
    print(f"\nbest integer ratio for this profile: {optimal_ratio(profile)}")
    if args.quantize:
        params = default_params()
        config = ParallelConfig(topology=CoreTopology(tf, ts), ratio=ratio)
        problem = GemmProblem(args.quantize, args.quantize, args.quantize)
        q = predict_quantized(problem, params, config, profile)
        print(f"quantized at m=n=k={args.quantize} (mc={params.mc}): "
              f"{q.combined_gflops:.3f} GFLOPS "
              f"({100.0 * q.combined_gflops / asym:.1f}% of the unquantized split)")
    return 0


def cmd_tune(args):
    try:
        grids = parse_grid(args.grid)
        sizes = parse_sizes(args.sizes)
    except ValueError as exc:
        args.parser.error(str(exc))
    ratio_args = _scheduler_defaults(args)
    tf, ts = ratio_args[3], ratio_args[4]

    result = tuning.tune_blocking(
        grids.get("mc", tuning.DEFAULT_MC_GRID),
        grids.get("kc", tuning.DEFAULT_KC_GRID),
        problem_sizes=sizes, repetitions=args.reps)
    print(result.report_csv(), end="")

    if args.profile:
        fast, slow = parse_profile(args.profile)
        calibration = tuning.CalibrationResult(
            optimal_ratio(ClusterProfile(fast, slow)), fast, slow)
    else:
        calibration = tuning.calibrate_ratio(
            sizes, CoreTopology(max(tf, 1), max(ts, 1)), repetitions=args.reps)
    print(f"tuned blocking: mc={result.best.mc} kc={result.best.kc}; "
          f"ratio {calibration.ratio} "
          f"(fast {calibration.fast_gflops:.3f}, slow {calibration.slow_gflops:.3f} GFLOPS)")
    tuning.save_calibration(args.out, result.best, calibration)
    return 0


def cmd_report(args):
    with open(args.csv, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        args.parser.error(f"{args.csv} holds no benchmark rows")
    os.makedirs(args.out_dir, exist_ok=True)

    from . import plotting
    perf_path = os.path.join(args.out_dir, "performance.png")
    eff_path = os.path.join(args.out_dir, "efficiency.png")
    plotting.performance_figure(rows, perf_path)
    plotting.efficiency_figure(rows, eff_path)

    data_path = os.path.join(args.out_dir, "summary.csv")
    with open(data_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_HEADER.split(","))
        writer.writeheader()
        writer.writerows({k: row.get(k, "") for k in BENCH_HEADER.split(",")}
                         for row in rows)

    largest = max(int(r["m"]) for r in rows)
    table = [[r["variant"], f'{r["threads_fast"]}+{r["threads_slow"]}', r["ratio"],
              r["watts_total"], r["gflops"], r["gflops_per_watt"]]
             for r in rows if int(r["m"]) == largest]
    print(f"largest problem size: m=n=k={largest}")
    print(_format_table(
        ["configuration", "threads", "ratio", "watts", "GFLOPS", "GFLOPS/W"], table))
    print(f"\nwrote {data_path}, {perf_path}, {eff_path}")
    return 0


def _add_scheduler_flags(sub):
    sub.add_argument("--ratio", default=_env("RATIO"),
                     help="fast:slow work ratio, e.g. 6:1")
    sub.add_argument("--coarse-loop", default=_env("COARSE_LOOP"),
                     help="cross-cluster loop: jc or ic")
    sub.add_argument("--fine-loops", default=_env("FINE_LOOPS"),
                     help="intra-cluster loops: jr, ir or jr,ir")
    sub.add_argument("--threads-fast", type=int,
                     default=int(_env("THREADS_FAST")) if _env("THREADS_FAST") else None,
                     help="fast-class thread count (default 4)")
    sub.add_argument("--threads-slow", type=int,
                     default=int(_env("THREADS_SLOW")) if _env("THREADS_SLOW") else None,
                     help="slow-class thread count (default 4)")
    sub.add_argument("--pin", action="store_true", default=_env_flag("PIN"),
                     help="pin worker threads to declared core ids")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="agemm",
        description="blocked GEMM benchmarks, scheduling simulation and tuning")
    subs = parser.add_subparsers(dest="command", required=True)

    bench = subs.add_parser("bench", help="run timed GEMM sweeps, emit CSV")
    bench.add_argument("--sizes", default=_env("SIZES") or "512:2048:512",
                       help="square sizes: LO:HI[:STEP] or comma list")
    bench.add_argument("--variants", default=_env("VARIANTS") or ",".join(VARIANTS),
                       help=f"comma list from: {', '.join(VARIANTS)}")
    bench.add_argument("--threads", default=_env("THREADS") or "1:4",
                       help="thread sweep for the single-cluster variants")
    bench.add_argument("--verify", action="store_true", default=_env_flag("VERIFY"),
                       help="check every run against the reference product")
    bench.add_argument("--power-model", default=_env("POWER_MODEL"),
                       help="power model file (component.idle/component.per_core lines)")
    bench.add_argument("--trace", default=_env("TRACE"),
                       help="replay a recorded power trace file")
    bench.add_argument("--calibration", default=_env("CALIBRATION"),
                       help="calibration file with tuned blocking parameters")
    bench.add_argument("--out", default=_env("OUT"), help="CSV output path (default stdout)")
    bench.add_argument("--seed", type=int, default=int(_env("SEED") or 0))
    _add_scheduler_flags(bench)
    bench.set_defaults(func=cmd_bench)

    sim = subs.add_parser("simulate", help="predict throughput/efficiency of splits")
    sim.add_argument("--profile", default=_env("PROFILE"),
                     help="per-cluster peaks: FAST_GFLOPS,SLOW_GFLOPS")
    sim.add_argument("--calibration", default=_env("CALIBRATION"),
                     help="read the profile from a calibration file")
    sim.add_argument("--power-model", default=_env("POWER_MODEL"))
    sim.add_argument("--quantize", type=int, default=None, metavar="SIZE",
                     help="also predict with whole-block quantization at this size")
    _add_scheduler_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    tune = subs.add_parser("tune", help="search blocking sizes, calibrate the ratio")
    tune.add_argument("--grid", default=_env("GRID") or "mc=32:512:16,kc=64:1024:16",
                      help='search grid, e.g. "mc=176,kc=368" or "mc=32:512:16,kc=64:1024:16"')
    tune.add_argument("--sizes", default=_env("SIZES") or "512",
                      help="problem sizes timed during the search")
    tune.add_argument("--reps", type=int, default=int(_env("REPS") or 3))
    tune.add_argument("--profile", default=_env("PROFILE"),
                      help="skip ratio measurement; derive it from FAST,SLOW GFLOPS")
    tune.add_argument("--out", default=_env("OUT"), required=_env("OUT") is None,
                      help="calibration file to write")
    _add_scheduler_flags(tune)
    tune.set_defaults(func=cmd_tune)

    rep = subs.add_parser("report", help="render figures and a summary table from bench CSV")
    rep.add_argument("--csv", default=_env("CSV"), required=_env("CSV") is None,
                     help="bench CSV to read")
    rep.add_argument("--out-dir", default=_env("OUT_DIR") or "report",
                     help="directory for figures and the summary CSV")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    try:
        return args.func(args)
    except AgemmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
