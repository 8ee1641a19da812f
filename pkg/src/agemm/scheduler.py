"""Asymmetric static scheduling: thread classes, partition plans, parallel driver.

The iteration space of one outer loop (column blocks or row blocks) is split
between a fast and a slow core class in proportion to a performance ratio,
in whole cache-block units so each class keeps the tuned blocking sizes.
Inside a class, macro-kernel tiles are split evenly across that class's
threads.  The depth loop is never parallelized: every thread walks the same
panel sequence, separated by barriers around the shared packed buffers.

All partitioning is static; there is no work stealing.  Chunk boundaries
never change per-element arithmetic, so results are bit-identical across
thread counts, ratios and loop choices.
"""

import enum
import math
import os
import queue
import threading
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (ConfigurationError, ConfigParseError, GranularityWarning,
                     IllegalLoopError, PinningWarning)
from .matrix import Matrix, check_conformable
from .packing import TileRange
from .blocked import (default_params, alloc_pack_a, alloc_pack_b,
                      alloc_accumulator, _ceil_div)
from . import kernels

FAST, SLOW = 0, 1


class CoarseLoop(enum.Enum):
    """Loops legal for the cross-cluster split."""

    JC = "jc"   # loop 1, column blocks of width nc
    IC = "ic"   # loop 3, row blocks of height mc


class FineLoop(enum.Enum):
    """Loops legal for the intra-cluster split."""

    JR = "jr"   # loop 4, nr-wide tiles
    IR = "ir"   # loop 5, mr-tall tiles


_SEQUENTIAL_LOOPS = ("pc", "p_c", "loop2", "2")


def coarse_loop_from_name(name):
    key = str(name).strip().lower()
    if key in _SEQUENTIAL_LOOPS:
        raise IllegalLoopError(
            "the depth loop (pc) updates every element of C and must stay sequential")
    try:
        return CoarseLoop(key)
    except ValueError:
        raise ConfigurationError(f"unknown coarse loop {name!r}; use 'jc' or 'ic'") from None


def fine_loops_from_names(names):
    if isinstance(names, str):
        names = names.split(",")
    loops = set()
    for name in names:
        key = str(name).strip().lower()
        if key in _SEQUENTIAL_LOOPS:
            raise IllegalLoopError(
                "the depth loop (pc) updates every element of C and must stay sequential")
        try:
            loops.add(FineLoop(key))
        except ValueError:
            raise ConfigurationError(
                f"unknown fine loop {name!r}; use 'jr', 'ir' or 'jr,ir'") from None
    if not loops:
        raise ConfigurationError("at least one fine loop is required")
    return frozenset(loops)


@dataclass(frozen=True)
class PerfRatio:
    """fast:slow work ratio, reduced to lowest terms."""

    fast_weight: int
    slow_weight: int

    def __post_init__(self):
        f, s = self.fast_weight, self.slow_weight
        if not isinstance(f, (int, np.integer)) or not isinstance(s, (int, np.integer)) \
                or f < 1 or s < 1:
            raise ConfigurationError(f"ratio weights must be positive integers, got {f}:{s}")
        g = math.gcd(int(f), int(s))
        object.__setattr__(self, "fast_weight", int(f) // g)
        object.__setattr__(self, "slow_weight", int(s) // g)

    @classmethod
    def parse(cls, text):
        parts = str(text).split(":")
        try:
            f, s = (int(p) for p in parts)
        except (TypeError, ValueError):
            raise ConfigurationError(
                f"ratio must look like 'F:S' with positive integers, got {text!r}") from None
        return cls(f, s)

    def __str__(self):
        return f"{self.fast_weight}:{self.slow_weight}"


@dataclass(frozen=True)
class CoreTopology:
    """Declared fast/slow thread counts, optionally with cores to pin to."""

    fast_threads: int
    slow_threads: int
    fast_core_ids: tuple = None
    slow_core_ids: tuple = None

    def __post_init__(self):
        if self.fast_threads < 0 or self.slow_threads < 0:
            raise ConfigurationError("thread counts must be non-negative")
        if self.fast_threads + self.slow_threads < 1:
            raise ConfigurationError("need at least one thread")
        ids = []
        for name, count in (("fast_core_ids", self.fast_threads),
                            ("slow_core_ids", self.slow_threads)):
            got = getattr(self, name)
            if got is not None:
                got = tuple(int(i) for i in got)
                object.__setattr__(self, name, got)
                if len(got) != count:
                    raise ConfigurationError(
                        f"{name} lists {len(got)} cores for {count} threads")
                ids.extend(got)
        if len(ids) != len(set(ids)):
            raise ConfigurationError("core id lists contain duplicates")

    @property
    def total(self):
        return self.fast_threads + self.slow_threads

    def class_size(self, cluster):
        return self.fast_threads if cluster == FAST else self.slow_threads


@dataclass(frozen=True)
class ParallelConfig:
    """How the loops are split across the two core classes."""

    topology: CoreTopology
    ratio: PerfRatio = PerfRatio(6, 1)
    coarse_loop: CoarseLoop = CoarseLoop.IC
    fine_loops: frozenset = frozenset({FineLoop.JR})
    fine_chunk_jr: int = 1
    fine_chunk_ir: int = 1
    pin: bool = False

    def __post_init__(self):
        if not isinstance(self.coarse_loop, CoarseLoop):
            object.__setattr__(self, "coarse_loop", coarse_loop_from_name(self.coarse_loop))
        fines = self.fine_loops
        if all(isinstance(f, FineLoop) for f in fines):
            object.__setattr__(self, "fine_loops", frozenset(fines))
        else:
            object.__setattr__(self, "fine_loops", fine_loops_from_names(fines))
        if not self.fine_loops:
            raise ConfigurationError("at least one fine loop is required")
        if self.fine_chunk_jr < 1 or self.fine_chunk_ir < 1:
            raise ConfigurationError("fine chunk sizes must be >= 1")


def default_config(topology=None):
    """Deployment default: row blocks across clusters at 6:1, nr-wide tiles
    across the four threads of each cluster."""
    return ParallelConfig(topology=topology or CoreTopology(4, 4))


def validate_config(config, problem=None, params=None):
    """Reject illegal loop choices; warn when the coarse loop is too coarse.

    With the column-block loop chosen and fewer than two block units the
    slow class can end up idle, so a diagnostic (not an error) is issued.
    """
    if not isinstance(config, ParallelConfig):
        raise ConfigurationError(f"expected ParallelConfig, got {type(config)!r}")
    if problem is not None and params is not None \
            and config.coarse_loop is CoarseLoop.JC and problem.n < 2 * params.nc:
        warnings.warn(
            f"column extent {problem.n} gives fewer than two nc={params.nc} units; "
            "the coarse split cannot be proportional",
            GranularityWarning, stacklevel=2)
    return config


def partition_weighted(total_units, weights):
    """Split total_units into integer shares proportional to weights.

    Each share is floor(total*w/sum(w)); leftovers go to the largest
    fractional remainders, ties broken toward the larger weight, then the
    lower index.  Exact integer arithmetic throughout.
    """
    weights = [int(w) for w in weights]
    if total_units < 0:
        raise ValueError("total_units must be non-negative")
    if not weights or any(w < 1 for w in weights):
        raise ValueError("weights must be a non-empty list of positive integers")
    total_weight = sum(weights)
    counts = [(total_units * w) // total_weight for w in weights]
    rems = [(total_units * w) % total_weight for w in weights]
    leftover = total_units - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (-rems[i], -weights[i], i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _even_slice(total, parts, index):
    """Contiguous equal split with leftovers to the lowest indices."""
    base, rem = divmod(total, parts)
    lo = index * base + min(index, rem)
    return lo, lo + base + (1 if index < rem else 0)


@dataclass(frozen=True)
class PartitionPlan:
    """Coarse split of one loop's range between the core classes.

    ``unit_counts`` and ``ranges`` are indexed (fast, slow); ranges are
    contiguous, fast first, aligned to the loop step, and cover the extent
    exactly.  The final unit may be shorter than a full step.
    """

    loop: CoarseLoop
    step: int
    extent: int
    unit_counts: tuple
    ranges: tuple

    @property
    def total_units(self):
        return _ceil_div(self.extent, self.step) if self.extent else 0


def plan_coarse(problem, params, config):
    """Assign whole step-units of the coarse loop to each core class.

    A class with no threads is excluded from the split (its share is empty);
    the fast class always takes the leading range.
    """
    topo = config.topology
    if topo.total < 1:
        raise ConfigurationError("topology has no threads")
    loop = config.coarse_loop
    if loop is CoarseLoop.JC:
        extent, step = problem.n, params.nc
    else:
        extent, step = problem.m, params.mc
    units = _ceil_div(extent, step)

    active = [cls for cls in (FAST, SLOW) if topo.class_size(cls) > 0]
    weights = [config.ratio.fast_weight if cls == FAST else config.ratio.slow_weight
               for cls in active]
    shares = partition_weighted(units, weights)
    counts = [0, 0]
    for cls, share in zip(active, shares):
        counts[cls] = share

    fast_end = min(counts[FAST] * step, extent)
    ranges = ((0, fast_end), (fast_end, extent))
    return PartitionPlan(loop, step, extent, tuple(counts), ranges)


@dataclass(frozen=True)
class FinePlan:
    """Per-thread tile rectangles covering a macro-kernel's tile grid."""

    grid: tuple
    rects: tuple


def _split_2d(threads):
    # ti along i tiles, tj along j tiles, tj >= ti (the j grid is usually
    # the larger one); e.g. 4 threads -> 2x2 quadrants.
    ti = 1
    for d in range(1, int(math.isqrt(threads)) + 1):
        if threads % d == 0:
            ti = d
    return threads // ti, ti


def _chunked_slice(tiles, chunk, parts, index):
    units = _ceil_div(tiles, chunk)
    lo, hi = _even_slice(units, parts, index)
    return min(lo * chunk, tiles), min(hi * chunk, tiles)


def plan_fine(block_grid, config, threads_in_cluster):
    """Even split of the chosen fine loop(s)' tile indices among one
    cluster's threads; contiguous ranges in thread order, optionally in
    multiples of the configured chunk size."""
    if threads_in_cluster < 1:
        raise ConfigurationError("threads_in_cluster must be >= 1")
    n_jr, n_ir = block_grid
    fines = config.fine_loops
    rects = []
    if fines == {FineLoop.JR} or fines == frozenset({FineLoop.JR}):
        for t in range(threads_in_cluster):
            lo, hi = _chunked_slice(n_jr, config.fine_chunk_jr, threads_in_cluster, t)
            rects.append(TileRange(lo, hi, 0, n_ir))
    elif fines == frozenset({FineLoop.IR}):
        for t in range(threads_in_cluster):
            lo, hi = _chunked_slice(n_ir, config.fine_chunk_ir, threads_in_cluster, t)
            rects.append(TileRange(0, n_jr, lo, hi))
    else:
        tj, ti = _split_2d(threads_in_cluster)
        for t in range(threads_in_cluster):
            qj, qi = divmod(t, ti)
            jlo, jhi = _chunked_slice(n_jr, config.fine_chunk_jr, tj, qj)
            ilo, ihi = _chunked_slice(n_ir, config.fine_chunk_ir, ti, qi)
            rects.append(TileRange(jlo, jhi, ilo, ihi))
    return FinePlan((n_jr, n_ir), tuple(rects))


_ENV_PREFIX = "AGEMM_"


@dataclass
class EnvOverrides:
    """Optional configuration deltas read from the process environment."""

    fast_threads: int = None
    slow_threads: int = None
    ratio: PerfRatio = None
    coarse_loop: CoarseLoop = None
    fine_loops: frozenset = None
    pin: bool = None

    def apply(self, config):
        topo = config.topology
        if self.fast_threads is not None or self.slow_threads is not None:
            topo = CoreTopology(
                self.fast_threads if self.fast_threads is not None else topo.fast_threads,
                self.slow_threads if self.slow_threads is not None else topo.slow_threads,
            )
        out = replace(config, topology=topo)
        if self.ratio is not None:
            out = replace(out, ratio=self.ratio)
        if self.coarse_loop is not None:
            out = replace(out, coarse_loop=self.coarse_loop)
        if self.fine_loops is not None:
            out = replace(out, fine_loops=self.fine_loops)
        if self.pin is not None:
            out = replace(out, pin=self.pin)
        return out


def env_overrides(environ=None):
    """Parse AGEMM_* variables; unset ones leave the defaults untouched.

    Recognized: AGEMM_THREADS_FAST, AGEMM_THREADS_SLOW, AGEMM_RATIO ("F:S"),
    AGEMM_COARSE_LOOP ("jc"|"ic"), AGEMM_FINE_LOOPS ("jr","ir","jr,ir"),
    AGEMM_PIN ("0"|"1").
    """
    env = os.environ if environ is None else environ
    out = EnvOverrides()

    def fetch(suffix, parse, attr):
        name = _ENV_PREFIX + suffix
        raw = env.get(name)
        if raw is None:
            return
        try:
            setattr(out, attr, parse(raw))
        except (ConfigParseError, IllegalLoopError):
            raise
        except Exception as exc:
            raise ConfigParseError(name, f"cannot parse {raw!r} ({exc})") from None

    def parse_count(raw):
        v = int(raw)
        if v < 0:
            raise ValueError("negative thread count")
        return v

    def parse_pin(raw):
        if raw not in ("0", "1"):
            raise ValueError("expected '0' or '1'")
        return raw == "1"

    fetch("THREADS_FAST", parse_count, "fast_threads")
    fetch("THREADS_SLOW", parse_count, "slow_threads")
    fetch("RATIO", PerfRatio.parse, "ratio")
    fetch("COARSE_LOOP", coarse_loop_from_name, "coarse_loop")
    fetch("FINE_LOOPS", fine_loops_from_names, "fine_loops")
    fetch("PIN", parse_pin, "pin")
    return out


class _WorkerCtx:
    __slots__ = ("global_rank", "cluster", "cluster_rank")

    def __init__(self, global_rank, cluster, cluster_rank):
        self.global_rank = global_rank
        self.cluster = cluster
        self.cluster_rank = cluster_rank


class ThreadPool:
    """Persistent pool of fast+slow worker threads.

    Workers are created (and optionally pinned) once; each job is a callable
    run by every worker.  One pool serves one GEMM at a time; create a
    second pool for concurrent calls.
    """

    def __init__(self, topology, pin=False):
        self.topology = topology
        self._queues = []
        self._done = queue.SimpleQueue()
        self._threads = []
        self._closed = False
        if pin and not hasattr(os, "sched_setaffinity"):
            warnings.warn("platform lacks thread affinity; running unpinned",
                          PinningWarning, stacklevel=2)
            pin = False
        if pin and topology.fast_core_ids is None and topology.slow_core_ids is None:
            warnings.warn("pinning requested but no core ids declared; running unpinned",
                          PinningWarning, stacklevel=2)
            pin = False
        ranks = [(FAST, r) for r in range(topology.fast_threads)] + \
                [(SLOW, r) for r in range(topology.slow_threads)]
        for grank, (cluster, crank) in enumerate(ranks):
            ctx = _WorkerCtx(grank, cluster, crank)
            core = None
            if pin:
                ids = topology.fast_core_ids if cluster == FAST else topology.slow_core_ids
                core = ids[crank] if ids is not None else None
            q = queue.SimpleQueue()
            t = threading.Thread(target=self._worker, args=(ctx, q, core),
                                 name=f"agemm-{'fast' if cluster == FAST else 'slow'}-{crank}",
                                 daemon=True)
            self._queues.append(q)
            self._threads.append(t)
            t.start()

    def _worker(self, ctx, q, core):
        if core is not None:
            try:
                os.sched_setaffinity(0, {core})
            except OSError as exc:
                warnings.warn(f"cannot pin thread to core {core}: {exc}",
                              PinningWarning, stacklevel=1)
        while True:
            job = q.get()
            if job is None:
                return
            try:
                job(ctx)
            except BaseException as exc:  # propagated to the caller
                self._done.put(exc)
            else:
                self._done.put(None)

    def run(self, job):
        """Run job(ctx) on every worker; re-raise the first worker failure."""
        if self._closed:
            raise ConfigurationError("pool is closed")
        for q in self._queues:
            q.put(job)
        errors = [e for _ in self._threads if (e := self._done.get()) is not None]
        if errors:
            primary = [e for e in errors if not isinstance(e, threading.BrokenBarrierError)]
            raise (primary or errors)[0]

    def close(self):
        if not self._closed:
            self._closed = True
            for q in self._queues:
                q.put(None)
            for t in self._threads:
                t.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SpinBarrier:
    """Reusable generation barrier: a brief GIL-yielding spin, then parking.

    Panel and tile barriers fire thousands of times per call with little
    work between them; a bounded spin resolves those crossings without the
    futex round trip that dominates threading.Barrier under oversubscription.
    """

    __slots__ = ("n", "count", "gen", "lock", "event", "broken", "spin_s")

    def __init__(self, n, spin_s=1e-4):
        self.n = n
        self.count = 0
        self.gen = 0
        self.lock = threading.Lock()
        self.event = threading.Event()
        self.broken = False
        self.spin_s = spin_s

    def wait(self):
        with self.lock:
            if self.broken:
                raise threading.BrokenBarrierError
            gen = self.gen
            self.count += 1
            if self.count == self.n:
                self.count = 0
                self.gen = gen + 1
                released = self.event
                self.event = threading.Event()
                released.set()
                return
            event = self.event
        deadline = time.perf_counter() + self.spin_s
        while self.gen == gen and not self.broken:
            if time.perf_counter() >= deadline:
                event.wait()
                break
            time.sleep(0)
        if self.broken:
            raise threading.BrokenBarrierError

    def abort(self):
        with self.lock:
            self.broken = True
            self.event.set()


class _Sync:
    """Per-job barriers; barriers over one thread are elided."""

    def __init__(self, total, fast_threads, slow_threads, need_global):
        self.global_bar = SpinBarrier(total) if need_global and total > 1 else None
        self.cluster_bars = (
            SpinBarrier(fast_threads) if fast_threads > 1 else None,
            SpinBarrier(slow_threads) if slow_threads > 1 else None,
        )

    @staticmethod
    def wait(bar):
        if bar is not None:
            bar.wait()

    def abort(self):
        for bar in (self.global_bar, *self.cluster_bars):
            if bar is not None:
                bar.abort()


def gemm_parallel(problem, a, b, c, params=None, config=None, pool=None):
    """Parallel blocked product; bit-identical to gemm_blocked.

    The depth loop runs sequentially and globally.  The packed block of B is
    filled cooperatively and fenced with a barrier before use; each class
    packs its own blocks of A behind an intra-class barrier.  Tiles write
    disjoint elements, so the macro-kernels run lock-free.
    """
    if params is None:
        params = default_params()
    if config is None:
        config = default_config()
    validate_config(config, problem, params)
    check_conformable(problem, a, b, c)

    topo = config.topology
    m, n, k = problem.m, problem.n, problem.k
    nc, kc, mc, nr, mr = params.nc, params.kc, params.mc, params.nr, params.mr
    alpha, beta = float(problem.alpha), float(problem.beta)
    total = topo.total
    coarse = plan_coarse(problem, params, config)
    by_columns = coarse.loop is CoarseLoop.JC

    acc = alloc_accumulator(m, n)
    # one A buffer per class that owns work; one B buffer per depth-loop
    # scope (shared under the row split, per class under the column split)
    sizes = (topo.fast_threads, topo.slow_threads)
    has_work = tuple(sizes[cls] > 0 and coarse.ranges[cls][1] > coarse.ranges[cls][0]
                     for cls in (FAST, SLOW))
    bufs_a = [alloc_pack_a(m, k, params) if has_work[cls] else None for cls in (FAST, SLOW)]
    if by_columns:
        bufs_b = [alloc_pack_b(n, k, params) if has_work[cls] else None for cls in (FAST, SLOW)]
    else:
        shared_b = alloc_pack_b(n, k, params)
        bufs_b = [shared_b, shared_b]
    sync = _Sync(total, topo.fast_threads, topo.slow_threads, need_global=not by_columns)

    a_data, lda = a.data, a.leading_dimension
    b_data, ldb = b.data, b.leading_dimension
    c_data, ldc = c.data, c.leading_dimension

    def job(ctx):
        cls = ctx.cluster
        crank = ctx.cluster_rank
        csize = sizes[cls]
        cbar = sync.cluster_bars[cls]
        gbar = sync.global_bar
        buf_a = bufs_a[cls]
        buf_b = bufs_b[cls]
        lo_e, hi_e = coarse.ranges[cls]
        rect_cache = {}

        def my_rect(n_jr, n_ir):
            rect = rect_cache.get((n_jr, n_ir))
            if rect is None:
                rect = plan_fine((n_jr, n_ir), config, csize).rects[crank]
                rect_cache[(n_jr, n_ir)] = rect
            return rect

        def run_depth_panels(jc, ncc, row_lo, row_hi, pack_parts, pack_rank, pack_bar):
            n_jr = _ceil_div(ncc, nr)
            for pc in range(0, k, kc):
                kcc = min(kc, k - pc)
                blo, bhi = _even_slice(n_jr, pack_parts, pack_rank)
                if bhi > blo:
                    kernels.pack_b_panels(b_data, ldb, pc, jc, kcc, ncc, nr,
                                          buf_b, blo, bhi)
                _Sync.wait(pack_bar)
                for ic in range(row_lo, row_hi, mc):
                    mcc = min(mc, row_hi - ic)
                    n_ir = _ceil_div(mcc, mr)
                    alo, ahi = _even_slice(n_ir, csize, crank)
                    if ahi > alo:
                        kernels.pack_a_panels(a_data, lda, ic, pc, mcc, kcc, mr,
                                              buf_a, alo, ahi)
                    _Sync.wait(cbar)
                    rect = my_rect(n_jr, n_ir)
                    if not rect.empty:
                        kernels.macro_accumulate(buf_a, buf_b, kcc, mcc, ncc, mr, nr,
                                                 acc, m, ic, jc,
                                                 rect.jr_lo, rect.jr_hi,
                                                 rect.ir_lo, rect.ir_hi)
                    if ic + mc < row_hi:
                        # guards the A buffer against the next chunk's repack;
                        # the end-of-panel barrier below covers the last chunk
                        _Sync.wait(cbar)
                _Sync.wait(pack_bar)

        def merge_rows(jc, ncc, row_lo, row_hi):
            rlo, rhi = _even_slice(row_hi - row_lo, csize, crank)
            if rhi > rlo:
                kernels.merge_scaled(acc, m, c_data, ldc,
                                     row_lo + rlo, jc, rhi - rlo, ncc, alpha, beta)

        if by_columns:
            # each class runs its own depth loop over its own columns
            for jc in range(lo_e, hi_e, nc):
                ncc = min(nc, hi_e - jc)
                run_depth_panels(jc, ncc, 0, m, csize, crank, cbar)
                merge_rows(jc, ncc, 0, m)
        else:
            # shared columns; classes own disjoint row ranges
            for jc in range(0, n, nc):
                ncc = min(nc, n - jc)
                run_depth_panels(jc, ncc, lo_e, hi_e, total, ctx.global_rank, gbar)
                merge_rows(jc, ncc, lo_e, hi_e)

    def guarded(ctx):
        try:
            job(ctx)
        except BaseException:
            sync.abort()
            raise

    if pool is None and total == 1:
        # no concurrency to orchestrate; run the lone worker inline
        job(_WorkerCtx(0, FAST if topo.fast_threads else SLOW, 0))
        return Matrix(m, n, acc, m)
    own_pool = pool is None
    if own_pool:
        pool = ThreadPool(topo, pin=config.pin)
    elif pool.topology != topo:
        raise ConfigurationError("pool topology differs from config topology")
    try:
        pool.run(guarded)
    finally:
        if own_pool:
            pool.close()
    return Matrix(m, n, acc, m)
