"""Timing, power accounting and the GFLOPS / GFLOPS-per-watt metrics.

Power is modeled by default: each SoC component contributes an idle rate
plus a per-active-core rate.  A file-based trace reader covers platforms
that expose real sensors; traces hold instantaneous readings and integrate
under previous-sample-holds semantics.
"""

import time
import threading
from dataclasses import dataclass, field

from .errors import PowerDomainError, EmptyWindowError, ConfigParseError

COMPONENTS = ("A7", "A15", "DRAM", "GPU")


@dataclass(frozen=True)
class ComponentRates:
    idle_watts: float
    active_watts_per_core: float = 0.0

    def __post_init__(self):
        for name in ("idle_watts", "active_watts_per_core"):
            v = float(getattr(self, name))
            if not (v >= 0.0) or v != v or v == float("inf"):
                raise PowerDomainError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class PowerModel:
    """Linear per-core power model for the four SoC components.

    The slow cluster scales with active slow cores, the fast cluster with
    active fast cores, DRAM with all active cores; the GPU only idles.
    """

    slow_cluster: ComponentRates
    fast_cluster: ComponentRates
    dram: ComponentRates
    gpu: ComponentRates

    @classmethod
    def default(cls):
        # Derived calibration from published per-cluster sensor breakdowns
        # (linear fit of idle + per-core draw); indicative, not ground truth.
        return cls(
            slow_cluster=ComponentRates(0.109, 0.1805),
            fast_cluster=ComponentRates(0.501, 1.344),
            dram=ComponentRates(0.048, 0.014),
            gpu=ComponentRates(0.103, 0.0),
        )

    def rates_for(self, component):
        return {
            "A7": self.slow_cluster,
            "A15": self.fast_cluster,
            "DRAM": self.dram,
            "GPU": self.gpu,
        }[component]


_MODEL_FIELDS = {"a7": "slow_cluster", "a15": "fast_cluster",
                 "dram": "dram", "gpu": "gpu"}


def save_power_model(model, path):
    """Key-value lines: "<component>.idle=<w>" and "<component>.per_core=<w>"."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, attr in _MODEL_FIELDS.items():
            rates = getattr(model, attr)
            fh.write(f"{key}.idle={rates.idle_watts!r}\n")
            fh.write(f"{key}.per_core={rates.active_watts_per_core!r}\n")


def load_power_model(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigParseError(str(path), f"line {lineno}: expected key=value")
            key, _, raw = line.partition("=")
            parts = key.strip().lower().split(".")
            if len(parts) != 2 or parts[0] not in _MODEL_FIELDS \
                    or parts[1] not in ("idle", "per_core"):
                raise ConfigParseError(str(path), f"line {lineno}: unknown key {key!r}")
            try:
                values[(parts[0], parts[1])] = float(raw)
            except ValueError:
                raise ConfigParseError(
                    str(path), f"line {lineno}: bad value {raw!r}") from None
    kwargs = {}
    for comp, attr in _MODEL_FIELDS.items():
        kwargs[attr] = ComponentRates(values.get((comp, "idle"), 0.0),
                                      values.get((comp, "per_core"), 0.0))
    return PowerModel(**kwargs)


def model_power(model, active_fast, active_slow):
    """Per-component watts for the given active core counts, plus total."""
    if active_fast < 0 or active_slow < 0:
        raise PowerDomainError("active core counts must be non-negative")
    watts = {
        "A7": model.slow_cluster.idle_watts
        + active_slow * model.slow_cluster.active_watts_per_core,
        "A15": model.fast_cluster.idle_watts
        + active_fast * model.fast_cluster.active_watts_per_core,
        "DRAM": model.dram.idle_watts
        + (active_fast + active_slow) * model.dram.active_watts_per_core,
        "GPU": model.gpu.idle_watts,
    }
    watts["Total"] = watts["A7"] + watts["A15"] + watts["DRAM"] + watts["GPU"]
    return watts


@dataclass(frozen=True)
class TraceSample:
    timestamp_ms: float
    component: str
    watts: float


@dataclass
class PowerTrace:
    """Instantaneous readings per component; timestamps non-decreasing."""

    period_ms: float = 200.0
    samples: list = field(default_factory=list)

    def append(self, timestamp_ms, component, watts):
        if component not in COMPONENTS:
            raise ValueError(f"unknown component {component!r}")
        prev = self._last.get(component)
        if prev is not None and timestamp_ms < prev:
            raise ValueError(
                f"timestamps must be non-decreasing per component "
                f"({component}: {timestamp_ms} after {prev})")
        self._last[component] = timestamp_ms
        self.samples.append(TraceSample(float(timestamp_ms), component, float(watts)))

    def __post_init__(self):
        self._last = {}
        existing, self.samples = self.samples, []
        for s in existing:
            self.append(s.timestamp_ms, s.component, s.watts)

    def per_component(self, component):
        return [(s.timestamp_ms, s.watts) for s in self.samples
                if s.component == component]

    def span(self):
        if not self.samples:
            raise EmptyWindowError("trace holds no samples")
        ts = [s.timestamp_ms for s in self.samples]
        return min(ts), max(ts)

    def components(self):
        return sorted({s.component for s in self.samples},
                      key=COMPONENTS.index)


def save_trace(trace, path):
    """Text lines "timestamp_ms component watts", LF-terminated UTF-8."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in trace.samples:
            fh.write(f"{s.timestamp_ms!r} {s.component} {s.watts!r}\n")


def load_trace(path, period_ms=200.0):
    trace = PowerTrace(period_ms=period_ms)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigParseError(
                    str(path), f"line {lineno}: expected 'timestamp_ms component watts'")
            try:
                trace.append(float(parts[0]), parts[1], float(parts[2]))
            except (ValueError, EmptyWindowError) as exc:
                raise ConfigParseError(str(path), f"line {lineno}: {exc}") from None
    return trace


def trace_average(trace, t0, t1):
    """Time-weighted mean watts per component over [t0, t1).

    A sample's value holds until the next sample; the first sample also
    covers any window time before it.  Requires t1 > t0 and at least one
    sample per present component at or before t1.
    """
    if t1 <= t0:
        raise EmptyWindowError(f"window [{t0}, {t1}) is empty")
    comps = trace.components()
    if not comps:
        raise EmptyWindowError("trace holds no samples")
    out = {}
    for comp in comps:
        points = trace.per_component(comp)
        if not points or points[0][0] > t1:
            raise EmptyWindowError(
                f"component {comp} has no sample at or before {t1}")
        energy = 0.0
        for idx, (ts, watts) in enumerate(points):
            seg_lo = max(t0, ts if idx > 0 else min(ts, t0))
            seg_hi = min(t1, points[idx + 1][0] if idx + 1 < len(points) else t1)
            if seg_hi > seg_lo:
                energy += watts * (seg_hi - seg_lo)
        out[comp] = energy / (t1 - t0)
    out["Total"] = sum(out[c] for c in comps)
    return out


@dataclass(frozen=True)
class RunMetrics:
    elapsed_s: float
    gflops: float
    watts: dict           # per component, plus "Total"
    gflops_per_watt: float

    @property
    def total_watts(self):
        return self.watts.get("Total", 0.0)


def gflops(flops, elapsed_s):
    """Billions of floating-point operations per second."""
    if elapsed_s <= 0:
        raise PowerDomainError(f"elapsed time must be positive, got {elapsed_s}")
    return flops / elapsed_s / 1e9


def efficiency(gflops_value, total_watts):
    """GFLOPS per watt (equivalently, billions of flops per joule)."""
    if total_watts <= 0:
        raise PowerDomainError(f"total watts must be positive, got {total_watts}")
    return gflops_value / total_watts


def metrics_from(flops, elapsed_s, watts):
    g = gflops(flops, elapsed_s) if elapsed_s > 0 else 0.0
    total = watts.get("Total", 0.0)
    eff = efficiency(g, total) if total > 0 and g > 0 else 0.0
    return RunMetrics(elapsed_s, g, dict(watts), eff)


def measure(run, flops, source, active_fast=0, active_slow=0):
    """Execute a GEMM invocation and assemble RunMetrics.

    With a PowerModel source the call is wall-clocked and watts come from
    the model at the given active core counts.  With a PowerTrace source
    the metrics replay the recording: elapsed time is the trace span and
    watts its full-span average, so repeated replays are identical.
    """
    if isinstance(source, PowerTrace):
        run()
        lo, hi = source.span()
        if hi <= lo:
            raise EmptyWindowError("trace span is empty; cannot replay timings")
        watts = trace_average(source, lo, hi)
        return metrics_from(flops, (hi - lo) / 1e3, watts)
    if isinstance(source, PowerModel):
        t0 = time.perf_counter()
        run()
        elapsed = time.perf_counter() - t0
        watts = model_power(source, active_fast, active_slow)
        return metrics_from(flops, elapsed, watts)
    raise TypeError(f"source must be PowerModel or PowerTrace, got {type(source)!r}")


class PowerSampler:
    """Background sampler turning a watts provider into an append-only trace.

    ``provider()`` returns {component: watts}; it is polled every period_ms
    on a dedicated thread.  Readers only ever see completed samples.
    """

    def __init__(self, provider, period_ms=200.0):
        self._provider = provider
        self._period_ms = period_ms
        self._trace = PowerTrace(period_ms=period_ms)
        self._stop = threading.Event()
        self._thread = None
        self._t0 = None

    def start(self):
        if self._thread is not None:
            raise RuntimeError("sampler already started")
        self._t0 = time.perf_counter()
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, daemon=True,
                                        name="agemm-power-sampler")
        self._thread.start()

    def _sample_once(self):
        now_ms = (time.perf_counter() - self._t0) * 1e3
        for comp, watts in self._provider().items():
            self._trace.append(now_ms, comp, watts)

    def _loop(self):
        self._sample_once()
        while not self._stop.wait(self._period_ms / 1e3):
            self._sample_once()

    def stop(self):
        if self._thread is None:
            raise RuntimeError("sampler not running")
        self._stop.set()
        self._thread.join()
        self._thread = None
        self._sample_once()
        return self._trace

    def trace(self):
        return self._trace
