"""Cache-blocked, multi-threaded dense matrix multiplication with asymmetric
fast/slow core-class scheduling, energy accounting, an analytic scheduling
simulator and an autotuner."""

from .errors import (AgemmError, ConformabilityError, InvalidParamsError,
                     PackBoundsError, IllegalLoopError, ConfigurationError,
                     ConfigParseError, PowerDomainError, EmptyWindowError,
                     CalibrationError, GranularityWarning, PinningWarning)
from .matrix import (Matrix, GemmProblem, gemm_reference, flop_count,
                     save_matrix, load_matrix)
from .packing import (PackedBlockA, PackedBlockB, TileRange, pack_a, pack_b,
                      micro_kernel, macro_kernel)
from .blocked import (BlockingParams, default_params, gemm_blocked,
                      workspace_counters)
from .scheduler import (CoreTopology, PerfRatio, CoarseLoop, FineLoop,
                        ParallelConfig, PartitionPlan, FinePlan, ThreadPool,
                        partition_weighted, plan_coarse, plan_fine,
                        validate_config, env_overrides, default_config,
                        gemm_parallel)
from .power import (PowerModel, ComponentRates, PowerTrace, RunMetrics,
                    PowerSampler, gflops, efficiency, model_power,
                    trace_average, measure, save_trace, load_trace,
                    save_power_model, load_power_model)
from .simulate import (ClusterProfile, MakespanPrediction, predict_makespan,
                       predict_ratio_split, ideal_throughput, optimal_ratio,
                       predict_quantized)
from .tune import (tune_blocking, calibrate_ratio, TuneResult,
                   CalibrationResult, save_calibration, load_calibration)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
