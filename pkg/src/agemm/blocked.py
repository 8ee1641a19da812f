"""Five-loop cache-blocked GEMM driver.

Loop order: column blocks of width nc, then depth panels of kc (packing a
block of B), then row blocks of mc (packing a block of A), then the
macro-kernel over mr x nr tiles.  Raw products accumulate into the result
buffer across all depth panels; alpha and beta are applied exactly once
per element after the last panel of its column block, which keeps the
output bit-identical to gemm_reference for every blocking choice.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamsError
from .matrix import Matrix, check_conformable
from . import kernels


@dataclass(frozen=True)
class BlockingParams:
    """Cache and register blocking sizes (all >= 1)."""

    nc: int
    kc: int
    mc: int
    nr: int
    mr: int

    def __post_init__(self):
        for name in ("nc", "kc", "mc", "nr", "mr"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise InvalidParamsError(f"{name} must be an integer >= 1, got {v!r}")


def default_params():
    """Blocking tuned empirically for the target 32-bit ARM cores:
    mc=176, kc=368, nc=4096 (no L3 so nc barely matters), 4x4 register tile.
    """
    return BlockingParams(nc=4096, kc=368, mc=176, nr=4, mr=4)


class WorkspaceCounters:
    """Counts live buffer allocations made by the drivers (for tests)."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.pack_a = 0
        self.pack_b = 0
        self.accumulator = 0


workspace_counters = WorkspaceCounters()


def _ceil_div(a, b):
    return -(-a // b)


def alloc_pack_a(m, k, params):
    """One A-block buffer sized for the largest packed block of this problem."""
    mc = min(params.mc, m)
    kc = min(params.kc, k)
    workspace_counters.pack_a += 1
    return np.empty(_ceil_div(mc, params.mr) * params.mr * kc)


def alloc_pack_b(n, k, params):
    mc_cols = min(params.nc, n)
    kc = min(params.kc, k)
    workspace_counters.pack_b += 1
    return np.empty(_ceil_div(mc_cols, params.nr) * params.nr * kc)


def alloc_accumulator(m, n):
    workspace_counters.accumulator += 1
    return np.zeros(m * n)


def gemm_blocked(problem, a, b, c, params=None):
    """Blocked product; bit-identical to gemm_reference for any params."""
    if params is None:
        params = default_params()
    if not isinstance(params, BlockingParams):
        raise InvalidParamsError(f"expected BlockingParams, got {type(params)!r}")
    check_conformable(problem, a, b, c)
    m, n, k = problem.m, problem.n, problem.k
    nc, kc, mc, nr, mr = params.nc, params.kc, params.mc, params.nr, params.mr
    alpha = float(problem.alpha)
    beta = float(problem.beta)

    acc = alloc_accumulator(m, n)
    buf_a = alloc_pack_a(m, k, params)
    buf_b = alloc_pack_b(n, k, params)

    for jc in range(0, n, nc):
        ncc = min(nc, n - jc)
        n_jr = _ceil_div(ncc, nr)
        for pc in range(0, k, kc):
            kcc = min(kc, k - pc)
            kernels.pack_b_panels(b.data, b.leading_dimension, pc, jc,
                                  kcc, ncc, nr, buf_b, 0, n_jr)
            for ic in range(0, m, mc):
                mcc = min(mc, m - ic)
                n_ir = _ceil_div(mcc, mr)
                kernels.pack_a_panels(a.data, a.leading_dimension, ic, pc,
                                      mcc, kcc, mr, buf_a, 0, n_ir)
                kernels.macro_accumulate(buf_a, buf_b, kcc, mcc, ncc, mr, nr,
                                         acc, m, ic, jc, 0, n_jr, 0, n_ir)
        kernels.merge_scaled(acc, m, c.data, c.leading_dimension,
                             0, jc, m, ncc, alpha, beta)
    return Matrix(m, n, acc, m)
