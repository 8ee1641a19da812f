"""Packing of cache blocks into micro-panel buffers, micro- and macro-kernel.

A block of A becomes row panels of height mr: element (i, p) of the block
is stored at ``panel_base + p*mr + (i % mr)``, rows beyond the block are
zero.  A block of B becomes column panels of width nr with the mirrored
rule ``panel_base + p*nr + (j % nr)``.  The micro-kernel walks one row
panel against one column panel and touches exactly the kc values it is
given, so zero padding never perturbs a result.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PackBoundsError
from . import kernels


def _ceil_div(a, b):
    return -(-a // b)


@dataclass(frozen=True)
class PackedBlockA:
    """mc_eff x kc_eff block of A as ceil(mc_eff/mr) zero-padded row panels."""

    mc_eff: int
    kc_eff: int
    mr: int
    data: np.ndarray

    @property
    def panels(self):
        return _ceil_div(self.mc_eff, self.mr)

    def panel(self, q):
        """Flat view of row panel q (mr*kc_eff values)."""
        size = self.mr * self.kc_eff
        return self.data[q * size:(q + 1) * size]


@dataclass(frozen=True)
class PackedBlockB:
    """kc_eff x nc_eff block of B as ceil(nc_eff/nr) zero-padded column panels."""

    kc_eff: int
    nc_eff: int
    nr: int
    data: np.ndarray

    @property
    def panels(self):
        return _ceil_div(self.nc_eff, self.nr)

    def panel(self, q):
        size = self.nr * self.kc_eff
        return self.data[q * size:(q + 1) * size]


@dataclass(frozen=True)
class TileRange:
    """Half-open rectangle of (j-tile, i-tile) indices inside a block grid."""

    jr_lo: int
    jr_hi: int
    ir_lo: int
    ir_hi: int

    def __post_init__(self):
        if self.jr_lo < 0 or self.ir_lo < 0 or self.jr_lo > self.jr_hi or self.ir_lo > self.ir_hi:
            raise PackBoundsError(f"malformed tile range {self}")

    @classmethod
    def full(cls, n_jr, n_ir):
        return cls(0, n_jr, 0, n_ir)

    @property
    def empty(self):
        return self.jr_lo == self.jr_hi or self.ir_lo == self.ir_hi


def pack_a(a, row_offset, col_offset, mc_eff, kc_eff, mr, out=None):
    """Pack the (mc_eff x kc_eff) block of A at (row_offset, col_offset)."""
    if mr < 1 or mc_eff < 0 or kc_eff < 0:
        raise PackBoundsError("mr must be >= 1 and block sizes non-negative")
    if row_offset < 0 or col_offset < 0 \
            or row_offset + mc_eff > a.rows or col_offset + kc_eff > a.cols:
        raise PackBoundsError(
            f"block {mc_eff}x{kc_eff} at ({row_offset},{col_offset}) "
            f"outside {a.rows}x{a.cols} matrix")
    panels = _ceil_div(mc_eff, mr)
    size = panels * mr * kc_eff
    buf = np.empty(size) if out is None else out[:size]
    kernels.pack_a_panels(a.data, a.leading_dimension, row_offset, col_offset,
                          mc_eff, kc_eff, mr, buf, 0, panels)
    return PackedBlockA(mc_eff, kc_eff, mr, buf)


def pack_b(b, row_offset, col_offset, kc_eff, nc_eff, nr, out=None):
    """Pack the (kc_eff x nc_eff) block of B at (row_offset, col_offset)."""
    if nr < 1 or nc_eff < 0 or kc_eff < 0:
        raise PackBoundsError("nr must be >= 1 and block sizes non-negative")
    if row_offset < 0 or col_offset < 0 \
            or row_offset + kc_eff > b.rows or col_offset + nc_eff > b.cols:
        raise PackBoundsError(
            f"block {kc_eff}x{nc_eff} at ({row_offset},{col_offset}) "
            f"outside {b.rows}x{b.cols} matrix")
    panels = _ceil_div(nc_eff, nr)
    size = panels * nr * kc_eff
    buf = np.empty(size) if out is None else out[:size]
    kernels.pack_b_panels(b.data, b.leading_dimension, row_offset, col_offset,
                          kc_eff, nc_eff, nr, buf, 0, panels)
    return PackedBlockB(kc_eff, nc_eff, nr, buf)


def micro_kernel(a_panel, b_panel, kc_eff, tile, alpha=1.0, beta_panel=1.0):
    """One register tile: kc_eff rank-1 updates into a zeroed local
    accumulator in ascending p order, then tile = beta_panel*tile + alpha*acc.

    ``tile`` is a writable 2-D view of C; a partial edge tile (fewer than
    mr rows or nr columns) stores back only its own extent.
    """
    a_panel = np.ascontiguousarray(a_panel, dtype=np.float64).ravel()
    b_panel = np.ascontiguousarray(b_panel, dtype=np.float64).ravel()
    if kc_eff > 0:
        if a_panel.size % kc_eff or b_panel.size % kc_eff:
            raise PackBoundsError("panel sizes are not multiples of kc_eff")
        mr = a_panel.size // kc_eff
        nr = b_panel.size // kc_eff
    else:
        mr, nr = tile.shape
    if tile.shape[0] > mr or tile.shape[1] > nr:
        raise PackBoundsError(
            f"tile {tile.shape} exceeds register block {mr}x{nr}")
    kernels.micro_merge(a_panel, b_panel, kc_eff, mr, nr, tile,
                        float(alpha), float(beta_panel))


def macro_kernel(ac, bc, c_region, params, alpha=1.0, beta_panel=1.0,
                 tile_range=None):
    """Loop nr-wide j tiles then mr-tall i tiles of a packed block pair,
    applying micro_kernel to each tile in the (optional) tile rectangle.

    Tiles write disjoint parts of c_region, so concurrent calls with
    disjoint ranges are safe.
    """
    if ac.kc_eff != bc.kc_eff:
        raise PackBoundsError(
            f"packed depth mismatch: A has kc={ac.kc_eff}, B has kc={bc.kc_eff}")
    if params is not None and (params.mr != ac.mr or params.nr != bc.nr):
        raise PackBoundsError("blocking parameters disagree with packed blocks")
    if c_region.shape != (ac.mc_eff, bc.nc_eff):
        raise PackBoundsError(
            f"C region {c_region.shape} does not match block {ac.mc_eff}x{bc.nc_eff}")
    n_jr = bc.panels
    n_ir = ac.panels
    rect = TileRange.full(n_jr, n_ir) if tile_range is None else tile_range
    if rect.jr_hi > n_jr or rect.ir_hi > n_ir:
        raise PackBoundsError(f"tile range {rect} outside grid {n_jr}x{n_ir}")
    if rect.empty:
        return
    kernels.macro_merge(ac.data, bc.data, ac.kc_eff, ac.mc_eff, bc.nc_eff,
                        ac.mr, bc.nr, c_region,
                        rect.jr_lo, rect.jr_hi, rect.ir_lo, rect.ir_hi,
                        float(alpha), float(beta_panel))
