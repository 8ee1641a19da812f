"""Compiled inner loops.

Every kernel operates on flat float64 arrays with explicit leading
dimensions and preserves a fixed per-element arithmetic order: products
are accumulated in ascending k order, one multiply-add at a time, and the
final combine is always ``beta*c + alpha*acc`` (two rounded products, one
rounded add).  Pausing a chain at a panel boundary stores and reloads the
running sum, which is exact, so results are independent of how the k range
is cut into panels or how tiles are assigned to threads.

All kernels release the GIL so worker threads can execute them in parallel.
"""

import numba
import numpy as np

JIT = dict(cache=True, nogil=True)


@numba.njit(**JIT)
def reference_gemm(a, lda, b, ldb, c, ldc, out, ldo, m, n, k, alpha, beta):
    for j in range(n):
        bj = j * ldb
        for i in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i + p * lda] * b[p + bj]
            out[i + j * ldo] = beta * c[i + j * ldc] + alpha * acc


@numba.njit(**JIT)
def pack_a_panels(a, lda, row0, col0, mc_eff, kc_eff, mr, buf, panel_lo, panel_hi):
    # Row-panel layout: element (i, p) of the block lands at
    # panel_base + p*mr + (i % mr); rows past mc_eff are zero padding.
    for q in range(panel_lo, panel_hi):
        base = q * mr * kc_eff
        i0 = q * mr
        for p in range(kc_eff):
            src = row0 + (col0 + p) * lda
            dst = base + p * mr
            for r in range(mr):
                i = i0 + r
                if i < mc_eff:
                    buf[dst + r] = a[src + i]
                else:
                    buf[dst + r] = 0.0


@numba.njit(**JIT)
def pack_b_panels(b, ldb, row0, col0, kc_eff, nc_eff, nr, buf, panel_lo, panel_hi):
    # Column-panel layout: element (p, j) of the block lands at
    # panel_base + p*nr + (j % nr); columns past nc_eff are zero padding.
    for q in range(panel_lo, panel_hi):
        base = q * nr * kc_eff
        j0 = q * nr
        for p in range(kc_eff):
            src = row0 + p
            dst = base + p * nr
            for s in range(nr):
                j = j0 + s
                if j < nc_eff:
                    buf[dst + s] = b[src + (col0 + j) * ldb]
                else:
                    buf[dst + s] = 0.0


@numba.njit(**JIT)
def macro_accumulate(abuf, bbuf, kc_eff, mc_eff, nc_eff, mr, nr,
                     acc, ldacc, row0, col0, jr_lo, jr_hi, ir_lo, ir_hi):
    """Add the packed-panel products for a tile rectangle into acc.

    acc holds the raw running sums; no alpha/beta scaling happens here so
    the per-element chain can be resumed on the next k panel.
    """
    if mr == 4 and nr == 4:
        for jq in range(jr_lo, jr_hi):
            bbase = jq * 4 * kc_eff
            jt = jq * 4
            njj = min(4, nc_eff - jt)
            for iq in range(ir_lo, ir_hi):
                abase = iq * 4 * kc_eff
                it = iq * 4
                nii = min(4, mc_eff - it)
                o0 = (row0 + it) + (col0 + jt) * ldacc
                if nii == 4 and njj == 4:
                    o1 = o0 + ldacc
                    o2 = o1 + ldacc
                    o3 = o2 + ldacc
                    c00 = acc[o0]; c10 = acc[o0 + 1]; c20 = acc[o0 + 2]; c30 = acc[o0 + 3]
                    c01 = acc[o1]; c11 = acc[o1 + 1]; c21 = acc[o1 + 2]; c31 = acc[o1 + 3]
                    c02 = acc[o2]; c12 = acc[o2 + 1]; c22 = acc[o2 + 2]; c32 = acc[o2 + 3]
                    c03 = acc[o3]; c13 = acc[o3 + 1]; c23 = acc[o3 + 2]; c33 = acc[o3 + 3]
                    for p in range(kc_eff):
                        ap = abase + p * 4
                        bp = bbase + p * 4
                        a0 = abuf[ap]; a1 = abuf[ap + 1]; a2 = abuf[ap + 2]; a3 = abuf[ap + 3]
                        b0 = bbuf[bp]; b1 = bbuf[bp + 1]; b2 = bbuf[bp + 2]; b3 = bbuf[bp + 3]
                        c00 += a0 * b0; c10 += a1 * b0; c20 += a2 * b0; c30 += a3 * b0
                        c01 += a0 * b1; c11 += a1 * b1; c21 += a2 * b1; c31 += a3 * b1
                        c02 += a0 * b2; c12 += a1 * b2; c22 += a2 * b2; c32 += a3 * b2
                        c03 += a0 * b3; c13 += a1 * b3; c23 += a2 * b3; c33 += a3 * b3
                    acc[o0] = c00; acc[o0 + 1] = c10; acc[o0 + 2] = c20; acc[o0 + 3] = c30
                    acc[o1] = c01; acc[o1 + 1] = c11; acc[o1 + 2] = c21; acc[o1 + 3] = c31
                    acc[o2] = c02; acc[o2 + 1] = c12; acc[o2 + 2] = c22; acc[o2 + 3] = c32
                    acc[o3] = c03; acc[o3 + 1] = c13; acc[o3 + 2] = c23; acc[o3 + 3] = c33
                else:
                    for s in range(njj):
                        for r in range(nii):
                            idx = o0 + r + s * ldacc
                            t = acc[idx]
                            ar = abase + r
                            bs = bbase + s
                            for p in range(kc_eff):
                                t += abuf[ar + p * 4] * bbuf[bs + p * 4]
                            acc[idx] = t
    else:
        for jq in range(jr_lo, jr_hi):
            bbase = jq * nr * kc_eff
            jt = jq * nr
            njj = min(nr, nc_eff - jt)
            for iq in range(ir_lo, ir_hi):
                abase = iq * mr * kc_eff
                it = iq * mr
                nii = min(mr, mc_eff - it)
                o0 = (row0 + it) + (col0 + jt) * ldacc
                for s in range(njj):
                    for r in range(nii):
                        idx = o0 + r + s * ldacc
                        t = acc[idx]
                        ar = abase + r
                        bs = bbase + s
                        for p in range(kc_eff):
                            t += abuf[ar + p * mr] * bbuf[bs + p * nr]
                        acc[idx] = t


@numba.njit(**JIT)
def merge_scaled(res, ldr, c, ldc, row0, col0, m_eff, n_eff, alpha, beta):
    """res = beta*c + alpha*res over the region, one rounding per op."""
    for j in range(n_eff):
        ro = row0 + (col0 + j) * ldr
        co = row0 + (col0 + j) * ldc
        for i in range(m_eff):
            res[ro + i] = beta * c[co + i] + alpha * res[ro + i]


@numba.njit(**JIT)
def micro_merge(apanel, bpanel, kc_eff, mr, nr, tile, alpha, beta_panel):
    """Zero-initialized rank-1 accumulation, then tile = beta_panel*tile + alpha*acc.

    tile is a 2-D (possibly partial and strided) view; only its extent is
    written back, so padded lanes of the panels never touch memory.
    """
    scratch = np.zeros(mr * nr)
    for p in range(kc_eff):
        ap = p * mr
        bp = p * nr
        for s in range(nr):
            bv = bpanel[bp + s]
            for r in range(mr):
                scratch[s * mr + r] += apanel[ap + r] * bv
    for s in range(tile.shape[1]):
        for r in range(tile.shape[0]):
            tile[r, s] = beta_panel * tile[r, s] + alpha * scratch[s * mr + r]


@numba.njit(**JIT)
def macro_merge(abuf, bbuf, kc_eff, mc_eff, nc_eff, mr, nr,
                cregion, jr_lo, jr_hi, ir_lo, ir_hi, alpha, beta_panel):
    """Per-tile variant of micro_merge over a tile rectangle of cregion."""
    scratch = np.zeros(mr * nr)
    for jq in range(jr_lo, jr_hi):
        bbase = jq * nr * kc_eff
        jt = jq * nr
        njj = min(nr, nc_eff - jt)
        for iq in range(ir_lo, ir_hi):
            abase = iq * mr * kc_eff
            it = iq * mr
            nii = min(mr, mc_eff - it)
            for t in range(mr * nr):
                scratch[t] = 0.0
            for p in range(kc_eff):
                ap = abase + p * mr
                bp = bbase + p * nr
                for s in range(nr):
                    bv = bbuf[bp + s]
                    for r in range(mr):
                        scratch[s * mr + r] += abuf[ap + r] * bv
            for s in range(njj):
                for r in range(nii):
                    cregion[it + r, jt + s] = (beta_panel * cregion[it + r, jt + s]
                                               + alpha * scratch[s * mr + r])
