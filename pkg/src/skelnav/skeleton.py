"""Topology-preserving thinning of navigable-space rasters.

The algorithm removes *simple* border pixels in four directional
sub-iterations (north, south, east, west) per pass until stable.  A
foreground pixel is simple when flipping it cannot change the topology:
its punctured 3x3 neighbourhood contains exactly one 8-connected
foreground component and exactly one 4-connected background component
that touches an orthogonal neighbour.  Endpoints (fewer than two
neighbours) are never removed, so arm tips survive.

Within one sub-iteration the candidate set (foreground pixels whose
directional neighbour is background) is frozen first, then candidates are
deleted sequentially in row-major order, re-testing each against the live
mask.  Sequential deletion is what makes the topology guarantee hold; the
frozen candidate set is what keeps the result thin instead of eroded from
one side.

The hot loop is compiled with numba and driven by a worklist so repeated
passes touch only pixels whose neighbourhood actually changed; results are
identical to a full-grid rescan because a pixel with an unchanged
neighbourhood makes the same keep/delete decision.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import InputError

# ring order: N, NE, E, SE, S, SW, W, NW (bit i of a neighbourhood mask)
_RING_DR = np.array([-1, -1, 0, 1, 1, 1, 0, -1], dtype=np.int64)
_RING_DC = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
# sub-iteration border directions: N, S, E, W as ring slots
_DIR_SLOTS = np.array([0, 4, 2, 6], dtype=np.int64)


def _build_simple_lut() -> np.ndarray:
    """256-entry truth table of the simple-point test over ring bitmasks."""
    # 8-adjacency between ring slots: consecutive slots always touch, and
    # orthogonal slots two apart (N-E, E-S, S-W, W-N) touch diagonally.
    adj8 = {i: {(i - 1) % 8, (i + 1) % 8} for i in range(8)}
    for i in (0, 2, 4, 6):
        adj8[i].add((i + 2) % 8)
        adj8[i].add((i - 2) % 8)
    # 4-adjacency between ring slots is consecutive-only.
    adj4 = {i: {(i - 1) % 8, (i + 1) % 8} for i in range(8)}

    def components(slots: set[int], adj) -> list[set[int]]:
        comps, seen = [], set()
        for s in sorted(slots):
            if s in seen:
                continue
            comp, stack = set(), [s]
            while stack:
                q = stack.pop()
                if q in comp:
                    continue
                comp.add(q)
                stack.extend(adj[q] & slots - comp)
            seen |= comp
            comps.append(comp)
        return comps

    lut = np.zeros(256, dtype=np.uint8)
    for bits in range(256):
        fg = {i for i in range(8) if bits >> i & 1}
        bg = set(range(8)) - fg
        fg_comps = components(fg, adj8)
        bg_comps = [c for c in components(bg, adj4) if any(s % 2 == 0 for s in c)]
        lut[bits] = 1 if (len(fg_comps) == 1 and len(bg_comps) == 1) else 0
    return lut


_SIMPLE_LUT = _build_simple_lut()


@njit(cache=True)
def _thin_engine(m: np.ndarray, simple_lut: np.ndarray) -> None:  # pragma: no cover
    h, w = m.shape
    npix = h * w
    work = np.empty(npix, dtype=np.int64)
    work2 = np.empty(npix, dtype=np.int64)
    cand = np.empty(npix, dtype=np.int64)
    adds = np.empty(npix, dtype=np.int64)
    deleted = np.empty(npix, dtype=np.int64)
    inw = np.zeros(npix, dtype=np.uint8)

    nw = 0
    for r in range(h):
        for c in range(w):
            if m[r, c]:
                p = r * w + c
                work[nw] = p
                nw += 1
                inw[p] = 1

    while nw > 0:
        ndel_pass = 0
        nd_all = 0
        for di in range(4):
            slot = _DIR_SLOTS[di]
            sdr = _RING_DR[slot]
            sdc = _RING_DC[slot]
            # freeze this sub-iteration's border candidates
            nc = 0
            for k in range(nw):
                p = work[k]
                r = p // w
                c = p - r * w
                if m[r, c] == 0:
                    continue
                rr = r + sdr
                cc = c + sdc
                if 0 <= rr < h and 0 <= cc < w and m[rr, cc]:
                    continue
                cand[nc] = p
                nc += 1
            # delete sequentially, re-testing against the live mask
            nd_sub = 0
            for k in range(nc):
                p = cand[k]
                r = p // w
                c = p - r * w
                bits = 0
                cnt = 0
                for i in range(8):
                    rr = r + _RING_DR[i]
                    cc = c + _RING_DC[i]
                    if 0 <= rr < h and 0 <= cc < w and m[rr, cc]:
                        bits |= 1 << i
                        cnt += 1
                if cnt < 2:
                    continue  # endpoint or isolated pixel: protected
                if simple_lut[bits]:
                    m[r, c] = 0
                    deleted[nd_all] = p
                    nd_all += 1
                    ndel_pass += 1
                    nd_sub += 1
            if nd_sub == 0:
                continue
            # pixels next to fresh deletions may become border for the
            # remaining sub-iterations of this pass
            na = 0
            for k in range(nd_all - nd_sub, nd_all):
                p = deleted[k]
                r = p // w
                c = p - r * w
                for i in range(8):
                    rr = r + _RING_DR[i]
                    cc = c + _RING_DC[i]
                    if 0 <= rr < h and 0 <= cc < w and m[rr, cc]:
                        q = rr * w + cc
                        if inw[q] == 0:
                            inw[q] = 1
                            adds[na] = q
                            na += 1
            if na:
                sub = np.sort(adds[:na])
                i = 0
                j = 0
                t = 0
                while i < nw and j < na:
                    if work[i] < sub[j]:
                        work2[t] = work[i]
                        i += 1
                    else:
                        work2[t] = sub[j]
                        j += 1
                    t += 1
                while i < nw:
                    work2[t] = work[i]
                    i += 1
                    t += 1
                while j < na:
                    work2[t] = sub[j]
                    j += 1
                    t += 1
                work, work2 = work2, work
                nw = t
        if ndel_pass == 0:
            break
        # next pass only needs pixels whose neighbourhood changed
        for k in range(nw):
            inw[work[k]] = 0
        nw = 0
        for k in range(nd_all):
            p = deleted[k]
            r = p // w
            c = p - r * w
            for i in range(8):
                rr = r + _RING_DR[i]
                cc = c + _RING_DC[i]
                if 0 <= rr < h and 0 <= cc < w and m[rr, cc]:
                    q = rr * w + cc
                    if inw[q] == 0:
                        inw[q] = 1
                        work[nw] = q
                        nw += 1
        if nw:
            work[:nw].sort()


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Thin a boolean raster to a 1-pixel-wide skeleton.

    Returns a new boolean array; the skeleton is a subset of the input,
    preserves the number of 8-connected components, and is idempotent.
    """
    m = np.asarray(mask)
    if m.ndim != 2:
        raise InputError(f"mask must be 2-D, got shape {m.shape}")
    out = np.ascontiguousarray(m, dtype=np.uint8).copy()
    if out.any():
        _thin_engine(out, _SIMPLE_LUT)
    return out.astype(bool)


def pixel_degrees(skel: np.ndarray) -> np.ndarray:
    """8-neighbour count for each skeleton pixel, 0 off the skeleton."""
    s = np.asarray(skel)
    if s.ndim != 2:
        raise InputError(f"skeleton must be 2-D, got shape {s.shape}")
    s = s.astype(bool)
    p = np.pad(s.astype(np.uint8), 1)
    acc = np.zeros(s.shape, dtype=np.uint8)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            acc += p[1 + dr:1 + dr + s.shape[0], 1 + dc:1 + dc + s.shape[1]]
    acc[~s] = 0
    return acc


# gray levels for the debug dump, keyed by pixel degree
_DEGREE_GRAYS = {0: 40, 1: 80, 2: 160}
_JUNCTION_GRAY = 255


def write_skeleton_pgm(path, skel: np.ndarray) -> None:
    """Debug rendering: binary P5 PGM, background 0, skeleton pixels shaded
    by degree (isolated 40, endpoint 80, line 160, junction 255)."""
    s = np.asarray(skel).astype(bool)
    deg = pixel_degrees(s)
    img = np.zeros(s.shape, dtype=np.uint8)
    for d, g in _DEGREE_GRAYS.items():
        img[s & (deg == d)] = g
    img[s & (deg >= 3)] = _JUNCTION_GRAY
    with open(path, "wb") as fh:
        fh.write(f"P5\n{s.shape[1]} {s.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def warmup() -> None:
    """Force JIT compilation so first real use is not charged for it."""
    skeletonize(np.ones((8, 8), dtype=bool))
