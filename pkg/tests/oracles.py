"""Independent reference implementations used to cross-check the package.

Everything in here is deliberately written the slow, obvious way and shares
no code with skelnav: connectivity is computed from coordinates with set
unions instead of lookup tables, shortest paths use a plain heapq Dijkstra
instead of skimage, and the time-warp oracle enumerates every monotone
alignment instead of running the DP. Tests compare the package against
these, so keep them dumb.
"""

import heapq
import itertools
import math

import numpy as np

# Ring of 8 neighbours, clockwise from north. "North" is row-1 to match
# image coordinates. Orthogonal neighbours land on even indices.
RING = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
SUBITERATION_ORDER = [0, 4, 2, 6]  # N, S, E, W border passes


def _components(indices, adjacent):
    """Connected components of a set of ring indices under a predicate."""
    remaining = set(indices)
    count = 0
    while remaining:
        count += 1
        stack = [remaining.pop()]
        while stack:
            p = stack.pop()
            linked = [q for q in remaining if adjacent(RING[p], RING[q])]
            for q in linked:
                remaining.discard(q)
            stack.extend(linked)
    return count


def _components_with_members(indices, adjacent):
    remaining = set(indices)
    comps = []
    while remaining:
        comp = set()
        stack = [remaining.pop()]
        while stack:
            p = stack.pop()
            comp.add(p)
            linked = [q for q in remaining if adjacent(RING[p], RING[q])]
            for q in linked:
                remaining.discard(q)
            stack.extend(linked)
        comps.append(comp)
    return comps


def _adj8(a, b):
    return a != b and abs(a[0] - b[0]) <= 1 and abs(a[1] - b[1]) <= 1


def _adj4(a, b):
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def ring_is_simple(ring):
    """Deletion-safety check for one 8-neighbourhood pattern.

    ``ring`` is a sequence of 8 truth values in RING order. The centre
    pixel may be deleted when its foreground neighbours form exactly one
    8-connected blob and its background neighbours form exactly one
    4-connected blob that touches an orthogonal slot.
    """
    fg = [i for i in range(8) if ring[i]]
    bg = [i for i in range(8) if not ring[i]]
    if _components(fg, _adj8) != 1:
        return False
    bg_comps = _components_with_members(bg, _adj4)
    touching = [c for c in bg_comps if any(i % 2 == 0 for i in c)]
    return len(touching) == 1


def thin_reference(mask):
    """Full-rescan directional thinning; the ground truth for skeletonize.

    Every pass runs the four border sub-iterations (N, S, E, W). Each
    sub-iteration freezes its candidate list up front, then deletes
    candidates one at a time in row-major order, re-reading the live grid
    for the safety check. Pixels with fewer than two foreground neighbours
    are endpoints and never deleted.
    """
    m = np.asarray(mask, dtype=bool).copy()
    h, w = m.shape
    changed = True
    while changed:
        changed = False
        for d in SUBITERATION_ORDER:
            dr, dc = RING[d]
            frozen = m.copy()
            candidates = []
            for r in range(h):
                for c in range(w):
                    if not frozen[r, c]:
                        continue
                    nr, nc = r + dr, c + dc
                    outside = not (0 <= nr < h and 0 <= nc < w)
                    if outside or not frozen[nr, nc]:
                        candidates.append((r, c))
            for r, c in candidates:
                ring = []
                for rr, cc in RING:
                    nr, nc = r + rr, c + cc
                    ring.append(bool(0 <= nr < h and 0 <= nc < w and m[nr, nc]))
                if sum(ring) < 2:
                    continue
                if ring_is_simple(ring):
                    m[r, c] = False
                    changed = True
    return m


def count_components(mask, connectivity=8):
    """Label-free component count by BFS flood fill."""
    m = np.asarray(mask, dtype=bool)
    seen = np.zeros_like(m)
    if connectivity == 8:
        moves = [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    else:
        moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    count = 0
    for r, c in zip(*np.nonzero(m)):
        if seen[r, c]:
            continue
        count += 1
        stack = [(r, c)]
        seen[r, c] = True
        while stack:
            cr, cc = stack.pop()
            for dr, dc in moves:
                nr, nc = cr + dr, cc + dc
                if (0 <= nr < m.shape[0] and 0 <= nc < m.shape[1]
                        and m[nr, nc] and not seen[nr, nc]):
                    seen[nr, nc] = True
                    stack.append((nr, nc))
    return count


def dijkstra_cells(free, src, dst):
    """Shortest 8-connected path between two cells, in cell units.

    Diagonal moves cost sqrt(2). Returns inf when disconnected or either
    endpoint blocked.
    """
    free = np.asarray(free, dtype=bool)
    if not free[src] or not free[dst]:
        return math.inf
    h, w = free.shape
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, cell = heapq.heappop(heap)
        if cell == dst:
            return d
        if d > dist.get(cell, math.inf):
            continue
        r, c = cell
        for dr, dc in itertools.product((-1, 0, 1), repeat=2):
            if dr == 0 and dc == 0:
                continue
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w and free[nr, nc]):
                continue
            nd = d + math.hypot(dr, dc)
            if nd < dist.get((nr, nc), math.inf):
                dist[(nr, nc)] = nd
                heapq.heappush(heap, (nd, (nr, nc)))
    return math.inf


def dtw_exhaustive(path, ref):
    """Minimum-cost monotone alignment by brute-force enumeration.

    Walks every alignment from (0, 0) to (n-1, m-1) using the three
    monotone moves, accumulating costs in path order so float rounding
    matches a DP that folds ``total + cost`` left to right.
    """
    n, m = len(path), len(ref)
    best = [math.inf]

    def cost(i, j):
        return math.hypot(path[i][0] - ref[j][0], path[i][1] - ref[j][1])

    def walk(i, j, total):
        total = total + cost(i, j)
        if total >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = total
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total)
        if i + 1 < n:
            walk(i + 1, j, total)
        if j + 1 < m:
            walk(i, j + 1, total)
    walk(0, 0, 0.0)
    return best[0]
