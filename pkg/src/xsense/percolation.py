"""Site percolation on the triangular lattice: patches, crossings, experiments.

The lattice is the square grid Z^2 with one extra diagonal per cell: site
(i, j) is adjacent to (i±1, j), (i, j±1), (i+1, j+1) and (i-1, j-1). The map
x = i - j/2, y = (sqrt 3 / 2) j sends it to the unit triangular lattice, and
those embedded coordinates are what ``coords`` holds and what distances refer to.

Two patch shapes are provided:

* ``rhombus(n)``: 0 <= i, j < n. This is a Hex board, so an open left-right
  crossing occurs iff no closed top-bottom crossing does; with p = 1/2 the
  crossing probability is exactly 1/2.
* ``rectangle(a, b, n)``: lattice sites with 0 <= x <= a n (+1/2 on odd rows)
  and 0 <= y <= b n, each row holding floor(a n) + 1 sites.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _jit
from .core import TABULATION_CAP, BooleanFunction, CapError, Configuration, SubsetMask
from .dynamics import (DynamicsGraph, PermutationPath, evolve_batch, graph_build,
                       sample_path, snps_batch, uniform_states)
from .estimators import EstimatorResult, correlation_from_pairs, run_blocks
from .rng import as_generator, stream

TRIANGULAR_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1))
SQRT3_2 = math.sqrt(3) / 2
SITE_BUDGET = 200_000
EDGE_BUDGET = 20_000_000
TABULATE_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class LatticePatch:
    """Sites of a finite piece of the triangular lattice with CSR adjacency."""

    ij: np.ndarray        # (N, 2) integer lattice coordinates
    nbr_ptr: np.ndarray
    nbr_idx: np.ndarray
    is_left: np.ndarray
    is_right: np.ndarray
    shape: str
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.ij.shape[0])

    @property
    def coords(self) -> np.ndarray:
        i, j = self.ij[:, 0].astype(np.float64), self.ij[:, 1].astype(np.float64)
        return np.stack([i - j / 2, SQRT3_2 * j], axis=1)

    def degree(self) -> np.ndarray:
        return np.diff(self.nbr_ptr)

    def neighbours(self, x: int) -> np.ndarray:
        return self.nbr_idx[self.nbr_ptr[x]:self.nbr_ptr[x + 1]]

    def left(self) -> np.ndarray:
        return np.flatnonzero(self.is_left)

    def right(self) -> np.ndarray:
        return np.flatnonzero(self.is_right)

    def site_index(self, i: int, j: int) -> int:
        hit = np.flatnonzero((self.ij[:, 0] == i) & (self.ij[:, 1] == j))
        if hit.size == 0:
            raise KeyError((i, j))
        return int(hit[0])

    def write_csv(self, path, header_rows=()) -> None:
        """Columns: site id, x, y (embedded coordinates)."""
        with open(path, "w", newline="") as fh:
            for row in header_rows:
                fh.write(f"# {row}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["site", "x", "y"])
            for s, (x, y) in enumerate(self.coords):
                w.writerow([s, repr(float(x)), repr(float(y))])


def _adjacency(ij):
    lookup = {(int(i), int(j)): s for s, (i, j) in enumerate(ij)}
    ptr = [0]
    idx = []
    for i, j in ij:
        for di, dj in TRIANGULAR_STEPS:
            y = lookup.get((int(i) + di, int(j) + dj))
            if y is not None:
                idx.append(y)
        ptr.append(len(idx))
    return np.array(ptr, dtype=np.int64), np.array(idx, dtype=np.int64)


def _patch(ij, shape, params):
    ij = np.asarray(ij, dtype=np.int64).reshape(-1, 2)
    if ij.shape[0] == 0:
        raise ValueError("empty patch")
    if ij.shape[0] > SITE_BUDGET:
        raise CapError(f"{ij.shape[0]} sites exceeds the site budget of {SITE_BUDGET}")
    ptr, idx = _adjacency(ij)
    rows = ij[:, 1]
    is_left = np.zeros(ij.shape[0], dtype=np.bool_)
    is_right = np.zeros(ij.shape[0], dtype=np.bool_)
    for j in np.unique(rows):
        in_row = np.flatnonzero(rows == j)
        xs = ij[in_row, 0]
        is_left[in_row[xs == xs.min()]] = True
        is_right[in_row[xs == xs.max()]] = True
    return LatticePatch(ij, ptr, idx, is_left, is_right, shape, params)


def rhombus(n: int, pad: int = 0) -> LatticePatch:
    """n x n Hex board, optionally surrounded by ``pad`` extra layers.

    With padding, left/right refer to the central board (columns 0 and n-1
    restricted to rows 0..n-1); use :func:`window_sites` to get the board.
    """
    if n < 1 or pad < 0:
        raise ValueError("rhombus needs n >= 1 and pad >= 0")
    r = np.arange(-pad, n + pad)
    jj, ii = np.meshgrid(r, r, indexing="ij")
    ij = np.stack([ii.ravel(), jj.ravel()], axis=1)
    p = _patch(ij, "rhombus", {"n": n, "pad": pad})
    if pad:
        inside = (ij[:, 1] >= 0) & (ij[:, 1] < n)
        is_left = inside & (ij[:, 0] == 0)
        is_right = inside & (ij[:, 0] == n - 1)
        p = LatticePatch(p.ij, p.nbr_ptr, p.nbr_idx, is_left, is_right, p.shape, p.params)
    return p


def patch_build(a: float, b: float, n: int) -> LatticePatch:
    """Sites of the triangular lattice in [0, a n] x [0, b n] (rows may overhang by 1/2)."""
    if a <= 0 or b <= 0 or n < 1:
        raise ValueError("patch needs a, b > 0 and n >= 1")
    width = int(math.floor(a * n)) + 1
    rows = int(math.floor(b * n / SQRT3_2 + 1e-12)) + 1
    ij = [((j + 1) // 2 + k, j) for j in range(rows) for k in range(width)]
    return _patch(ij, "rectangle", {"a": a, "b": b, "n": n})


def patch_from_params(shape: str = "rhombus", n: int = 4, a: float = 1.0, b: float = 1.0,
                      pad: int = 0) -> LatticePatch:
    if shape == "rhombus":
        return rhombus(int(n), int(pad))
    if shape == "rectangle":
        return patch_build(float(a), float(b), int(n))
    raise ValueError(f"unknown patch shape {shape!r}")


def window_sites(patch: LatticePatch, n: int) -> np.ndarray:
    """Indices of the central n x n board of a (padded) rhombus, in board order."""
    ij = patch.ij
    inside = (ij[:, 0] >= 0) & (ij[:, 0] < n) & (ij[:, 1] >= 0) & (ij[:, 1] < n)
    idx = np.flatnonzero(inside)
    order = np.lexsort((ij[idx, 0], ij[idx, 1]))
    return idx[order]


# -- crossing ---------------------------------------------------------------------

class CrossingPredicate:
    """Batch left-right crossing test; picklable so it can go to worker processes."""

    def __init__(self, patch: LatticePatch):
        self.nbr_ptr = patch.nbr_ptr
        self.nbr_idx = patch.nbr_idx
        self.is_left = patch.is_left
        self.is_right = patch.is_right

    def crosses(self, states: np.ndarray) -> np.ndarray:
        states = np.ascontiguousarray(states, dtype=np.uint8)
        return _jit.crossing_batch(states, self.nbr_ptr, self.nbr_idx, self.is_left, self.is_right)

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return np.where(self.crosses(states), 1, -1).astype(np.int8)


def crossing(patch: LatticePatch, omega: Configuration) -> bool:
    if omega.n != patch.size:
        raise ValueError(f"configuration width {omega.n} != {patch.size} sites")
    return bool(CrossingPredicate(patch).crosses(omega.to_array()[None, :])[0])


def _tabulate(n, predicate):
    table = np.empty(1 << n, dtype=np.int8)
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, 1 << n, TABULATE_CHUNK):
        masks = np.arange(start, min(start + TABULATE_CHUNK, 1 << n), dtype=np.int64)
        table[masks] = predicate(((masks[:, None] >> shifts) & 1).astype(np.uint8))
    return table


def crossing_function(patch: LatticePatch, tabulate_cap: int = TABULATION_CAP) -> BooleanFunction:
    """2 * 1{open left-right crossing} - 1; tabulated when the patch is small enough."""
    pred = CrossingPredicate(patch)
    params = {"shape": patch.shape, **patch.params}
    if patch.size <= tabulate_cap:
        return BooleanFunction(patch.size, _tabulate(patch.size, pred), name="crossing", params=params)
    return BooleanFunction(patch.size, predicate=pred, name="crossing", params=params)


class WindowPredicate:
    """Apply a predicate to a fixed subset of columns."""

    def __init__(self, inner, window):
        self.inner = inner
        self.window = np.asarray(window, dtype=np.int64)

    def __call__(self, states):
        return self.inner(np.ascontiguousarray(states[:, self.window]))


class CoarseMajorityPredicate:
    """Crossing of the coarse board whose sites are majorities of side x side subboxes."""

    def __init__(self, n: int, side: int):
        self.n, self.side, self.m = n, side, n // side
        self.coarse = CrossingPredicate(rhombus(self.m))
        i = np.arange(n)
        box = (i[:, None] // side) * self.m + (i[None, :] // side)  # [row j, col i]
        self.box = box.ravel()

    def boxes(self, states: np.ndarray) -> np.ndarray:
        counts = np.zeros((states.shape[0], self.m * self.m), dtype=np.int64)
        for b in range(self.m * self.m):
            counts[:, b] = states[:, self.box == b].sum(axis=1)
        return (2 * counts > self.side * self.side).astype(np.uint8)

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return self.coarse(self.boxes(np.asarray(states, dtype=np.uint8)))


def subbox_side(n: int, alpha: float | None = None, side: int | None = None) -> int:
    if side is None:
        if alpha is None:
            raise ValueError("give alpha or side")
        side = round(n ** alpha)
        if abs(n ** alpha - side) > 1e-9:
            raise ValueError(f"n^alpha = {n ** alpha} is not an integer")
    side = int(side)
    if side < 1 or side % 2 == 0:
        raise ValueError(f"subbox side must be an odd positive integer, got {side}")
    if n % side:
        raise ValueError(f"subbox side {side} does not divide n={n}")
    return side


def coarse_majority_crossing(n: int, alpha: float | None = None, side: int | None = None,
                             tabulate_cap: int = TABULATION_CAP) -> BooleanFunction:
    """Sites of the n x n board are grouped into odd-sided subboxes; a subbox is open when
    most of its sites are. Value: open left-right crossing of the board of subboxes.

    Site (i, j) of the fine board is bit j * n + i.
    """
    s = subbox_side(n, alpha, side)
    pred = CoarseMajorityPredicate(n, s)
    params = {"n": n, "side": s}
    if n * n <= tabulate_cap:
        return BooleanFunction(n * n, _tabulate(n * n, pred), name="coarse_majority_crossing",
                               params=params)
    return BooleanFunction(n * n, predicate=pred, name="coarse_majority_crossing", params=params)


# -- transport statistics ----------------------------------------------------------

def transfer_count(path: PermutationPath, E: SubsetMask, F: SubsetMask) -> int:
    """Number of particles starting in E that sit in F at the end of the path."""
    if E.mask & F.mask:
        raise ValueError("E and F must be disjoint")
    if E.n != path.n or F.n != path.n:
        raise ValueError("subset widths must match the path")
    if E.mask == 0 or F.mask == 0:
        return 0
    pi = path.permutation
    in_f = F.to_array().astype(bool)
    return int(np.count_nonzero(in_f[pi[E.to_array().astype(bool)]]))


def box_sites(coords: np.ndarray, x0: float, y0: float, side: float) -> np.ndarray:
    """Sites in the axis-parallel square [x0, x0+side) x [y0, y0+side)."""
    x, y = coords[:, 0], coords[:, 1]
    return np.flatnonzero((x >= x0) & (x < x0 + side) & (y >= y0) & (y < y0 + side))


def transfer_experiment(g: DynamicsGraph, E: np.ndarray, F: np.ndarray, t: float,
                        samples: int, seed: int) -> dict:
    """Mean transfer count from E to F, with c = mean * n^(2 alpha) / (|E| |F|)."""
    n = g.n
    e_mask = np.zeros(n, dtype=np.uint8)
    e_mask[E] = 1
    if np.any(e_mask[F]):
        raise ValueError("E and F must be disjoint")
    rng = stream(seed, "transfer")
    counts = np.empty(samples, dtype=np.int64)
    block = 64
    for s in range(0, samples, block):
        size = min(block, samples - s)
        states = evolve_batch(np.repeat(e_mask[None, :], size, axis=0), g, t, rng)
        counts[s:s + size] = states[:, F].sum(axis=1)
    mean = float(counts.mean())
    scale = g.params["n"] ** (2 * g.params["alpha"])
    return {"mean": mean, "stderr": float(counts.std(ddof=1) / math.sqrt(samples)),
            "E": int(len(E)), "F": int(len(F)), "fitted_c": mean * scale / (len(E) * len(F))}


def travel_check(g: DynamicsGraph, S: np.ndarray, center, R: float, t: float, samples: int,
                 seed: int) -> EstimatorResult:
    """Fraction of paths after which some particle of S lies outside the doubled square.

    Q is the axis-parallel square of side R centred at ``center``; 2Q has side 2R.
    """
    if g.coords is None:
        raise ValueError("travel_check needs a graph with site coordinates")
    cx, cy = center
    d = np.abs(g.coords - np.array([cx, cy]))
    in_q = (d[:, 0] <= R / 2) & (d[:, 1] <= R / 2)
    S = np.asarray(S, dtype=np.int64)
    if not np.all(in_q[S]):
        raise ValueError("S must lie inside Q")
    outside = ~((d[:, 0] <= R) & (d[:, 1] <= R))
    start = np.zeros(g.n, dtype=np.uint8)
    start[S] = 1
    rng = stream(seed, "travel")
    escaped = np.empty(samples, dtype=np.float64)
    block = 64
    for s in range(0, samples, block):
        size = min(block, samples - s)
        states = evolve_batch(np.repeat(start[None, :], size, axis=0), g, t, rng)
        escaped[s:s + size] = np.any(states[:, outside] == 1, axis=1)
    p = float(escaped.mean())
    se = float(escaped.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return EstimatorResult(p, se, samples, seed, extra={"R": R, "t": t})


# -- experiments ------------------------------------------------------------------

def crossing_probability(patch: LatticePatch, samples: int, seed: int, p: float = 0.5,
                         block: int = 4096) -> EstimatorResult:
    pred = CrossingPredicate(patch)

    def one(size, rng):
        return (pred.crosses((rng.random((size, patch.size)) < p).astype(np.uint8)),)

    hits = np.concatenate([one(size, stream(seed, "crossing", j))[0]
                           for j, size in enumerate(_sizes(samples, block))]).astype(np.float64)
    return EstimatorResult(float(hits.mean()), float(hits.std(ddof=1) / math.sqrt(samples)),
                           samples, seed)


def _sizes(samples, block):
    full, rest = divmod(samples, block)
    return [block] * full + ([rest] if rest else [])


def _window_pairs(pred, g, window, t, size, rng):
    eta0 = uniform_states(g.n, size, rng)
    a = pred(np.ascontiguousarray(eta0[:, window]))
    eta = evolve_batch(eta0, g, t, rng)
    return a, pred(np.ascontiguousarray(eta[:, window]))


def _window_snps_pairs(pred, m, eps, size, rng):
    omega = uniform_states(m, size, rng)
    return pred(omega), pred(snps_batch(omega, eps, rng))


def windowed_correlation(pred, g: DynamicsGraph, window: np.ndarray, t: float, samples: int,
                         seed: int, key=(), workers: int = 1, block: int = 256) -> EstimatorResult:
    """E[h(eta_0|W) h(eta_t|W)] - E[h]^2 for dynamics on g observed through the window W."""
    out = run_blocks(_window_pairs, (pred, g, window, t), samples, seed, key, workers, block)
    a, b = (np.concatenate(x) for x in zip(*out))
    return correlation_from_pairs(a, b, seed)


def complete_graph_crossing(n_list, t: float, samples: int, seed: int,
                            workers: int = 1) -> list[dict]:
    """Crossing correlation of the n x n board under complete-graph exclusion."""
    rows = []
    for c, n in enumerate(n_list):
        patch = rhombus(n)
        g = graph_build("complete", n=patch.size)
        res = windowed_correlation(CrossingPredicate(patch), g, np.arange(patch.size), t,
                                   samples, seed, ("cg-crossing", c), workers)
        rows.append({"n": n, "sites": patch.size, "t": t, **res.record()})
    return rows


def crossing_switches(n: int, t: float, samples: int, seed: int,
                      graph: str = "complete") -> EstimatorResult:
    """Mean number of sign changes of the crossing of the n x n board during [0, t]."""
    patch = rhombus(n)
    if graph != "complete":
        raise ValueError("only complete-graph switch counts are provided")
    g = graph_build("complete", n=patch.size)
    window = np.arange(patch.size)
    counts = np.empty(samples, dtype=np.float64)
    for s in range(samples):
        rng = stream(seed, "switches", n, s)
        state = uniform_states(patch.size, 1, rng)[0]
        path = sample_path(g, t, rng)
        init, _, vals = _jit.crossing_trajectory_switches(
            state, path.us, path.vs, patch.nbr_ptr, patch.nbr_idx, patch.is_left,
            patch.is_right, window)
        seq = np.concatenate([[init], vals])
        counts[s] = np.count_nonzero(seq[1:] != seq[:-1])
    return EstimatorResult(float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(samples)),
                           samples, seed, extra={"n": n, "t": t})


def medium_range_setup(n: int, alpha: float, pad_factor: float = 2.0):
    """Padded board, the medium-range graph on it, and the central window."""
    pad = int(math.ceil(pad_factor * n ** alpha))
    patch = rhombus(n, pad)
    radius = n ** alpha
    expected_edges = patch.size * math.pi * radius ** 2 / (2 * SQRT3_2)
    if expected_edges > EDGE_BUDGET:
        raise CapError(f"about {int(expected_edges)} edges exceeds the edge budget of {EDGE_BUDGET}")
    g = graph_build("medium_range", coords=patch.coords, n=n, alpha=alpha)
    window = window_sites(patch, n)
    return patch, g, window


def medium_range_experiment(n_list, alpha: float, t: float, samples: int, seed: int,
                            pad_factor: float = 2.0, workers: int = 1,
                            baseline: bool = True) -> list[dict]:
    """Crossing correlation under medium-range exclusion on a padded board.

    ``baseline`` adds the same quantity under i.i.d. resampling with eps = 1 - e^{-t}.
    """
    n_list = list(n_list)
    if not n_list:
        raise ValueError("need at least one board size")
    rows = []
    for c, n in enumerate(n_list):
        patch, g, window = medium_range_setup(n, alpha, pad_factor)
        pred = CrossingPredicate(rhombus(n))
        res = windowed_correlation(pred, g, window, t, samples, seed, ("medium", c), workers,
                                   block=32)
        row = {"n": n, "alpha": alpha, "t": t, "sites": patch.size, "edges": g.edge_count,
               **res.record()}
        if baseline:
            eps = -math.expm1(-t)
            out = run_blocks(_window_snps_pairs, (pred, n * n, eps), samples, seed,
                             ("medium-iid", c), workers, 1024)
            a, b = (np.concatenate(x) for x in zip(*out))
            iid = correlation_from_pairs(a, b, seed)
            row["iid_estimate"] = iid.estimate
            row["iid_stderr"] = iid.stderr
        rows.append(row)
    return rows


def subbox_flip_probability(n: int, alpha: float | None, t: float, samples: int, seed: int,
                            side: int | None = None) -> EstimatorResult:
    """P(majority of the central subbox changes) under nearest-neighbour exclusion on n x n."""
    s = subbox_side(n, alpha, side)
    g = graph_build("grid2d", side=n)
    m = n // s
    b0 = (m // 2) * s
    idx = np.arange(n * n).reshape(n, n)  # row-major: row index is the first lattice axis
    box = idx[b0:b0 + s, b0:b0 + s].ravel()
    rng = stream(seed, "subbox", n)
    flips = np.empty(samples, dtype=np.float64)
    block = 512
    for start in range(0, samples, block):
        size = min(block, samples - start)
        eta0 = uniform_states(n * n, size, rng)
        before = 2 * eta0[:, box].sum(axis=1) > s * s
        eta = evolve_batch(eta0, g, t, rng)
        after = 2 * eta[:, box].sum(axis=1) > s * s
        flips[start:start + size] = before != after
    p = float(flips.mean())
    return EstimatorResult(p, float(flips.std(ddof=1) / math.sqrt(samples)), samples, seed,
                           extra={"n": n, "side": s, "t": t})
