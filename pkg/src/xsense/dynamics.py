"""Exclusion dynamics on rate-weighted graphs.

Each edge e carries an independent Poisson clock of rate alpha(e); when it
rings the values at its endpoints are exchanged. We generate the superposed
process with a single clock of total rate R = sum alpha(e) and pick the edge
of each event from an alias table, which has the same law.

Orientation: ``transport`` returns the forward image pi_t(S) of a set of
particles, while ``evolve`` returns eta_t(x) = eta_0(pi_t^{-1}(x)). Both are
computed from the same event list, so evolve(1_S, path) = 1_{transport(S, path)}.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _jit
from .core import BooleanFunction, Configuration, SubsetMask
from .rng import as_generator

RATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DynamicsGraph:
    """Vertex count plus rate-weighted edges; positions are 0-based bits.

    Complete graphs keep their edge list implicit until asked for it.
    """

    n: int
    family: str
    params: dict = field(default_factory=dict)
    coords: np.ndarray | None = None
    _edges: np.ndarray | None = None
    _rates: np.ndarray | None = None
    uniform_rate: float | None = None

    @cached_property
    def edges(self) -> np.ndarray:
        if self._edges is not None:
            return self._edges
        u, v = np.triu_indices(self.n, k=1)
        return np.stack([u, v], axis=1).astype(np.int64)

    @cached_property
    def rates(self) -> np.ndarray:
        if self._rates is not None:
            return self._rates
        return np.full(self.edges.shape[0], self.uniform_rate)

    @property
    def implicit_complete(self) -> bool:
        return self._edges is None

    @property
    def edge_count(self) -> int:
        if self.implicit_complete:
            return self.n * (self.n - 1) // 2
        return int(self._edges.shape[0])

    @cached_property
    def total_rate(self) -> float:
        if self.uniform_rate is not None:
            return self.edge_count * self.uniform_rate
        return float(np.sum(self.rates))

    @cached_property
    def vertex_rates(self) -> np.ndarray:
        """Total clock rate touching each vertex."""
        if self.implicit_complete:
            return np.full(self.n, (self.n - 1) * self.uniform_rate)
        out = np.zeros(self.n)
        np.add.at(out, self._edges[:, 0], self._rates)
        np.add.at(out, self._edges[:, 1], self._rates)
        return out

    @cached_property
    def max_degree(self) -> int:
        if self.implicit_complete:
            return self.n - 1
        return int(np.bincount(self._edges.ravel(), minlength=self.n).max())

    @property
    def assumption_ok(self) -> bool:
        """Every vertex has total rate at most 1 (alpha <= 1/max degree for uniform rates)."""
        return bool(self.vertex_rates.max() <= 1.0 + RATE_TOL)

    @cached_property
    def _alias(self):
        if self.uniform_rate is not None:
            return None
        return _jit.build_alias(np.asarray(self.rates, dtype=np.float64))

    def sample_edges(self, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of ``count`` events, each edge chosen with probability alpha(e)/R."""
        if self.implicit_complete:
            u = rng.integers(0, self.n, count)
            v = rng.integers(0, self.n - 1, count)
            v += v >= u
            return u, v
        m = self._edges.shape[0]
        j = rng.integers(0, m, count)
        if self._alias is not None:
            prob, alias = self._alias
            keep = rng.random(count) < prob[j]
            j = np.where(keep, j, alias[j])
        e = self._edges[j]
        return e[:, 0], e[:, 1]

    def write_csv(self, path, header_rows=()) -> None:
        with open(path, "w", newline="") as fh:
            for row in header_rows:
                fh.write(f"# {row}\n")
            w = csv.writer(fh)
            w.writerow(["u", "v", "rate"])
            for (u, v), r in zip(self.edges, self.rates):
                w.writerow([int(u), int(v), repr(float(r))])


def _from_edges(n, edges, rate, family, params, coords=None):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        edges = np.sort(edges, axis=1)
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        if np.unique(edges, axis=0).shape[0] != edges.shape[0]:
            raise ValueError("duplicate edges")
    if np.isscalar(rate):
        if rate <= 0:
            raise ValueError("rates must be positive")
        return DynamicsGraph(n, family, params, coords, edges, np.full(len(edges), float(rate)),
                             uniform_rate=float(rate))
    rate = np.asarray(rate, dtype=np.float64)
    if rate.shape != (len(edges),) or np.any(rate <= 0):
        raise ValueError("need one positive rate per edge")
    return DynamicsGraph(n, family, params, coords, edges, rate)


def custom_graph(n, edges, rates) -> DynamicsGraph:
    """Arbitrary edge list with per-edge rates (or one shared rate)."""
    if n < 1:
        raise ValueError("graph needs at least one vertex")
    return _from_edges(n, edges, rates, "custom", {"n": n})


def _lattice_edges(side, d):
    n = side ** d
    idx = np.arange(n).reshape((side,) * d)
    edges = []
    for axis in range(d):
        a = np.take(idx, range(side - 1), axis=axis).ravel()
        b = np.take(idx, range(1, side), axis=axis).ravel()
        edges.append(np.stack([a, b], axis=1))
    return n, np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)


def medium_range_pairs(coords, radius):
    """All site pairs at Euclidean distance <= radius."""
    from scipy.spatial import cKDTree

    tree = cKDTree(coords)
    pairs = tree.query_pairs(radius * (1 + 1e-12), output_type="ndarray")
    return pairs.astype(np.int64)


def graph_build(family: str, **params) -> DynamicsGraph:
    """Named graph-and-rate families.

    * ``complete(n)``: all pairs, rate 1/n
    * ``path(n)``: nearest neighbours on 1..n, rate 1/2
    * ``grid2d(side)``: side x side box, rate 1/4
    * ``lattice(side, d)``: d-dimensional box, rate 1/(2d)
    * ``isolated_edges(m)``: edges {2k-1, 2k}, rate 1
    * ``medium_range(coords, n, alpha)``: pairs within distance n^alpha, rate n^(-2 alpha)
    """
    if family == "complete":
        n = int(params["n"])
        if n < 2:
            raise ValueError("complete graph needs n >= 2")
        return DynamicsGraph(n, "complete", {"n": n}, uniform_rate=1.0 / n)
    if family == "path":
        n = int(params["n"])
        if n < 2:
            raise ValueError("path needs n >= 2")
        n, edges = _lattice_edges(n, 1)
        return _from_edges(n, edges, 0.5, "path", {"n": n})
    if family in ("grid2d", "lattice"):
        side = int(params.get("side", params.get("n", 0)))
        d = 2 if family == "grid2d" else int(params.get("d", 2))
        if side < 2 or d < 1:
            raise ValueError("lattice needs side >= 2 and d >= 1")
        n, edges = _lattice_edges(side, d)
        return _from_edges(n, edges, 1.0 / (2 * d), family, {"side": side, "d": d})
    if family == "isolated_edges":
        m = int(params.get("m", params.get("edges", 0)))
        if m < 1:
            raise ValueError("isolated_edges needs m >= 1")
        edges = np.stack([np.arange(0, 2 * m, 2), np.arange(1, 2 * m, 2)], axis=1)
        return _from_edges(2 * m, edges, 1.0, "isolated_edges", {"m": m})
    if family == "medium_range":
        coords = params["coords"]
        coords = np.asarray(getattr(coords, "coords", coords), dtype=np.float64)
        scale = float(params["n"])
        alpha = float(params["alpha"])
        if scale <= 0 or not 0 < alpha:
            raise ValueError("medium_range needs n > 0 and alpha > 0")
        radius = scale ** alpha
        edges = medium_range_pairs(coords, radius)
        return _from_edges(coords.shape[0], edges, scale ** (-2 * alpha), "medium_range",
                           {"n": scale, "alpha": alpha, "radius": radius}, coords=coords)
    raise ValueError(f"unknown graph family {family!r}")


def graph_for_size(family: str, n: int) -> DynamicsGraph:
    """The member of a family with n vertices (isolated_edges: n/2 edges, grid2d: sqrt n side)."""
    if family == "isolated_edges":
        if n % 2:
            raise ValueError("isolated_edges needs an even vertex count")
        return graph_build(family, m=n // 2)
    if family == "grid2d":
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError("grid2d needs a square vertex count")
        return graph_build(family, side=side)
    return graph_build(family, n=n)


# -- permutation paths -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PermutationPath:
    """Time-ordered transpositions realising pi_t on [0, horizon]."""

    n: int
    horizon: float
    times: np.ndarray
    us: np.ndarray
    vs: np.ndarray

    def __len__(self):
        return int(self.times.shape[0])

    @cached_property
    def permutation(self) -> np.ndarray:
        """pi[x] = position at the horizon of the particle that started at x."""
        return _jit.compose_permutation(self.n, self.us, self.vs)

    def truncate(self, t: float) -> "PermutationPath":
        k = int(np.searchsorted(self.times, t, side="right"))
        return PermutationPath(self.n, t, self.times[:k], self.us[:k], self.vs[:k])

    def write_csv(self, path, header_rows=()) -> None:
        with open(path, "w", newline="") as fh:
            for row in header_rows:
                fh.write(f"# {row}\n")
            w = csv.writer(fh)
            w.writerow(["time", "u", "v"])
            for t, u, v in zip(self.times, self.us, self.vs):
                w.writerow([repr(float(t)), int(u), int(v)])


def sample_event_counts(g: DynamicsGraph, t: float, size: int, rng) -> np.ndarray:
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return rng.poisson(g.total_rate * t, size=size)


def sample_path(g: DynamicsGraph, t: float, rng=None) -> PermutationPath:
    """Superposed Poisson clocks on [0, t]."""
    rng = as_generator(rng)
    k = int(sample_event_counts(g, t, 1, rng)[0])
    times = np.sort(rng.random(k)) * t
    us, vs = g.sample_edges(k, rng)
    return PermutationPath(g.n, float(t), times, us.astype(np.int64), vs.astype(np.int64))


def _mask_arg(obj, n, kind):
    if obj.n != n:
        raise ValueError(f"{kind} width {obj.n} does not match path width {n}")


def evolve(omega: Configuration, path: PermutationPath) -> Configuration:
    """eta_t from eta_0 = omega by swapping values along the path."""
    _mask_arg(omega, path.n, "configuration")
    state = omega.to_array()[None, :].copy()
    _jit.apply_swaps(state, np.array([0, len(path)]), path.us, path.vs)
    return Configuration.from_array(state[0])


def transport(S: SubsetMask, path: PermutationPath) -> SubsetMask:
    """Forward image pi_t(S)."""
    _mask_arg(S, path.n, "subset")
    pi = path.permutation
    return SubsetMask.from_positions(path.n, (pi[x] for x in S.positions()))


def evolve_batch(states: np.ndarray, g: DynamicsGraph, t: float, rng) -> np.ndarray:
    """Run independent exclusion paths of length t on each row (in place; also returned)."""
    states = np.ascontiguousarray(states, dtype=np.uint8)
    counts = sample_event_counts(g, t, states.shape[0], rng)
    offsets = np.zeros(states.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    us, vs = g.sample_edges(int(offsets[-1]), rng)
    _jit.apply_swaps(states, offsets, us.astype(np.int64), vs.astype(np.int64))
    return states


def uniform_states(n: int, size: int, rng) -> np.ndarray:
    return rng.integers(0, 2, size=(size, n), dtype=np.uint8)


# -- independent resampling --------------------------------------------------

def snps(omega: Configuration, eps: float, rng=None) -> Configuration:
    """Resample each bit independently with probability eps (fair coin)."""
    rng = as_generator(rng)
    out = snps_batch(omega.to_array()[None, :], eps, rng)
    return Configuration.from_array(out[0])


def snps_batch(states: np.ndarray, eps: float, rng) -> np.ndarray:
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    resample = rng.random(states.shape) < eps
    fresh = rng.integers(0, 2, size=states.shape, dtype=np.uint8)
    return np.where(resample, fresh, states).astype(np.uint8)


def snps_trajectory_batch(states: np.ndarray, t: float, rng) -> np.ndarray:
    """State at time t of the rate-1 refresh process, simulated clock by clock.

    Each bit carries a rate-1 Poisson clock; at every ring the bit takes a fresh
    fair value. Only the last ring before t matters, but all rings are drawn.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    rings = rng.poisson(t, size=states.shape)
    total = int(rings.sum())
    values = rng.integers(0, 2, size=total, dtype=np.uint8)
    out = states.copy().astype(np.uint8)
    flat = out.ravel()
    ends = np.cumsum(rings.ravel())
    hit = rings.ravel() > 0
    flat[hit] = values[ends[hit] - 1]
    return out


# -- switch counting ---------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryStats:
    """Sign changes of f along one path from a uniform start.

    ``switches`` counts every sign change; ``down_switches`` only +1 -> -1.
    ``times``/``values`` record the sign after each change (initial value first).
    """

    switches: int
    down_switches: int
    times: np.ndarray
    values: np.ndarray


def _stats_from_values(initial, times, values):
    seq = np.concatenate([[initial], values]).astype(np.int8)
    change = np.flatnonzero(seq[1:] != seq[:-1])
    down = int(np.count_nonzero((seq[change] == 1) & (seq[change + 1] == -1)))
    return TrajectoryStats(int(change.size), down,
                           np.concatenate([[0.0], times[change]]),
                           np.concatenate([[initial], seq[change + 1]]).astype(np.int8))


def count_switches(f: BooleanFunction, g: DynamicsGraph, horizon: float, rng=None,
                   start: Configuration | None = None) -> TrajectoryStats:
    """Evaluate f after every event of one path and count its sign changes."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if f.n != g.n:
        raise ValueError(f"function width {f.n} != graph size {g.n}")
    rng = as_generator(rng)
    state = (uniform_states(g.n, 1, rng)[0] if start is None else start.to_array())
    path = sample_path(g, horizon, rng)
    if f.tabulated:
        mask = int(Configuration.from_array(state).bits)
        idx, masks = _jit.mask_trajectory(mask, path.us, path.vs)
        values = f.values()[masks]
        initial = int(f.values()[mask])
    else:
        idx, snaps = _jit.effective_trajectory(state, path.us, path.vs)
        initial = int(f.evaluate(state)[0])
        values = f.evaluate(snaps) if len(idx) else np.empty(0, dtype=np.int8)
    return _stats_from_values(initial, path.times[idx], values)
