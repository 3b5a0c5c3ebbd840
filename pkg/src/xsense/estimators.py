"""Monte Carlo estimators of noise and exclusion correlations.

Replicas are generated in fixed-size blocks; block ``j`` of a run with master
seed ``s`` and key ``k`` always draws from ``stream(s, *k, j)``. Results are
merged in block order, so they do not depend on how many workers ran the blocks.

Correlation estimates use a split-sample product for E[f]^2: the mean of f is
estimated separately on the first and the second half of the replicas, and
their product is unbiased. The plug-in square is reported as ``naive``.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import BooleanFunction, zoo_build
from .dynamics import (DynamicsGraph, evolve_batch, graph_for_size, snps_batch,
                       snps_trajectory_batch, uniform_states)
from .rng import stream

BLOCK_SIZE = 4096
DEFAULT_SAMPLES = 100_000


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    stderr: float
    samples: int
    seed: int
    wall_time: float = 0.0
    naive: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def radius(self) -> float:
        """Reported confidence radius (3 standard errors)."""
        return 3.0 * self.stderr

    def agrees_with(self, value: float, sigmas: float = 3.0) -> bool:
        return abs(self.estimate - value) <= sigmas * self.stderr

    def record(self) -> dict:
        """Deterministic fields only (wall time excluded)."""
        out = {"estimate": self.estimate, "stderr": self.stderr, "samples": self.samples,
               "seed": self.seed}
        if self.naive is not None:
            out["naive"] = self.naive
        out.update(self.extra)
        return out


def _block_sizes(samples, block):
    full, rest = divmod(samples, block)
    return [block] * full + ([rest] if rest else [])


def run_blocks(replica_fn, args, samples, seed, key=(), workers=1, block=BLOCK_SIZE):
    """Run ``replica_fn(*args, size, rng)`` over blocks; outputs in block order."""
    sizes = _block_sizes(samples, block)
    jobs = [(replica_fn, args, size, seed, tuple(key) + (j,)) for j, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(job) for job in jobs]


def _run_job(job):
    replica_fn, args, size, seed, key = job
    return replica_fn(*args, size, stream(seed, *key))


def _concat(outputs):
    return tuple(np.concatenate(parts) for parts in zip(*outputs))


# -- replica kernels (module level so they pickle) --------------------------

def exclusion_pairs(f, g, t, size, rng):
    eta0 = uniform_states(g.n, size, rng)
    a = f.evaluate(eta0)
    b = f.evaluate(evolve_batch(eta0, g, t, rng))
    return a, b


def noise_pairs(f, eps, size, rng):
    omega = uniform_states(f.n, size, rng)
    return f.evaluate(omega), f.evaluate(snps_batch(omega, eps, rng))


def snps_trajectory_pairs(f, t, size, rng):
    omega = uniform_states(f.n, size, rng)
    return f.evaluate(omega), f.evaluate(snps_trajectory_batch(omega, t, rng))


def correlation_from_pairs(a, b, seed=0, wall_time=0.0, **extra) -> EstimatorResult:
    """E[f(X) f(Y)] - E[f]^2 from paired ±1 samples with equal marginals."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.size
    if n < 2:
        raise ValueError("need at least two samples")
    prod = a * b
    half = n // 2
    m1 = 0.5 * (a[:half].mean() + b[:half].mean())
    m2 = 0.5 * (a[half:].mean() + b[half:].mean())
    m = 0.5 * (a.mean() + b.mean())
    z = prod - m * (a + b)
    return EstimatorResult(float(prod.mean() - m1 * m2), float(z.std(ddof=1) / math.sqrt(n)),
                           n, seed, wall_time, float(prod.mean() - m * m), dict(extra))


def _check_samples(samples):
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")


def estimate_exclusion_correlation(f: BooleanFunction, g: DynamicsGraph, t: float,
                                   samples: int = DEFAULT_SAMPLES, seed: int = 0,
                                   workers: int = 1, key=()) -> EstimatorResult:
    """N(f, t) = E[f(eta_0) f(eta_t)] - E[f]^2 over independent uniform starts and paths."""
    _check_samples(samples)
    if f.n != g.n:
        raise ValueError(f"function width {f.n} != graph size {g.n}")
    if t < 0:
        raise ValueError("time must be nonnegative")
    start = time.perf_counter()
    a, b = _concat(run_blocks(exclusion_pairs, (f, g, t), samples, seed, key, workers))
    return correlation_from_pairs(a, b, seed, time.perf_counter() - start)


def estimate_noise_correlation(f: BooleanFunction, eps: float, samples: int = DEFAULT_SAMPLES,
                               seed: int = 0, workers: int = 1, key=()) -> EstimatorResult:
    """E[f(omega) f(omega^eps)] - E[f]^2."""
    _check_samples(samples)
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    start = time.perf_counter()
    a, b = _concat(run_blocks(noise_pairs, (f, eps), samples, seed, key, workers))
    return correlation_from_pairs(a, b, seed, time.perf_counter() - start)


def estimate_snps_correlation(f: BooleanFunction, t: float, samples: int = DEFAULT_SAMPLES,
                              seed: int = 0, workers: int = 1, key=()) -> EstimatorResult:
    """Same quantity from the clock-by-clock refresh process run for time t."""
    _check_samples(samples)
    start = time.perf_counter()
    a, b = _concat(run_blocks(snps_trajectory_pairs, (f, t), samples, seed, key, workers))
    return correlation_from_pairs(a, b, seed, time.perf_counter() - start)


def estimate_flip_probability(f: BooleanFunction, g: DynamicsGraph, t: float,
                              samples: int = DEFAULT_SAMPLES, seed: int = 0,
                              workers: int = 1, key=()) -> EstimatorResult:
    """P(f(eta_0) != f(eta_t)); ``extra`` holds the violation count and E[f f_t]."""
    _check_samples(samples)
    if f.n != g.n:
        raise ValueError(f"function width {f.n} != graph size {g.n}")
    start = time.perf_counter()
    a, b = _concat(run_blocks(exclusion_pairs, (f, g, t), samples, seed, key, workers))
    differ = (a != b).astype(np.float64)
    p = float(differ.mean())
    product = float(np.mean(a.astype(np.float64) * b))
    if abs(product - (1.0 - 2.0 * p)) > 1e-12:
        raise AssertionError("E[f f_t] = 1 - 2 P(f != f_t) violated")
    se = float(differ.std(ddof=1) / math.sqrt(samples))
    return EstimatorResult(p, se, samples, seed, time.perf_counter() - start,
                           extra={"flips": int(differ.sum()), "product_mean": product})


def character_pairs(g, s_mask, s2_mask, t, size, rng):
    eta0 = uniform_states(g.n, size, rng)
    a = _character(eta0, s_mask)
    return (a * _character(evolve_batch(eta0, g, t, rng), s2_mask),)


def _character(states, positions):
    return 1 - 2 * (states[:, positions].sum(axis=1, dtype=np.int64) & 1)


def estimate_character_correlation(g: DynamicsGraph, S, S2, t: float,
                                   samples: int = DEFAULT_SAMPLES, seed: int = 0,
                                   workers: int = 1, key=()) -> EstimatorResult:
    """E[chi_S(eta_0) chi_S'(eta_t)], which equals the transport probability P_t(S, S')."""
    _check_samples(samples)
    if S.n != g.n or S2.n != g.n:
        raise ValueError("subset widths must match the graph")
    s, s2 = np.array(S.positions(), dtype=np.int64), np.array(S2.positions(), dtype=np.int64)
    (prod,) = _concat(run_blocks(character_pairs, (g, s, s2, t), samples, seed, key, workers))
    prod = prod.astype(np.float64)
    return EstimatorResult(float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(samples)),
                           samples, seed)


@dataclass(frozen=True)
class ConditionalProfile:
    """Spread of E[f(eta_t) | eta_0] over ``outer`` starting points.

    ``variance`` is the nested-MC debiased variance of the conditional mean;
    by symmetry of the semigroup it estimates N(f, 2t).
    """

    mean: float
    raw_variance: float
    variance: float
    stderr: float
    quantiles: dict
    conditional_means: np.ndarray
    seed: int


def conditional_pairs(f, g, t, inner, size, rng):
    eta0 = uniform_states(g.n, size, rng)
    reps = np.repeat(eta0, inner, axis=0)
    vals = f.evaluate(evolve_batch(reps, g, t, rng)).astype(np.float64).reshape(size, inner)
    return vals.mean(axis=1), vals.var(axis=1, ddof=1)


def conditional_mean_profile(f: BooleanFunction, g: DynamicsGraph, t: float, outer: int,
                             inner: int, seed: int = 0, workers: int = 1, key=()) -> ConditionalProfile:
    if outer < 2 or inner < 2:
        raise ValueError("outer and inner must both be at least 2")
    block = max(1, BLOCK_SIZE // inner)
    means, within = _concat(run_blocks(conditional_pairs, (f, g, t, inner), outer, seed, key,
                                       workers, block=block))
    raw = float(means.var(ddof=1))
    debiased = raw - float(within.mean()) / inner
    centred = (means - means.mean()) ** 2 * outer / (outer - 1) - within / inner
    se = float(centred.std(ddof=1) / math.sqrt(outer))
    q = np.quantile(means, [0.05, 0.25, 0.5, 0.75, 0.95])
    quant = {f"q{int(p * 100):02d}": float(v) for p, v in zip([0.05, 0.25, 0.5, 0.75, 0.95], q)}
    return ConditionalProfile(float(means.mean()), raw, debiased, se, quant, means, seed)


# -- sweeps ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    family: str
    n: int
    graph: str
    kind: str  # "t" (exclusion) or "eps" (i.i.d. noise)
    value: float
    result: EstimatorResult

    def record(self) -> dict:
        return {"family": self.family, "n": self.n, "graph": self.graph, self.kind: self.value,
                **self.result.record()}


def sensitivity_sweep(family: str, n_list, graph_family: str | None, values, samples: int,
                      seed: int, kind: str = "t", params: dict | None = None,
                      workers: int = 1) -> list[SweepRow]:
    """Full factorial grid n x (t or eps). ``graph_family=None`` with kind="eps" uses i.i.d. noise.

    Cell ``c`` (row-major over n, then value) uses random key ``(c,)``.
    """
    n_list = list(n_list)
    values = list(values)
    if not n_list or not values:
        raise ValueError("sweep grids must be nonempty")
    if kind not in ("t", "eps"):
        raise ValueError("kind must be 't' or 'eps'")
    if kind == "t" and graph_family is None:
        raise ValueError("exclusion sweeps need a graph family")
    params = dict(params or {})
    rows = []
    cell = 0
    for n in n_list:
        f = zoo_build(family, n=n, **params)
        g = graph_for_size(graph_family, n) if kind == "t" else None
        for value in values:
            if kind == "t":
                res = estimate_exclusion_correlation(f, g, value, samples, seed, workers, key=(cell,))
            else:
                res = estimate_noise_correlation(f, value, samples, seed, workers, key=(cell,))
            rows.append(SweepRow(family, n, graph_family or "iid", kind, float(value), res))
            cell += 1
    return rows


def strictly_decreasing(results, sigmas: float = 3.0) -> bool:
    """Each estimate exceeds the next by more than ``sigmas`` combined standard errors."""
    for a, b in zip(results, results[1:]):
        gap = a.estimate - b.estimate
        if gap <= sigmas * math.hypot(a.stderr, b.stderr):
            return False
    return True
