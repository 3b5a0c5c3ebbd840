"""Couplings between i.i.d. resampling and complete-graph exclusion.

The triple coupling draws omega uniform, then

* ``N01_eps ~ Bin(#zeros, eps/2)`` and ``N10_eps ~ Bin(#ones, eps/2)`` for the
  resampled configuration omega^eps, with eps = 1 - e^{-t};
* ``N01_t`` (zeros of omega that are ones of eta_t) by running one genuine
  exclusion path on the complete graph from omega.

Positions are then placed by a single random ordering of the zeros and of the
ones of omega: omega^eps flips the first N01_eps zeros and the first N10_eps
ones; eta_t flips the first N01_t of each (it conserves the particle count, so
N10_t = N01_t). Sharing the ordering makes the disagreement sets nested, which
gives d(omega^eps, eta_t) = |N01_eps - N01_t| + |N10_eps - N01_t|. On the
complete graph the law of eta_t given omega is exchangeable within each class,
so the placed eta_t has the exact exclusion law.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import BooleanFunction, Configuration, SubsetMask, influences
from .dynamics import DynamicsGraph, evolve_batch, graph_build, uniform_states
from .estimators import run_blocks
from .rng import as_generator

DKW_CONFIDENCE = 0.99


def _require_complete(g: DynamicsGraph):
    if g.family != "complete" or not g.implicit_complete:
        raise ValueError("the triple coupling needs the complete graph (exchangeability)")


@dataclass(frozen=True)
class TripleSample:
    omega: Configuration
    omega_eps: Configuration
    eta_t: Configuration
    n01_eps: int
    n10_eps: int
    n01_t: int

    def hamming(self) -> int:
        return (self.omega_eps.bits ^ self.eta_t.bits).bit_count()

    def predicted_hamming(self) -> int:
        return abs(self.n01_eps - self.n01_t) + abs(self.n10_eps - self.n01_t)


@dataclass(frozen=True, eq=False)
class TripleBatch:
    """Row-aligned arrays of triple samples (uint8 states, int64 counters)."""

    omega: np.ndarray
    omega_eps: np.ndarray
    eta_t: np.ndarray
    n01_eps: np.ndarray
    n10_eps: np.ndarray
    n01_t: np.ndarray

    def __len__(self):
        return self.omega.shape[0]

    def hamming(self) -> np.ndarray:
        return np.count_nonzero(self.omega_eps != self.eta_t, axis=1)

    def predicted_hamming(self) -> np.ndarray:
        return np.abs(self.n01_eps - self.n01_t) + np.abs(self.n10_eps - self.n01_t)

    def violations(self) -> int:
        """Samples breaking the Hamming identity or particle conservation."""
        bad = self.hamming() != self.predicted_hamming()
        bad |= self.eta_t.sum(axis=1) != self.omega.sum(axis=1)
        return int(np.count_nonzero(bad))

    def row(self, i: int) -> TripleSample:
        c = Configuration.from_array
        return TripleSample(c(self.omega[i]), c(self.omega_eps[i]), c(self.eta_t[i]),
                            int(self.n01_eps[i]), int(self.n10_eps[i]), int(self.n01_t[i]))


def class_ranks(omega: np.ndarray, rng) -> np.ndarray:
    """Uniformly random rank of each site within its class (zeros or ones) of omega."""
    keys = rng.random(omega.shape) + omega
    order = np.argsort(keys, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(omega.shape[1])[None, :], axis=1)
    zeros = (omega.shape[1] - omega.sum(axis=1, dtype=np.int64))[:, None]
    return np.where(omega == 1, ranks - zeros, ranks)


def triple_batch(g: DynamicsGraph, t: float, size: int, rng) -> TripleBatch:
    _require_complete(g)
    if t <= 0:
        raise ValueError("the triple coupling needs t > 0")
    n = g.n
    eps = -math.expm1(-t)
    omega = uniform_states(n, size, rng)
    eta = evolve_batch(omega.copy(), g, t, rng)
    n01_t = np.count_nonzero((omega == 0) & (eta == 1), axis=1).astype(np.int64)
    ones = omega.sum(axis=1, dtype=np.int64)
    n01_eps = rng.binomial(n - ones, eps / 2)
    n10_eps = rng.binomial(ones, eps / 2)
    rank = class_ranks(omega, rng)
    is_one = omega == 1
    flip_t = rank < n01_t[:, None]
    flip_eps = rank < np.where(is_one, n10_eps[:, None], n01_eps[:, None])
    eta_t = (omega ^ flip_t).astype(np.uint8)
    omega_eps = (omega ^ flip_eps).astype(np.uint8)
    return TripleBatch(omega, omega_eps, eta_t, n01_eps, n10_eps, n01_t)


def triple_sample(n: int, t: float, g: DynamicsGraph, rng=None) -> TripleSample:
    if g.n != n:
        raise ValueError(f"graph has {g.n} vertices, expected {n}")
    return triple_batch(g, t, 1, as_generator(rng)).row(0)


def _triple_stats(g, t, size, rng):
    b = triple_batch(g, t, size, rng)
    dis = np.count_nonzero(b.omega != b.omega_eps, axis=1)
    return np.array([b.violations()]), dis


def hamming_audit(n: int, t: float, samples: int, seed: int, workers: int = 1) -> dict:
    """Run ``samples`` triple samples; count identity violations and the (omega, omega^eps) law."""
    g = graph_build("complete", n=n)
    out = run_blocks(_triple_stats, (g, t), samples, seed, ("triple", n), workers)
    violations = int(sum(int(v[0]) for v, _ in out))
    dis = np.concatenate([d for _, d in out])
    p = -math.expm1(-t) / 2
    return {"n": n, "t": t, "samples": samples, "violations": violations,
            "disagreement_mean": float(dis.mean()),
            "disagreement_stderr": float(dis.std(ddof=1) / math.sqrt(samples)),
            "disagreement_expected": n * p}


# -- N01 statistics ------------------------------------------------------------

def level_states(n: int, ones: int, size: int, rng) -> np.ndarray:
    """Uniform configurations with exactly ``ones`` ones."""
    keys = rng.random((size, n))
    rank = np.argsort(np.argsort(keys, axis=1), axis=1)
    return (rank < ones).astype(np.uint8)


def _n01_block(g, t, fixed_ones, size, rng):
    if fixed_ones is None:
        eta0 = uniform_states(g.n, size, rng)
    else:
        eta0 = level_states(g.n, fixed_ones, size, rng)
    ones = eta0.sum(axis=1, dtype=np.int64)
    eta = evolve_batch(eta0.copy(), g, t, rng)
    return ones, np.count_nonzero((eta0 == 0) & (eta == 1), axis=1).astype(np.int64)


@dataclass(frozen=True)
class BucketStats:
    ones: int
    count: int
    mean: float
    mean_stderr: float
    expected_mean: float
    variance: float
    variance_stderr: float
    variance_bound: float

    def record(self) -> dict:
        return dict(self.__dict__)


def n01_statistics(g: DynamicsGraph, t: float, samples: int, seed: int,
                   fixed_ones: int | None = None, min_bucket: int = 2,
                   workers: int = 1) -> list[BucketStats]:
    """Conditional mean and variance of N01_t given |eta_0|, bucketed by |eta_0|."""
    _require_complete(g)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    if fixed_ones is not None and not 0 <= fixed_ones <= g.n:
        raise ValueError("fixed_ones out of range")
    n = g.n
    out = run_blocks(_n01_block, (g, t, fixed_ones), samples, seed, ("n01",), workers)
    ones = np.concatenate([o for o, _ in out])
    n01 = np.concatenate([c for _, c in out]).astype(np.float64)
    eps = -math.expm1(-t)
    rows = []
    for k in np.unique(ones):
        x = n01[ones == k]
        m = x.size
        if m < max(min_bucket, 2):
            continue
        mean = float(x.mean())
        var = float(x.var(ddof=1))
        m4 = float(np.mean((x - mean) ** 4))
        var_se = math.sqrt(max(m4 - var * var, 0.0) / m)
        rows.append(BucketStats(int(k), int(m), mean, float(x.std(ddof=1) / math.sqrt(m)),
                                float(eps * k * (n - k) / n), var, var_se, float(n * eps)))
    return rows


# -- stochastic domination -------------------------------------------------------

def lemma_epsilon(V: int, s: int, t: float) -> float:
    """Binomial success probability in the lower bound on |S_t minus S|."""
    return -math.expm1(-(1 - s / V) * t) * (1 - s / (V - s))


def dkw_band(samples: int, confidence: float = DKW_CONFIDENCE) -> float:
    """One-sided DKW radius: P(sup(F_hat - F) > band) <= 1 - confidence."""
    return math.sqrt(math.log(1 / (1 - confidence)) / (2 * samples))


def _escape_block(g, mask, t, size, rng):
    inside = mask.to_array().astype(bool)
    states = np.repeat(mask.to_array()[None, :], size, axis=0)
    evolve_batch(states, g, t, rng)
    return (np.count_nonzero(states[:, ~inside], axis=1),)


@dataclass(frozen=True)
class DominationReport:
    V: int
    s: int
    t: float
    eps: float
    samples: int
    max_violation: float
    band: float

    @property
    def verdict(self) -> bool:
        return self.max_violation <= self.band

    def record(self) -> dict:
        return {"V": self.V, "S": self.s, "t": self.t, "eps": self.eps, "samples": self.samples,
                "max_cdf_violation": self.max_violation, "band": self.band,
                "verdict": "pass" if self.verdict else "fail"}


def lemma3_check(g: DynamicsGraph, S: SubsetMask, t: float, samples: int, seed: int,
                 workers: int = 1) -> DominationReport:
    """Test Bin(|S|, eps) <= |pi_t(S) minus S| in the usual stochastic order.

    Domination means the empirical CDF of the escape count never exceeds the
    binomial CDF; we allow the one-sided DKW band.
    """
    _require_complete(g)
    V, s = g.n, S.size()
    if S.n != V:
        raise ValueError("subset width does not match the graph")
    if not 2 * s < V:
        raise ValueError(f"need |S| < |V|/2, got |S|={s}, |V|={V}")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    eps = lemma_epsilon(V, s, t) if t > 0 else 0.0
    (escaped,) = zip(*run_blocks(_escape_block, (g, S, t), samples, seed, ("lemma3",), workers))
    escaped = np.concatenate(escaped)
    ks = np.arange(s + 1)
    emp = np.cumsum(np.bincount(escaped, minlength=s + 1)[: s + 1]) / samples
    binom = stats.binom.cdf(ks, s, eps)
    return DominationReport(V, s, float(t), eps, samples, float(np.max(emp - binom)),
                            dkw_band(samples))


def lemma3_grid(sizes=(20, 60, 100), fractions=(0.1, 0.3, 0.45), times=(0.5, 1.0, 2.0),
                samples: int = 100_000, seed: int = 0, workers: int = 1) -> list[DominationReport]:
    reports = []
    for V in sizes:
        g = graph_build("complete", n=V)
        for frac in fractions:
            S = SubsetMask.from_positions(V, range(int(round(frac * V))))
            for t in times:
                reports.append(lemma3_check(g, S, t, samples, seed, workers))
    return reports


# -- up-then-down paths ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UpDownPath:
    """Raise the sites in ``up`` one at a time, then lower the sites in ``down``."""

    start: Configuration
    up: np.ndarray
    down: np.ndarray

    @property
    def m01(self) -> int:
        return int(self.up.size)

    @property
    def m10(self) -> int:
        return int(self.down.size)

    def visited(self) -> np.ndarray:
        """Rows xi_0, ..., xi_{M01+M10} as uint8 arrays."""
        steps = np.concatenate([self.up, self.down])
        out = np.repeat(self.start.to_array()[None, :], steps.size + 1, axis=0)
        for j, x in enumerate(steps):
            out[j + 1:, x] ^= 1
        return out

    def end(self) -> Configuration:
        return Configuration.from_array(self.visited()[-1])


def updown_path(xi0: Configuration, m01: int, m10: int, rng=None) -> UpDownPath:
    rng = as_generator(rng)
    state = xi0.to_array()
    zeros = np.flatnonzero(state == 0)
    ones = np.flatnonzero(state == 1)
    if not 0 <= m01 <= zeros.size or not 0 <= m10 <= ones.size:
        raise ValueError(f"move counts ({m01}, {m10}) exceed available zeros/ones "
                         f"({zeros.size}, {ones.size})")
    return UpDownPath(xi0, rng.permutation(zeros)[:m01], rng.permutation(ones)[:m10])


def boundary_hit_experiment(f: BooleanFunction, t: float, samples: int, seed: int) -> dict:
    """How often an up-down path from omega^eps with the coupling's move counts crosses
    the edge boundary of f (i.e. f changes sign somewhere along it).

    Move counts are the disagreements between omega^eps and eta_t in each direction.
    Reported next to II(f), the sum of squared influences.
    """
    rng = as_generator(seed)
    g = graph_build("complete", n=f.n)
    batch = triple_batch(g, t, samples, rng)
    hits = 0
    for i in range(samples):
        a, b = batch.omega_eps[i], batch.eta_t[i]
        m01 = int(np.count_nonzero((a == 0) & (b == 1)))
        m10 = int(np.count_nonzero((a == 1) & (b == 0)))
        path = updown_path(Configuration.from_array(a), m01, m10, rng)
        vals = f.evaluate(path.visited())
        hits += bool(np.any(vals != vals[0]))
    rate = hits / samples
    ii = influences(f).ii
    return {"samples": samples, "t": t, "hit_rate": rate,
            "hit_stderr": math.sqrt(rate * (1 - rate) / samples), "ii": ii,
            "sqrt_ii": math.sqrt(ii), "fitted_constant": rate / math.sqrt(ii) if ii else math.inf}
