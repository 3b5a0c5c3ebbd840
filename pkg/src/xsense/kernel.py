"""Exact level-k exclusion kernels P_t(S, S') = P(pi_t(S) = S').

The exclusion semigroup maps span{chi_S : |S| = k} to itself, and on that
level it acts through the continuous-time chain of k-subsets whose generator
has rate alpha({x, y}) for moving S to S with x, y exchanged (exactly one of
them in S). Kernels are computed by uniformization, which keeps every
truncated partial sum entrywise nonnegative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.stats import poisson

from .core import CapError, SubsetMask
from .dynamics import DynamicsGraph
from .spectral import Spectrum

KERNEL_STATE_CAP = 20_000
DENSE_STATE_CAP = 5_000
EIGEN_STATE_CAP = 5_000
TAIL_MASS = 1e-13


@dataclass(frozen=True, eq=False)
class LevelGenerator:
    k: int
    states: np.ndarray  # k-subset masks, increasing
    matrix: sparse.csr_matrix

    @property
    def size(self) -> int:
        return int(self.states.shape[0])

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def index(self, mask: int) -> int:
        i = int(np.searchsorted(self.states, mask))
        if i >= self.size or self.states[i] != mask:
            raise KeyError(f"mask {mask:#x} is not a {self.k}-subset state")
        return i


@dataclass(frozen=True, eq=False)
class LevelKernel:
    k: int
    t: float
    states: np.ndarray
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class LevelEigen:
    """Decay rates (ascending) and orthonormal eigenvectors (columns) of one level."""

    k: int
    states: np.ndarray
    rates: np.ndarray
    vectors: np.ndarray


def level_states(n: int, k: int) -> np.ndarray:
    if not 0 <= k <= n:
        raise ValueError(f"level {k} outside 0..{n}")
    masks = [sum(1 << i for i in c) for c in combinations(range(n), k)]
    return np.sort(np.array(masks, dtype=np.int64))


def level_generator(g: DynamicsGraph, k: int, cap: int = KERNEL_STATE_CAP) -> LevelGenerator:
    """Rate matrix of the k-subset chain induced by exclusion on g."""
    if not 1 <= k <= g.n:
        raise ValueError(f"level {k} outside 1..{g.n}")
    size = math.comb(g.n, k)
    if size > cap:
        raise CapError(f"level {k} of n={g.n} has {size} states, over the kernel state cap of {cap}")
    states = level_states(g.n, k)
    rows, cols, vals = [], [], []
    for (x, y), rate in zip(g.edges, g.rates):
        pair = np.int64((1 << int(x)) | (1 << int(y)))
        hit = np.bitwise_count((states & pair).astype(np.uint64)) == 1
        src = np.flatnonzero(hit)
        dst = np.searchsorted(states, states[src] ^ pair)
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.size, rate))
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    out_rate = np.asarray(off.sum(axis=1)).ravel()
    matrix = (off - sparse.diags(out_rate)).tocsr()
    return LevelGenerator(k, states, matrix)


def _poisson_weights(mean, tail):
    if mean == 0:
        return np.ones(1)
    top = int(poisson.isf(tail, mean)) + 1
    while poisson.sf(top, mean) > tail:
        top += 1
    return poisson.pmf(np.arange(top + 1), mean)


def _uniformize(L: LevelGenerator):
    lam = float(np.max(-L.matrix.diagonal())) if L.size else 0.0
    if lam == 0:
        return 0.0, None
    jump = (sparse.identity(L.size, format="csr") + L.matrix / lam).tocsr()
    return lam, jump


def kernel_at(L: LevelGenerator, t: float, tail: float = TAIL_MASS,
              cap: int = DENSE_STATE_CAP) -> LevelKernel:
    """Dense P_t = exp(t L) as a Poisson mixture of powers of the jump matrix."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if L.size > cap:
        raise CapError(f"{L.size} states exceeds the dense kernel cap of {cap}")
    lam, jump = _uniformize(L)
    if jump is None or t == 0:
        return LevelKernel(L.k, t, L.states, np.eye(L.size))
    weights = _poisson_weights(lam * t, tail)
    jump = jump.toarray()
    power = np.eye(L.size)
    acc = weights[0] * power
    for w in weights[1:]:
        power = power @ jump
        acc += w * power
    return LevelKernel(L.k, t, L.states, acc)


def apply_kernel(L: LevelGenerator, t: float, v: np.ndarray, tail: float = TAIL_MASS) -> np.ndarray:
    """P_t v via sparse uniformization (matrix never formed)."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    v = np.asarray(v, dtype=np.float64)
    lam, jump = _uniformize(L)
    if jump is None or t == 0:
        return v.copy()
    weights = _poisson_weights(lam * t, tail)
    term = v.copy()
    acc = weights[0] * term
    for w in weights[1:]:
        term = jump @ term
        acc += w * term
    return acc


def _levels(sp: Spectrum, g: DynamicsGraph):
    if sp.n != g.n:
        raise ValueError(f"spectrum width {sp.n} != graph size {g.n}")
    levels = sp.levels()
    for k in range(1, sp.n + 1):
        v = sp.coefficients[levels == k]
        if np.any(v != 0):
            yield k, v


def exact_exclusion_correlation(sp: Spectrum, g: DynamicsGraph, t: float,
                                cap: int = KERNEL_STATE_CAP) -> float:
    """N(f, t) = sum_{k >= 1} v_k^T P_t^(k) v_k with v_k the level-k coefficients.

    Levels with no spectral mass are skipped (and do not count towards the cap).
    """
    total = 0.0
    for k, v in _levels(sp, g):
        L = level_generator(g, k, cap)
        total += float(v @ apply_kernel(L, t, v))
    return total


def exact_absolute_correlation(sp: Spectrum, g: DynamicsGraph, t: float,
                               cap: int = KERNEL_STATE_CAP) -> float:
    """sum_{S != 0} |fhat(S)| sum_{S'} |fhat(S')| P_t(S, S')."""
    total = 0.0
    for k, v in _levels(sp, g):
        a = np.abs(v)
        L = level_generator(g, k, cap)
        total += float(a @ apply_kernel(L, t, a))
    return total


def level_eigen(L: LevelGenerator, cap: int = EIGEN_STATE_CAP, zero_tol: float = 1e-10) -> LevelEigen:
    """Eigen-decomposition of a level; the first vector is the uniform one (rate 0).

    When the rate-0 eigenspace is degenerate (disconnected chains) its basis is
    rotated so that the uniform vector comes first.
    """
    if L.size > cap:
        raise CapError(f"{L.size} states exceeds the eigendecomposition cap of {cap}")
    vals, vecs = np.linalg.eigh(L.dense())
    rates = -vals[::-1]
    vecs = vecs[:, ::-1]
    rates[np.abs(rates) < zero_tol] = 0.0
    zero = np.flatnonzero(rates == 0.0)
    uniform = np.full(L.size, 1.0 / math.sqrt(L.size))
    if zero.size:
        block = vecs[:, zero]
        basis = np.column_stack([uniform, block])
        q, _ = np.linalg.qr(basis)
        q = q[:, :zero.size]
        if q[:, 0] @ uniform < 0:
            q[:, 0] = -q[:, 0]
        vecs = vecs.copy()
        vecs[:, zero] = q
    return LevelEigen(L.k, L.states, rates, vecs)


def phi_mass(sp: Spectrum, g: DynamicsGraph, C: float, exclude_level_uniform: bool = False,
             cap: int = EIGEN_STATE_CAP) -> float:
    """Squared projection of f onto eigenfunctions with decay rate <= C, excluding the constant.

    With ``exclude_level_uniform`` the rate-0 conservation eigenfunctions
    (sum of chi_S over each level) are excluded too.
    """
    total = 0.0
    for k, v in _levels(sp, g):
        if math.isinf(C) and not exclude_level_uniform:
            total += float(v @ v)
            continue
        L = level_generator(g, k, cap)
        eig = level_eigen(L, cap)
        coords = eig.vectors.T @ v
        keep = eig.rates <= C
        if exclude_level_uniform:
            keep[0] = False
        total += float(np.sum(coords[keep] ** 2))
    return total


def min_restricted_eigenvalue(g: DynamicsGraph, t: float, max_level: int,
                              cap: int = DENSE_STATE_CAP) -> float:
    """Smallest eigenvalue of P_t restricted to nonempty sets of size <= max_level.

    The restriction is block diagonal over levels, so this is a minimum over levels.
    """
    best = math.inf
    for k in range(1, max_level + 1):
        P = kernel_at(level_generator(g, k, cap), t, cap=cap).matrix
        best = min(best, float(np.linalg.eigvalsh((P + P.T) / 2).min()))
    return best


@dataclass(frozen=True)
class SingularityReport:
    """The two quantities whose vanishing gives exclusion sensitivity via the singularity criterion."""

    mass_outside: float  # nu(A^c): spectral mass off A and off the empty set
    max_return: float  # max over S in A of P_t(S, A)
    argmax: int | None


def singularity_diagnostic(sp: Spectrum, g: DynamicsGraph, t: float,
                           A: Callable[[np.ndarray], np.ndarray] | set | frozenset,
                           cap: int = KERNEL_STATE_CAP) -> SingularityReport:
    """``A`` is a set of masks or a vectorised predicate on int64 mask arrays."""
    if sp.n != g.n:
        raise ValueError(f"spectrum width {sp.n} != graph size {g.n}")
    member = _membership(A)
    masks = np.arange(1 << sp.n, dtype=np.int64)
    in_a = member(masks)
    in_a[0] = False
    outside = ~in_a
    outside[0] = False
    nu_out = float(np.sum(sp.weights[outside]))
    best, arg = 0.0, None
    levels = sp.levels()
    for k in range(1, sp.n + 1):
        sel = in_a & (levels == k)
        if not np.any(sel):
            continue
        L = level_generator(g, k, cap)
        indicator = sel[L.states].astype(np.float64)
        ret = apply_kernel(L, t, indicator)
        ret = np.where(indicator > 0, ret, -np.inf)
        i = int(np.argmax(ret))
        if ret[i] > best or arg is None:
            best, arg = float(ret[i]), int(L.states[i])
    return SingularityReport(nu_out, best, arg)


def _membership(A):
    if callable(A):
        return lambda masks: np.asarray(A(masks), dtype=bool)
    wanted = np.array(sorted(int(getattr(a, "mask", a)) for a in A), dtype=np.int64)

    def member(masks):
        return np.isin(masks, wanted)

    return member


def write_kernel_csv(K: LevelKernel, path, header_rows=()) -> None:
    with open(path, "w") as fh:
        for row in header_rows:
            fh.write(f"# {row}\n")
        fh.write("row_mask,col_mask,probability\n")
        for i, s in enumerate(K.states):
            for j, s2 in enumerate(K.states):
                fh.write(f"{int(s):#x},{int(s2):#x},{K.matrix[i, j]!r}\n")


def write_eigen_csv(E: LevelEigen, path, header_rows=()) -> None:
    with open(path, "w") as fh:
        for row in header_rows:
            fh.write(f"# {row}\n")
        fh.write("index,rate," + ",".join(f"{int(s):#x}" for s in E.states) + "\n")
        for l in range(E.rates.size):
            fh.write(f"{l},{E.rates[l]!r}," + ",".join(repr(float(x)) for x in E.vectors[:, l]) + "\n")


def kernel_entry(g: DynamicsGraph, S: SubsetMask, S2: SubsetMask, t: float) -> float:
    """Single entry P_t(S, S'); zero across levels."""
    if S.size() != S2.size():
        return 0.0
    if S.size() == 0:
        return 1.0
    L = level_generator(g, S.size())
    e = np.zeros(L.size)
    e[L.index(S2.mask)] = 1.0
    return float(apply_kernel(L, t, e)[L.index(S.mask)])
