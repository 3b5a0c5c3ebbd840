"""Configurations, subset masks, Boolean functions and their combinatorics.

Conventions used throughout the package:

* vertex ``i`` (1-based, as in zoo parameters) is bit position ``i - 1``;
* a configuration ``omega`` is an integer mask, bit ``i`` holding ``omega_i``;
* Boolean functions take values in {-1, +1} with "event occurs" mapped to +1,
  i.e. ``f = 2 * 1_A - 1``;
* ``parity`` maps an even number of ones on its support to +1, so the parity
  of the full vertex set is exactly the character ``chi_V``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

TABULATION_CAP = 24

TRUTH_TABLE_MAGIC = b"XSBF"
TRUTH_TABLE_VERSION = 1


class TabulationError(ValueError):
    """Raised when an exact operation needs a truth table that is not available."""


class CapError(ValueError):
    """Raised when a request exceeds a configured size cap."""


def _check_width(n):
    if int(n) != n or n < 1:
        raise ValueError(f"bit count must be a positive integer, got {n!r}")


@dataclass(frozen=True)
class Configuration:
    """A point of {0,1}^n stored as an integer mask."""

    n: int
    bits: int

    def __post_init__(self):
        _check_width(self.n)
        if self.bits < 0 or self.bits >> self.n:
            raise ValueError(f"bits {self.bits:#x} do not fit in {self.n} positions")

    @classmethod
    def parse(cls, text: str) -> "Configuration":
        """Read ``"1010"`` as omega_1 omega_2 ... (leftmost character is vertex 1)."""
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a 0/1 string: {text!r}")
        return cls(len(text), sum(1 << i for i, c in enumerate(text) if c == "1"))

    @classmethod
    def from_array(cls, arr) -> "Configuration":
        arr = np.asarray(arr).astype(np.uint8).ravel()
        return cls(arr.size, int(sum(1 << int(i) for i in np.flatnonzero(arr))))

    def to_array(self) -> np.ndarray:
        return bits_to_array(self.bits, self.n)

    def ones(self) -> int:
        return self.bits.bit_count()

    def __str__(self):
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.n))


@dataclass(frozen=True)
class SubsetMask:
    """A subset S of the n positions, as a bit mask."""

    n: int
    mask: int

    def __post_init__(self):
        _check_width(self.n)
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask {self.mask:#x} does not fit in {self.n} positions")

    @classmethod
    def from_vertices(cls, n: int, vertices: Iterable[int]) -> "SubsetMask":
        """Build from 1-based vertex labels."""
        mask = 0
        for v in vertices:
            if not 1 <= v <= n:
                raise ValueError(f"vertex {v} outside 1..{n}")
            mask |= 1 << (v - 1)
        return cls(n, mask)

    @classmethod
    def from_positions(cls, n: int, positions: Iterable[int]) -> "SubsetMask":
        return cls.from_vertices(n, (int(p) + 1 for p in positions))

    @classmethod
    def full(cls, n: int) -> "SubsetMask":
        return cls(n, (1 << n) - 1)

    def positions(self) -> list[int]:
        return [i for i in range(self.n) if (self.mask >> i) & 1]

    def size(self) -> int:
        return self.mask.bit_count()

    def to_array(self) -> np.ndarray:
        return bits_to_array(self.mask, self.n)

    def __len__(self):
        return self.size()

    def __str__(self):
        return "{" + ",".join(str(p + 1) for p in self.positions()) + "}"


def bits_to_array(bits: int, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        if (bits >> i) & 1:
            out[i] = 1
    return out


def states_to_masks(states) -> np.ndarray:
    """Rows of 0/1 values to integer masks (n <= 62)."""
    states = np.atleast_2d(np.asarray(states))
    n = states.shape[1]
    if n > 62:
        raise TabulationError(f"cannot pack {n} bits into an int64 mask")
    weights = np.left_shift(np.int64(1), np.arange(n, dtype=np.int64))
    return states.astype(np.int64) @ weights


def masks_to_states(masks, n: int) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[..., None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.uint8)


def popcounts(n: int) -> np.ndarray:
    """|S| for every mask S in 0..2^n - 1."""
    return np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class BooleanFunction:
    """A map {0,1}^n -> {-1,+1}, tabulated or given by a batch predicate.

    ``predicate`` receives a ``(batch, n)`` uint8 array and returns ±1 values.
    Exact operations (spectrum, influences, ...) require ``table``.
    """

    n: int
    table: np.ndarray | None = None
    predicate: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_width(self.n)
        if self.table is None and self.predicate is None:
            raise ValueError("need a truth table or a predicate")
        if self.table is not None:
            table = np.asarray(self.table)
            if table.shape != (1 << self.n,):
                raise ValueError(f"truth table must have 2^{self.n} entries")
            if not np.all(np.abs(table) == 1):
                raise ValueError("truth table values must be exactly -1 or +1")
            table = table.astype(np.int8)
            table.setflags(write=False)
            object.__setattr__(self, "table", table)

    @property
    def tabulated(self) -> bool:
        return self.table is not None

    def values(self) -> np.ndarray:
        if self.table is None:
            raise TabulationError(f"{self.describe()} is predicate-only (n={self.n})")
        return self.table

    def evaluate(self, states) -> np.ndarray:
        """Evaluate on a batch of 0/1 rows; returns int8 ±1."""
        states = np.atleast_2d(np.asarray(states, dtype=np.uint8))
        if states.shape[1] != self.n:
            raise ValueError(f"expected width {self.n}, got {states.shape[1]}")
        if self.table is not None:
            return self.table[states_to_masks(states)]
        return np.asarray(self.predicate(states), dtype=np.int8)

    def __call__(self, omega):
        if isinstance(omega, Configuration):
            if omega.n != self.n:
                raise ValueError(f"width mismatch: {omega.n} != {self.n}")
            if self.table is not None:
                return int(self.table[omega.bits])
            return int(self.evaluate(omega.to_array())[0])
        return self.evaluate(omega)

    def describe(self) -> str:
        if not self.params:
            return self.name or "f"
        args = ",".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}({args})"


def from_indicator(n: int, indicator: np.ndarray, name: str = "", /, **params) -> BooleanFunction:
    return BooleanFunction(n, np.where(indicator, 1, -1).astype(np.int8), name=name, params=params)


# -- zoo ---------------------------------------------------------------------

def _support_mask(n, support):
    if support in ("all", None):
        return (1 << n) - 1
    if support == "first-half":
        return (1 << (n // 2)) - 1
    return SubsetMask.from_vertices(n, support).mask


class RowRule:
    """Batch predicate for zoo members too wide to tabulate (picklable)."""

    def __init__(self, kind: str, n: int, **params):
        self.kind, self.n, self.params = kind, n, params

    def __call__(self, states: np.ndarray) -> np.ndarray:
        x = np.asarray(states, dtype=np.int64)
        p = self.params
        if self.kind == "parity":
            keep = x[:, p["positions"]].sum(axis=1) % 2 == 0
        elif self.kind == "dictator":
            keep = x[:, p["i"] - 1] == 1
        elif self.kind == "majority":
            keep = 2 * x.sum(axis=1) > self.n
        elif self.kind == "tribes":
            b, k = p["b"], p["k"]
            keep = x[:, : b * k].reshape(-1, k, b).all(axis=2).any(axis=1)
        elif self.kind == "count_band":
            band = band_index(x[:, : p["window"]].sum(axis=1), p["window"], p["width"],
                              p["centered"])
            keep = (band % 2 == 1) if p["centered"] else (band % 2 == 0)
        elif self.kind == "flipped_pairs":
            y = x.copy()
            y[:, 1::2] ^= 1
            keep = band_index(y.sum(axis=1), self.n, 2) % 2 == 0
        elif self.kind == "constant":
            keep = np.full(x.shape[0], p["value"] == 1)
        else:
            raise ValueError(f"unknown rule {self.kind!r}")
        return np.where(keep, 1, -1).astype(np.int8)


def _wide(n):
    return n > TABULATION_CAP


def _rule_function(name, rule, **params):
    return BooleanFunction(rule.n, predicate=rule, name=name, params=params)


def _parity(n, support="all"):
    sup = _support_mask(n, support)
    if _wide(n):
        pos = [i for i in range(n) if (sup >> i) & 1]
        return _rule_function("parity", RowRule("parity", n, positions=pos), n=n, support=support)
    parity = np.bitwise_count(np.arange(1 << n, dtype=np.uint64) & np.uint64(sup)) & 1
    return BooleanFunction(n, np.where(parity == 0, 1, -1).astype(np.int8),
                           name="parity", params={"n": n, "support": support})


def _dictator(n, i=1):
    if not 1 <= i <= n:
        raise ValueError(f"dictator bit {i} outside 1..{n}")
    if _wide(n):
        return _rule_function("dictator", RowRule("dictator", n, i=i), n=n, i=i)
    masks = np.arange(1 << n, dtype=np.int64)
    return from_indicator(n, (masks >> (i - 1)) & 1, "dictator", n=n, i=i)


def _majority(n):
    if n % 2 == 0:
        raise ValueError("majority needs an odd number of bits")
    if _wide(n):
        return _rule_function("majority", RowRule("majority", n), n=n)
    return from_indicator(n, 2 * popcounts(n) > n, "majority", n=n)


def _tribes(b, k):
    if b < 1 or k < 1:
        raise ValueError("tribes needs b >= 1 and k >= 1")
    n = b * k
    if _wide(n):
        return _rule_function("tribes", RowRule("tribes", n, b=b, k=k), b=b, k=k)
    masks = np.arange(1 << n, dtype=np.int64)
    full = (1 << b) - 1
    hit = np.zeros(1 << n, dtype=bool)
    for j in range(k):
        hit |= ((masks >> (j * b)) & full) == full
    return from_indicator(n, hit, "tribes", b=b, k=k)


def band_index(count, n, width, centered=False):
    """Band number of a count of ones: floor(count / width), or floor((count - n/2) / width)."""
    count = np.asarray(count, dtype=np.float64)
    if centered:
        return np.floor((count - n / 2) / width).astype(np.int64)
    return np.floor(count / width).astype(np.int64)


def _count_band(n, width=2, centered=False, window=None):
    """+1 iff the band index of the count of ones is even (uncentered) or odd (centered).

    The uncentered rule with ``width=2`` is the mod-4 rule {4k, 4k+1}; the
    centered rule anchors bands at half the window size so that, for an odd
    window, complementing the window bits swaps the sign (mean zero).
    ``window`` restricts counting to the first ``window`` bits.
    """
    if width <= 0:
        raise ValueError("band width must be positive")
    m = n if window is None else int(window)
    if not 1 <= m <= n:
        raise ValueError(f"window {window} outside 1..{n}")
    params = {"n": n, "width": width}
    if centered:
        params["centered"] = True
    if window is not None:
        params["window"] = m
    if _wide(n):
        rule = RowRule("count_band", n, width=width, centered=bool(centered), window=m)
        return _rule_function("count_band", rule, **params)
    counts = np.bitwise_count(np.arange(1 << n, dtype=np.uint64) & np.uint64((1 << m) - 1))
    k = band_index(counts, m, width, centered)
    keep = (k % 2 == 1) if centered else (k % 2 == 0)
    return from_indicator(n, keep, "count_band", **params)


def _iterated_majority(depth, arity=3):
    if arity % 2 == 0 or arity < 1 or depth < 1:
        raise ValueError("iterated majority needs odd arity and depth >= 1")
    n = arity ** depth
    _cap(n)
    masks = np.arange(1 << n, dtype=np.int64)
    level = [((masks >> i) & 1).astype(np.int8) for i in range(n)]
    while len(level) > 1:
        level = [(sum(level[j:j + arity]) * 2 > arity).astype(np.int8)
                 for j in range(0, len(level), arity)]
    return from_indicator(n, level[0], "iterated_majority", depth=depth, arity=arity)


def _flipped_pairs(edges):
    """f composed with the flip of the second endpoint of each isolated edge.

    Edge k joins vertices 2k-1 and 2k; f is the mod-4 count rule
    (``count_band`` of width 2) on all 2 * edges bits.
    """
    n = 2 * edges
    if _wide(n):
        return _rule_function("flipped_pairs", RowRule("flipped_pairs", n), edges=edges)
    f = _count_band(n, 2)
    second = sum(1 << (2 * k + 1) for k in range(edges))
    g = f.table[np.arange(1 << n, dtype=np.int64) ^ second]
    return BooleanFunction(n, g, name="flipped_pairs", params={"edges": edges})


def _constant(n, value=1):
    if value not in (-1, 1):
        raise ValueError("constant value must be -1 or +1")
    if _wide(n):
        return _rule_function("constant", RowRule("constant", n, value=value), n=n, value=value)
    return BooleanFunction(n, np.full(1 << n, value, dtype=np.int8), name="constant",
                           params={"n": n, "value": value})


def _crossing(**params):
    from . import percolation

    return percolation.crossing_function(percolation.patch_from_params(**params))


def _coarse_majority_crossing(**params):
    from . import percolation

    return percolation.coarse_majority_crossing(**params)


ZOO = {
    "parity": _parity,
    "dictator": _dictator,
    "majority": _majority,
    "tribes": _tribes,
    "count_band": _count_band,
    "iterated_majority": _iterated_majority,
    "flipped_pairs": _flipped_pairs,
    "constant": _constant,
    "crossing": _crossing,
    "coarse_majority_crossing": _coarse_majority_crossing,
}


def _cap(n, cap=None):
    cap = TABULATION_CAP if cap is None else cap
    if n > cap:
        raise CapError(f"n={n} exceeds the tabulation cap of {cap} bits")


def zoo_build(name: str, **params) -> BooleanFunction:
    """Build a named Boolean function family member.

    Members wider than the tabulation cap come back in predicate form (usable
    by the samplers, refused by exact operations); iterated majority has no
    predicate form and is refused outright.

    >>> zoo_build("majority", n=3)(Configuration.parse("110"))
    1
    """
    try:
        builder = ZOO[name]
    except KeyError:
        raise ValueError(f"unknown zoo family {name!r}; known: {sorted(ZOO)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ValueError(f"invalid parameters for {name}: {exc}") from None


# -- exact combinatorics -----------------------------------------------------

@dataclass(frozen=True)
class InfluenceReport:
    influences: np.ndarray
    total: float
    ii: float
    edge_boundary: int
    stderr: np.ndarray | None = None


def _pair_view(table, i):
    n_total = table.shape[0]
    return table.reshape(n_total >> (i + 1), 2, 1 << i)


def influences(f: BooleanFunction, samples: int = 100_000, rng=None) -> InfluenceReport:
    """Exact influences ``I_i = P(f(omega) != f(omega with bit i flipped))``.

    Predicate-form functions fall back to Monte Carlo with standard errors when
    ``rng`` is given; otherwise they are refused.
    """
    if not f.tabulated:
        if rng is None:
            raise TabulationError("influences need a truth table (pass rng for Monte Carlo)")
        return _influences_mc(f, samples, rng)
    table = f.values()
    n = f.n
    counts = np.empty(n, dtype=np.int64)
    for i in range(n):
        view = _pair_view(table, i)
        counts[i] = np.count_nonzero(view[:, 0, :] != view[:, 1, :])
    infl = counts / float(1 << (n - 1))
    return InfluenceReport(infl, float(infl.sum()), float(np.sum(infl ** 2)), int(counts.sum()))


def _influences_mc(f, samples, rng):
    from .rng import as_generator

    rng = as_generator(rng)
    states = rng.integers(0, 2, size=(samples, f.n), dtype=np.uint8)
    base = f.evaluate(states)
    infl = np.empty(f.n)
    for i in range(f.n):
        flipped = states.copy()
        flipped[:, i] ^= 1
        infl[i] = np.mean(f.evaluate(flipped) != base)
    se = np.sqrt(infl * (1 - infl) / samples)
    edge = int(round((1 << (f.n - 1)) * infl.sum())) if f.n < 63 else -1
    return InfluenceReport(infl, float(infl.sum()), float(np.sum(infl ** 2)), edge, se)


def flip(omega: Configuration, B: SubsetMask) -> Configuration:
    """Flip the bits of omega lying in B."""
    if omega.n != B.n:
        raise ValueError(f"width mismatch: {omega.n} != {B.n}")
    return Configuration(omega.n, omega.bits ^ B.mask)


def is_monotone(f: BooleanFunction) -> bool:
    """True iff raising any single bit never lowers f."""
    table = f.values()
    for i in range(f.n):
        view = _pair_view(table, i)
        if np.any(view[:, 0, :] > view[:, 1, :]):
            return False
    return True


def _as_positions(n, points):
    if isinstance(points, SubsetMask):
        if points.n != n:
            raise ValueError(f"width mismatch: {points.n} != {n}")
        return points.positions()
    return sorted(int(p) for p in points)


def jointly_pivotal(f: BooleanFunction, points) -> float:
    """P(the function induced on ``points`` depends on every one of them).

    The probability is over uniform assignments of the complementary bits; the
    result is an exact dyadic count / 2^(n - |points|).
    """
    n = f.n
    pos = _as_positions(n, points)
    if not pos:
        raise ValueError("jointly_pivotal needs a nonempty point set")
    k = len(pos)
    cube = f.values().reshape((2,) * n)
    # numpy axis a holds bit n - 1 - a
    arr = np.moveaxis(cube, [n - 1 - p for p in pos], list(range(n - k, n)))
    arr = arr.reshape((1 << (n - k),) + (2,) * k)
    depends_all = np.ones(arr.shape[0], dtype=bool)
    for j in range(k):
        axis = 1 + j
        diff = np.take(arr, 0, axis=axis) != np.take(arr, 1, axis=axis)
        depends_all &= diff.reshape(arr.shape[0], -1).any(axis=1)
    return np.count_nonzero(depends_all) / float(1 << (n - k))


def bias_profile(f: BooleanFunction, p: float) -> float:
    """E[f] under the product measure with P(omega_i = 1) = p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    n = f.n
    level_sums = np.bincount(popcounts(n), weights=f.values().astype(np.float64), minlength=n + 1)
    k = np.arange(n + 1)
    return float(np.sum(level_sums * np.power(p, k) * np.power(1.0 - p, n - k)))


# -- truth-table files -------------------------------------------------------

def write_truth_table(f: BooleanFunction, path) -> None:
    """Binary format: b"XSBF", uint16 version, uint16 n (little endian), then 2^n int8."""
    table = f.values()
    with open(path, "wb") as fh:
        fh.write(TRUTH_TABLE_MAGIC + struct.pack("<HH", TRUTH_TABLE_VERSION, f.n))
        fh.write(table.astype(np.int8).tobytes())


def read_truth_table(path, name: str = "") -> BooleanFunction:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8 or header[:4] != TRUTH_TABLE_MAGIC:
            raise ValueError(f"{path}: not an XSBF truth table")
        version, n = struct.unpack("<HH", header[4:])
        if version != TRUTH_TABLE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        body = np.frombuffer(fh.read(), dtype=np.int8)
    if body.size != 1 << n:
        raise ValueError(f"{path}: expected {1 << n} values, found {body.size}")
    return BooleanFunction(n, body.copy(), name=name or "table", params={"n": n})

