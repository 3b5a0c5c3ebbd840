"""Fourier-Walsh spectra of Boolean functions.

Characters are ``chi_S(omega) = (-1)^{|S ∩ omega|}`` (chi_i = -1 when omega_i = 1),
and ``fhat(S) = E[f chi_S]`` under the uniform measure. Coefficients are computed
with an integer butterfly and a single final division by 2^n, so for ±1 tables
every coefficient is an exact dyadic rational.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import BooleanFunction, SubsetMask, popcounts
from .rng import as_generator


@dataclass(frozen=True, eq=False)
class Spectrum:
    n: int
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if coef.shape != (1 << self.n,):
            raise ValueError(f"expected 2^{self.n} coefficients")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    def __getitem__(self, S):
        if isinstance(S, SubsetMask):
            S = S.mask
        return self.coefficients[S]

    @property
    def weights(self) -> np.ndarray:
        """Spectral-sample law P(S) = fhat(S)^2."""
        return self.coefficients ** 2

    def parseval(self) -> float:
        return float(np.sum(self.weights))

    def levels(self) -> np.ndarray:
        return popcounts(self.n)

    def level_vector(self, k: int) -> np.ndarray:
        """Coefficients at level k, ordered by increasing mask."""
        return self.coefficients[self.levels() == k]


def _butterfly(x: np.ndarray) -> np.ndarray:
    """In-place Walsh-Hadamard butterfly (unnormalised) over a length-2^n array."""
    h = 1
    size = x.shape[0]
    while h < size:
        view = x.reshape(-1, 2, h)
        lo = view[:, 0, :].copy()
        view[:, 0, :] += view[:, 1, :]
        view[:, 1, :] = lo - view[:, 1, :]
        h *= 2
    return x


def transform(f: BooleanFunction) -> Spectrum:
    """All 2^n Fourier-Walsh coefficients in O(n 2^n)."""
    acc = f.values().astype(np.int64)
    _butterfly(acc)
    return Spectrum(f.n, acc / float(1 << f.n))


def inverse_transform(sp: Spectrum) -> np.ndarray:
    """Function values sum_S fhat(S) chi_S(omega) for every omega (mask order)."""
    scale = float(1 << sp.n)
    scaled = sp.coefficients * scale
    as_int = np.rint(scaled)
    if np.array_equal(as_int, scaled) and np.max(np.abs(as_int), initial=0) < 2.0 ** 52:
        acc = as_int.astype(np.int64)
        _butterfly(acc)
        return acc / scale
    return _butterfly(sp.coefficients.copy())


def to_function(sp: Spectrum, name: str = "inverse") -> BooleanFunction:
    return BooleanFunction(sp.n, inverse_transform(sp).astype(np.int8), name=name)


def level_energy(sp: Spectrum, k: int) -> float:
    """Sum of fhat(S)^2 over |S| = k."""
    if not 0 <= k <= sp.n:
        raise ValueError(f"level {k} outside 0..{sp.n}")
    return float(np.sum(sp.weights[sp.levels() == k]))


def level_energies(sp: Spectrum) -> np.ndarray:
    return np.bincount(sp.levels(), weights=sp.weights, minlength=sp.n + 1)


def noise_correlation(sp: Spectrum, eps: float) -> float:
    """E[f(omega) f(omega^eps)] - E[f]^2 = sum_{S != 0} (1 - eps)^|S| fhat(S)^2."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    energy = level_energies(sp)
    k = np.arange(1, sp.n + 1)
    return float(np.sum(energy[1:] * (1.0 - eps) ** k))


def sample_spectral(sp: Spectrum, rng=None, size: int | None = None):
    """Draw the spectral sample (the empty set included, with mass fhat(0)^2).

    Returns a :class:`SubsetMask`, or an int64 array of masks when ``size`` is given.
    """
    rng = as_generator(rng)
    cdf = np.cumsum(sp.weights)
    u = rng.random(1 if size is None else size) * cdf[-1]
    masks = np.searchsorted(cdf, u, side="right")
    masks = np.minimum(masks, cdf.size - 1)
    if size is None:
        return SubsetMask(sp.n, int(masks[0]))
    return masks.astype(np.int64)


def _check(sp, B):
    if isinstance(B, SubsetMask):
        if B.n != sp.n:
            raise ValueError(f"width mismatch: {B.n} != {sp.n}")
        return B.mask
    raise TypeError("expected a SubsetMask")


def flip_conjugate(sp: Spectrum, B: SubsetMask) -> Spectrum:
    """Spectrum of f composed with the flip of B: fhat(S) -> (-1)^{|S ∩ B|} fhat(S)."""
    b = _check(sp, B)
    masks = np.arange(1 << sp.n, dtype=np.uint64)
    sign = 1 - 2 * (np.bitwise_count(masks & np.uint64(b)) & 1).astype(np.int64)
    return Spectrum(sp.n, sp.coefficients * sign)


def disjoint_mass(sp: Spectrum, S: SubsetMask) -> float:
    """E[f(omega) f(omega^S)] = sum of fhat(S')^2 over S' disjoint from S."""
    s = _check(sp, S)
    masks = np.arange(1 << sp.n, dtype=np.int64)
    return float(np.sum(sp.weights[(masks & s) == 0]))


def superset_mass(sp: Spectrum, points: SubsetMask) -> float:
    """P(points ⊆ spectral sample) = sum of fhat(S)^2 over S ⊇ points."""
    p = _check(sp, points)
    masks = np.arange(1 << sp.n, dtype=np.int64)
    return float(np.sum(sp.weights[(masks & p) == p]))


def write_spectrum_csv(sp: Spectrum, path, header_rows=()) -> None:
    """Columns: mask (hex), size, coefficient (repr, round-trips exactly)."""
    sizes = sp.levels()
    with open(path, "w", newline="") as fh:
        for row in header_rows:
            fh.write(f"# {row}\n")
        w = csv.writer(fh)
        w.writerow(["mask", "size", "coefficient"])
        for s, (size, c) in enumerate(zip(sizes, sp.coefficients)):
            w.writerow([f"{s:#x}", int(size), repr(float(c))])


def read_spectrum_csv(path) -> Spectrum:
    coefs = {}
    with open(path, newline="") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            coefs[int(row["mask"], 16)] = float(row["coefficient"])
    size = len(coefs)
    n = size.bit_length() - 1
    if size != 1 << n:
        raise ValueError(f"{path}: {size} rows is not a power of two")
    return Spectrum(n, np.array([coefs[s] for s in range(size)]))
