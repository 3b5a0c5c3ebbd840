"""Exit criteria for the library, runnable from tests and from ``xsense verify``.

Each check returns a :class:`Check` with a verdict and the numbers behind it.
Tolerances are fixed here; sample sizes are the smallest that the criteria
name, or larger where a separation at 3 standard errors needs it.
"""
from __future__ import annotations

import filecmp
import itertools
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import couplings, estimators, kernel, percolation
from .core import SubsetMask, jointly_pivotal, zoo_build
from .dynamics import graph_build, graph_for_size
from .rng import stream
from .spectral import inverse_transform, noise_correlation, superset_mass, to_function, transform

SIGMAS = 3.0


@dataclass
class Check:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget: float | None = None

    @property
    def within_budget(self) -> bool:
        return self.budget is None or self.seconds <= self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        verdict = "PASS" if self.ok else "FAIL"
        budget = f" / {self.budget:.0f}s" if self.budget else ""
        note = "" if self.within_budget else " (over time budget)"
        return f"[{verdict}] {self.number:2d}. {self.title} ({self.seconds:.1f}s{budget}){note}"

    def record(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "details": self.details}


def _z(est, exact):
    if est.stderr == 0:
        return 0.0 if est.estimate == exact else math.inf
    return (est.estimate - exact) / est.stderr


def zoo_cases(max_n: int):
    """Representative zoo members with at most ``max_n`` bits."""
    cases = [
        zoo_build("parity", n=max_n),
        zoo_build("parity", n=max_n, support="first-half"),
        zoo_build("dictator", n=max_n, i=1),
        zoo_build("majority", n=max_n if max_n % 2 else max_n - 1),
        zoo_build("tribes", b=max_n // 4 or 1, k=4) if max_n >= 4 else zoo_build("tribes", b=1, k=max_n),
        zoo_build("count_band", n=max_n, width=2),
        zoo_build("count_band", n=max_n if max_n % 2 else max_n - 1, width=2, centered=True),
        zoo_build("iterated_majority", depth=2),
        zoo_build("flipped_pairs", edges=max_n // 2),
        zoo_build("constant", n=max_n, value=-1),
        zoo_build("crossing", shape="rhombus", n=math.isqrt(max_n)),
        zoo_build("coarse_majority_crossing", n=3, side=3),
        zoo_build("coarse_majority_crossing", n=3, side=1),
    ]
    return [f for f in cases if f.n <= max_n]


# -- 1 --------------------------------------------------------------------------

def spectral_identities(seed=0, workers=1) -> tuple[bool, dict]:
    worst_parseval, exact = 0.0, True
    names = []
    for f in zoo_cases(16):
        sp = transform(f)
        worst_parseval = max(worst_parseval, abs(sp.parseval() - 1.0))
        exact &= bool(np.array_equal(inverse_transform(sp), f.values().astype(np.float64)))
        exact &= bool(np.array_equal(to_function(sp).values(), f.values()))
        names.append(f.describe())
    return worst_parseval <= 1e-12 and exact, {
        "functions": names, "max_parseval_error": worst_parseval, "round_trip_exact": exact}


# -- 2 --------------------------------------------------------------------------

def noise_oracle(seed=0, workers=1):
    fns = [zoo_build("majority", n=9), zoo_build("tribes", b=3, k=4),
           zoo_build("iterated_majority", depth=2), zoo_build("dictator", n=10),
           zoo_build("parity", n=8, support="first-half"),
           zoo_build("crossing", shape="rhombus", n=3)]
    rows, ok = [], True
    for c, (f, eps) in enumerate(itertools.product(fns, (0.1, 0.3, 0.7))):
        exact = noise_correlation(transform(f), eps)
        est = estimators.estimate_noise_correlation(f, eps, 100_000, seed, workers, key=(2, c))
        z = _z(est, exact)
        ok &= abs(z) <= SIGMAS
        rows.append({"f": f.describe(), "eps": eps, "exact": exact, "estimate": est.estimate,
                     "stderr": est.stderr, "z": z})
    return ok, {"rows": rows}


# -- 3 --------------------------------------------------------------------------

EXCLUSION_CASES = (
    ("complete", zoo_build("dictator", n=8, i=1)),
    ("complete", zoo_build("parity", n=10, support="first-half")),
    ("path", zoo_build("tribes", b=2, k=3)),
    ("path", zoo_build("iterated_majority", depth=2)),
    ("isolated_edges", zoo_build("flipped_pairs", edges=4)),
    ("isolated_edges", zoo_build("dictator", n=10, i=3)),
)


def exclusion_oracle(seed=0, workers=1):
    rows, ok = [], True
    c = 0
    for family, f in EXCLUSION_CASES:
        g = graph_for_size(family, f.n)
        sp = transform(f)
        for t in (0.25, 1.0, 4.0):
            exact = kernel.exact_exclusion_correlation(sp, g, t)
            est = estimators.estimate_exclusion_correlation(f, g, t, 100_000, seed, workers,
                                                            key=(3, c))
            z = _z(est, exact)
            ok &= abs(z) <= SIGMAS
            rows.append({"graph": family, "f": f.describe(), "t": t, "exact": exact,
                         "estimate": est.estimate, "stderr": est.stderr, "z": z})
            c += 1
    return ok, {"rows": rows}


# -- 4 --------------------------------------------------------------------------

def kernel_structure(seed=0, workers=1):
    worst = {"symmetry": 0.0, "stochastic": 0.0, "min_eig": math.inf, "uniform_residual": 0.0}
    bound_rows, ok = [], True
    for family in ("complete", "path", "isolated_edges"):
        for n in (4, 6, 8):
            g = graph_for_size(family, n)
            assert g.assumption_ok
            for k in range(1, 4):
                L = kernel.level_generator(g, k)
                uniform = np.full(L.size, 1 / math.sqrt(L.size))
                worst["uniform_residual"] = max(worst["uniform_residual"],
                                                float(np.abs(L.matrix @ uniform).max()))
                eig = kernel.level_eigen(L)
                if family != "isolated_edges":
                    # connected chain: the rate-0 eigenspace is exactly the uniform vector
                    ok &= int(np.count_nonzero(eig.rates == 0)) == 1
                    ok &= bool(np.allclose(np.abs(eig.vectors[:, 0]), uniform, atol=1e-10))
                for t in (0.05, math.log(4 / 3) / k, 0.5, 2.0):
                    P = kernel.kernel_at(L, t).matrix
                    worst["symmetry"] = max(worst["symmetry"], float(np.abs(P - P.T).max()))
                    worst["stochastic"] = max(worst["stochastic"],
                                              float(np.abs(P.sum(axis=1) - 1).max()))
                    lo = float(np.linalg.eigvalsh((P + P.T) / 2).min())
                    worst["min_eig"] = min(worst["min_eig"], lo)
            for t in (0.01, 0.05, math.log(4 / 3) / 3):
                if math.exp(-3 * t) >= 0.75:
                    m = kernel.min_restricted_eigenvalue(g, t, 3)
                    bound_rows.append({"graph": family, "n": n, "t": t, "min_eigenvalue": m})
                    ok &= m >= 0.5
    ok &= worst["symmetry"] <= 1e-10 and worst["stochastic"] <= 1e-12
    ok &= worst["min_eig"] >= -1e-10 and worst["uniform_residual"] <= 1e-12
    return bool(ok), {**worst, "half_bound": bound_rows}


# -- 5 --------------------------------------------------------------------------

def transport_identity(seed=0, workers=1):
    rng = stream(seed, 5)
    rows, ok = [], True
    graphs = [(graph_build("complete", n=8), 0.5), (graph_build("path", n=8), 1.0)]
    for c in range(20):
        g, t = graphs[c % 2]
        k = int(rng.integers(1, 4))
        S = SubsetMask.from_positions(8, rng.choice(8, k, replace=False))
        S2 = SubsetMask.from_positions(8, rng.choice(8, k, replace=False))
        exact = kernel.kernel_entry(g, S, S2, t)
        est = estimators.estimate_character_correlation(g, S, S2, t, 100_000, seed, workers,
                                                        key=(5, c))
        z = _z(est, exact)
        ok &= abs(z) <= SIGMAS
        rows.append({"graph": g.family, "t": t, "S": str(S), "S2": str(S2), "exact": exact,
                     "estimate": est.estimate, "stderr": est.stderr, "z": z})
    return ok, {"rows": rows}


# -- 6 --------------------------------------------------------------------------

def conservation(seed=0, workers=1):
    exact_rows, ok = [], True
    for family, n in (("complete", 8), ("path", 8), ("isolated_edges", 8), ("grid2d", 9)):
        f = zoo_build("parity", n=n)
        g = graph_for_size(family, n)
        sp = transform(f)
        for t in (0.0, 0.25, 1.0, 4.0, 50.0):
            v = kernel.exact_exclusion_correlation(sp, g, t)
            ok &= v == 1.0
            exact_rows.append({"graph": family, "t": t, "value": v})
    flips = {}
    for c, family in enumerate(("complete", "path")):
        f = zoo_build("parity", n=10)
        res = estimators.estimate_flip_probability(f, graph_for_size(family, 10), 1.0, 1_000_000,
                                                   seed, workers, key=(6, c))
        flips[family] = res.extra["flips"]
        ok &= res.extra["flips"] == 0 and res.estimate == 0.0
    return bool(ok), {"exact": exact_rows, "flips_in_1e6": flips}


# -- 7 --------------------------------------------------------------------------

def example_contrast(seed=0, workers=1):
    params = {"support": "first-half"}
    comp = estimators.sensitivity_sweep("parity", [8, 16, 32], "complete", [1.0], 200_000, seed,
                                        params=params, workers=workers)
    path = estimators.sensitivity_sweep("parity", [8, 16, 32], "path", [1.0], 200_000, seed,
                                        params=params, workers=workers)
    comp_res = [r.result for r in comp]
    path_res = [r.result for r in path]
    decreasing = estimators.strictly_decreasing(comp_res, SIGMAS)
    persistent = path_res[-1].estimate >= 0.5 * path_res[0].estimate
    return decreasing and persistent, {
        "complete": [r.record() for r in comp], "path": [r.record() for r in path],
        "complete_decreasing": decreasing, "path_ratio": path_res[-1].estimate / path_res[0].estimate}


# -- 8 --------------------------------------------------------------------------

def cancellation(seed=0, workers=1):
    rows, ok = [], True
    for m in (2, 3, 4):
        g = graph_build("isolated_edges", m=m)
        f = transform(zoo_build("count_band", n=2 * m, width=2))
        h = transform(zoo_build("flipped_pairs", edges=m))
        sf, sh = (kernel.exact_exclusion_correlation(s, g, 1.0) for s in (f, h))
        af, ah = (kernel.exact_absolute_correlation(s, g, 1.0) for s in (f, h))
        ok &= sh < sf and abs(af - ah) <= 1e-10
        rows.append({"edges": m, "signed_f": sf, "signed_g": sh, "absolute_f": af,
                     "absolute_g": ah})
    return bool(ok), {"rows": rows}


# -- 9 --------------------------------------------------------------------------

def triple_coupling(seed=0, workers=1):
    audits = [couplings.hamming_audit(n, 1.0, 1_000_000, seed, workers) for n in (10, 100)]
    ok = all(a["violations"] == 0 for a in audits)
    g10 = graph_build("complete", n=10)
    (b,) = couplings.n01_statistics(g10, math.log(2), 100_000, seed, fixed_ones=5, workers=workers)
    mean_z = (b.mean - b.expected_mean) / b.mean_stderr
    ok &= abs(mean_z) <= SIGMAS and abs(b.expected_mean - 1.25) < 1e-12
    g100 = graph_build("complete", n=100)
    buckets = couplings.n01_statistics(g100, 1.0, 200_000, seed, min_bucket=100, workers=workers)
    var_ok = all(r.variance <= r.variance_bound + SIGMAS * r.variance_stderr for r in buckets)
    ok &= var_ok
    return bool(ok), {"audits": audits, "conditional_mean": b.record(), "mean_z": mean_z,
                      "max_variance": max(r.variance for r in buckets),
                      "variance_bound": buckets[0].variance_bound, "buckets": len(buckets)}


# -- 10 -------------------------------------------------------------------------

def domination(seed=0, workers=1):
    reports = couplings.lemma3_grid(samples=100_000, seed=seed, workers=workers)
    return all(r.verdict for r in reports), {"cells": [r.record() for r in reports]}


# -- 11 -------------------------------------------------------------------------

def pivotal_bound(seed=0, workers=1):
    checked, worst_gap, ok = 0, math.inf, True
    for f in zoo_cases(12):
        sp = transform(f)
        for k in (1, 2, 3):
            for pts in itertools.combinations(range(f.n), k):
                P = SubsetMask.from_positions(f.n, pts)
                mass, piv = superset_mass(sp, P), jointly_pivotal(f, P)
                ok &= mass <= piv
                worst_gap = min(worst_gap, piv - mass)
                checked += 1
    return bool(ok), {"pairs_checked": checked, "min_slack": worst_gap}


# -- 12 -------------------------------------------------------------------------

MEDIUM_SAMPLES = 120_000


def percolation_trends(seed=0, workers=1):
    dual = percolation.crossing_probability(percolation.rhombus(32), 100_000, seed)
    dual_ok = abs(dual.estimate - 0.5) <= SIGMAS * dual.stderr
    cg_rows = percolation.complete_graph_crossing([16, 32, 64], 1.0, 100_000, seed, workers)
    cg = [estimators.EstimatorResult(r["estimate"], r["stderr"], r["samples"], seed) for r in cg_rows]
    cg_ok = estimators.strictly_decreasing(cg, SIGMAS)
    sw = [percolation.crossing_switches(n, 1.0, 200, seed) for n in (16, 32, 64)]
    sw_ok = all(b.estimate - a.estimate > SIGMAS * math.hypot(a.stderr, b.stderr)
                for a, b in zip(sw, sw[1:]))
    mr_rows = percolation.medium_range_experiment([32, 64, 128], 0.5, 1.0, MEDIUM_SAMPLES, seed,
                                                  workers=workers, baseline=False)
    mr = [estimators.EstimatorResult(r["estimate"], r["stderr"], r["samples"], seed) for r in mr_rows]
    mr_ok = estimators.strictly_decreasing(mr, SIGMAS)
    return dual_ok and cg_ok and sw_ok and mr_ok, {
        "duality": dual.record(), "duality_ok": dual_ok,
        "complete_graph": cg_rows, "complete_graph_ok": cg_ok,
        "switches": [s.record() for s in sw], "switches_ok": sw_ok,
        "medium_range": mr_rows, "medium_range_ok": mr_ok}


# -- 13 -------------------------------------------------------------------------

DETERMINISM_CONFIGS = (
    {"command": "sweep", "function": {"family": "parity", "params": {"support": "first-half"}},
     "graphs": ["complete", "path"], "grid": {"n": [8, 12], "t": [0.5, 1.0]}, "samples": 20_000},
    {"command": "couple", "tasks": ["lemma3"], "lemma3": {"sizes": [20], "fractions": [0.1, 0.3],
                                                          "times": [1.0]}, "samples": 20_000},
    {"command": "exact", "function": {"family": "majority", "params": {"n": 5}},
     "graphs": ["path"], "grid": {"t": [0.5, 1.0]}, "phi": [0.5, 2.0]},
    {"command": "perc", "experiment": "complete_graph", "grid": {"n": [8, 12], "t": [1.0]},
     "samples": 8_192},
)


def determinism(seed=0, workers=1):
    from .cli import run_config

    identical, files = True, 0
    with tempfile.TemporaryDirectory() as tmp:
        for c, config in enumerate(DETERMINISM_CONFIGS):
            dirs = []
            for run, w in enumerate((1, 1, 2)):
                out = Path(tmp) / f"c{c}_r{run}"
                status = run_config(dict(config, seed=seed, workers=w, out=str(out)))
                if status != 0:
                    return False, {"failed_config": c}
                dirs.append(out)
            names = sorted(p.name for p in dirs[0].iterdir())
            for d in dirs[1:]:
                identical &= sorted(p.name for p in d.iterdir()) == names
                for name in names:
                    identical &= filecmp.cmp(dirs[0] / name, d / name, shallow=False)
                    files += 1
    return bool(identical), {"files_compared": files, "workers": [1, 1, 2]}


CRITERIA = {
    1: ("Exact spectral identities", spectral_identities, 10),
    2: ("Noise-correlation oracle", noise_oracle, 60),
    3: ("Exclusion-correlation oracle", exclusion_oracle, 300),
    4: ("Kernel structure", kernel_structure, 120),
    5: ("Character transport identity", transport_identity, 120),
    6: ("Conservation laws", conservation, None),
    7: ("Complete vs path contrast", example_contrast, 120),
    8: ("Sign cancellation on isolated edges", cancellation, None),
    9: ("Triple coupling", triple_coupling, None),
    10: ("Binomial domination", domination, 600),
    11: ("Jointly-pivotal spectral bound", pivotal_bound, None),
    12: ("Percolation trends", percolation_trends, 1800),
    13: ("Determinism", determinism, None),
}


def run_criterion(number: int, seed: int = 0, workers: int = 1) -> Check:
    title, fn, budget = CRITERIA[number]
    start = time.perf_counter()
    passed, details = fn(seed=seed, workers=workers)
    return Check(number, title, bool(passed), details, time.perf_counter() - start, budget)


def run_all(numbers=None, seed: int = 0, workers: int = 1, echo=print) -> list[Check]:
    checks = []
    for number in numbers or sorted(CRITERIA):
        check = run_criterion(number, seed, workers)
        if echo:
            echo(check.line())
        checks.append(check)
    return checks
