"""``xsense`` command line: run an experiment described by a JSON config.

    xsense spectrum|sweep|exact|couple|perc|verify --config FILE [--seed N]
           [--workers K] [--out DIR] [--set key.path=JSON ...]

Flags override config fields. The seed comes from ``--seed``, then the config,
then ``$XSENSE_SEED``, then a built-in default. Configs are fully validated and
all results computed before the output directory is touched, so a rejected or
failed run leaves no files behind.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import couplings, estimators, io, kernel, percolation
from .core import TABULATION_CAP, CapError, TabulationError, influences, zoo_build
from .dynamics import graph_build, graph_for_size
from .rng import default_seed
from .spectral import level_energies, transform, write_spectrum_csv

COMMANDS = ("spectrum", "sweep", "exact", "couple", "perc", "verify")
COMMON_KEYS = {"command", "seed", "workers", "out", "samples", "description"}
COMMAND_KEYS = {
    "spectrum": {"function"},
    "sweep": {"function", "graphs", "grid"},
    "exact": {"function", "graphs", "grid", "phi", "debug"},
    "couple": {"tasks", "hamming", "n01", "lemma3", "boundary"},
    "perc": {"experiment", "grid", "alpha", "pad_factor", "baseline", "shape", "a", "b"},
    "verify": {"criteria"},
}
PERC_EXPERIMENTS = ("duality", "complete_graph", "switches", "medium_range", "patch")
COUPLE_TASKS = ("hamming", "n01", "lemma3", "boundary")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# -- validation helpers -------------------------------------------------------------

def _need(cfg, key, kind=None):
    if key not in cfg:
        raise ConfigError(f"missing field {key!r}")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"field {key!r} must be {getattr(kind, '__name__', kind)}")
    return value


def _numbers(values, key, integer=False, positive=False, nonneg=False):
    if not isinstance(values, list) or not values:
        raise ConfigError(f"grid {key!r} must be a nonempty list")
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"grid {key!r} has a non-numeric entry {v!r}")
        if integer and int(v) != v:
            raise ConfigError(f"grid {key!r} needs integers, got {v!r}")
        if positive and v <= 0:
            raise ConfigError(f"grid {key!r} needs positive values, got {v!r}")
        if nonneg and v < 0:
            raise ConfigError(f"grid {key!r} needs nonnegative values, got {v!r}")
        out.append(int(v) if integer else float(v))
    return out


def _int(cfg, key, default, minimum=1):
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"field {key!r} must be an integer >= {minimum}")
    return v


def _function_spec(cfg):
    spec = _need(cfg, "function", dict)
    family = _need(spec, "family", str)
    params = spec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("function.params must be an object")
    return family, dict(params)


def _build_function(family, params):
    try:
        return zoo_build(family, **params)
    except CapError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"function {family}: {exc}") from None


def _graph_families(cfg):
    graphs = cfg.get("graphs")
    if not isinstance(graphs, list) or not graphs or not all(isinstance(g, str) for g in graphs):
        raise ConfigError("field 'graphs' must be a nonempty list of family names")
    return graphs


def _graph(family, n):
    try:
        return graph_for_size(family, n)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"graph {family} with n={n}: {exc}") from None


def _validate_common(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    command = cfg.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}")
    unknown = set(cfg) - COMMON_KEYS - COMMAND_KEYS[command]
    if unknown:
        raise ConfigError(f"unknown fields for {command}: {', '.join(sorted(unknown))}")
    seed = cfg.get("seed", default_seed())
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    workers = _int(cfg, "workers", 1)
    return command, seed, workers


# -- commands -----------------------------------------------------------------------
# Each returns a list of (file name, writer(path, header)) pairs; nothing is written yet.

def _csv(rows, columns=None):
    return lambda path, header: io.write_csv(path, rows, header, columns)


def _json(report, cfg, seed):
    return lambda path, header: io.write_json(path, report, cfg_for_hash(cfg), seed)


def cmd_spectrum(cfg, seed, workers):
    family, params = _function_spec(cfg)
    f = _build_function(family, params)
    if not f.tabulated:
        raise CapError(f"{f.describe()} has {f.n} bits, over the tabulation cap of {TABULATION_CAP} bits")
    sp = transform(f)
    energy = level_energies(sp)
    inf = influences(f)
    levels = [{"level": k, "energy": float(e)} for k, e in enumerate(energy)]
    report = {"function": f.describe(), "n": f.n, "mean": float(sp.coefficients[0]),
              "parseval": sp.parseval(), "level_energies": [float(e) for e in energy],
              "total_influence": inf.total, "sum_squared_influences": inf.ii}
    return [("spectrum.csv", lambda path, header: write_spectrum_csv(sp, path, header)),
            ("levels.csv", _csv(levels)), ("spectrum.json", _json(report, cfg, seed))]


def _grid(cfg):
    grid = _need(cfg, "grid", dict)
    unknown = set(grid) - {"n", "t", "eps"}
    if unknown:
        raise ConfigError(f"unknown grid axes: {', '.join(sorted(unknown))}")
    return grid


def cmd_sweep(cfg, seed, workers):
    family, params = _function_spec(cfg)
    params.pop("n", None)
    grid = _grid(cfg)
    ns = _numbers(_need(grid, "n"), "n", integer=True, positive=True)
    samples = _int(cfg, "samples", estimators.DEFAULT_SAMPLES, 2)
    if ("t" in grid) == ("eps" in grid):
        raise ConfigError("sweep grid needs exactly one of 't' or 'eps'")
    files, rows_all = [], []
    if "eps" in grid:
        eps = _numbers(grid["eps"], "eps", nonneg=True)
        if any(e > 1 for e in eps):
            raise ConfigError("eps values must lie in [0, 1]")
        for n in ns:
            _build_function(family, {**params, "n": n})
        rows = estimators.sensitivity_sweep(family, ns, None, eps, samples, seed, "eps", params,
                                            workers)
        records = [r.record() for r in rows]
        files.append(("sweep_iid.csv", _csv(records)))
        rows_all += records
    else:
        ts = _numbers(grid["t"], "t", nonneg=True)
        graphs = _graph_families(cfg)
        for n in ns:
            _build_function(family, {**params, "n": n})
            for gf in graphs:
                _graph(gf, n)
        for gf in graphs:
            rows = estimators.sensitivity_sweep(family, ns, gf, ts, samples, seed, "t", params,
                                                workers)
            records = [r.record() for r in rows]
            files.append((f"sweep_{gf}.csv", _csv(records)))
            rows_all += records
    files.append(("sweep.json", _json({"rows": rows_all}, cfg, seed)))
    return files


def cmd_exact(cfg, seed, workers):
    family, params = _function_spec(cfg)
    f = _build_function(family, params)
    graphs = [_graph(gf, f.n) for gf in _graph_families(cfg)]
    ts = _numbers(_need(_grid(cfg), "t"), "t", nonneg=True)
    phis = _numbers(cfg["phi"], "phi", nonneg=True) if "phi" in cfg else []
    debug = bool(cfg.get("debug", False))
    sp = transform(f)
    rows, phi_rows, files = [], [], []
    for g in graphs:
        for t in ts:
            rows.append({"graph": g.family, "n": g.n, "t": t,
                         "correlation": kernel.exact_exclusion_correlation(sp, g, t),
                         "absolute_correlation": kernel.exact_absolute_correlation(sp, g, t)})
        for C in phis:
            phi_rows.append({"graph": g.family, "n": g.n, "C": C,
                             "phi_mass": kernel.phi_mass(sp, g, C),
                             "phi_mass_without_level_uniform": kernel.phi_mass(sp, g, C, True)})
        if debug:
            for k in range(1, min(f.n, 3) + 1):
                L = kernel.level_generator(g, k)
                E = kernel.level_eigen(L)
                files.append((f"eigen_{g.family}_k{k}.csv",
                              lambda path, header, E=E: kernel.write_eigen_csv(E, path, header)))
                for i, t in enumerate(ts):
                    K = kernel.kernel_at(L, t)
                    files.append((f"kernel_{g.family}_k{k}_t{i}.csv",
                                  lambda path, header, K=K: kernel.write_kernel_csv(K, path, header)))
    files.append(("exact.csv", _csv(rows)))
    if phi_rows:
        files.append(("phi.csv", _csv(phi_rows)))
    files.append(("exact.json", _json({"function": f.describe(), "correlations": rows,
                                       "phi": phi_rows}, cfg, seed)))
    return files


def cmd_couple(cfg, seed, workers):
    tasks = cfg.get("tasks", list(COUPLE_TASKS[:3]))
    if not isinstance(tasks, list) or not tasks or any(t not in COUPLE_TASKS for t in tasks):
        raise ConfigError(f"tasks must be a nonempty list drawn from {', '.join(COUPLE_TASKS)}")
    samples = _int(cfg, "samples", estimators.DEFAULT_SAMPLES, 2)
    sub = {}
    for task in tasks:
        block = cfg.get(task, {})
        if not isinstance(block, dict):
            raise ConfigError(f"field {task!r} must be an object")
        sub[task] = block
    # validate all parameters before running anything
    ham = sub.get("hamming", {})
    ham_ns = _numbers(ham.get("n", [10, 100]), "hamming.n", integer=True, positive=True)
    ham_t = float(ham.get("t", 1.0))
    n01 = sub.get("n01", {})
    n01_n = _int(n01, "n", 10, 2)
    n01_t = float(n01.get("t", math.log(2)))
    n01_fixed = n01.get("fixed_ones")
    if n01_fixed is not None and (not isinstance(n01_fixed, int) or not 0 <= n01_fixed <= n01_n):
        raise ConfigError("n01.fixed_ones must be an integer in 0..n")
    lem = sub.get("lemma3", {})
    sizes = _numbers(lem.get("sizes", [20, 60, 100]), "lemma3.sizes", integer=True, positive=True)
    fracs = _numbers(lem.get("fractions", [0.1, 0.3, 0.45]), "lemma3.fractions", positive=True)
    times = _numbers(lem.get("times", [0.5, 1.0, 2.0]), "lemma3.times", nonneg=True)
    if any(int(round(fr * V)) * 2 >= V for V in sizes for fr in fracs):
        raise ConfigError("lemma3 needs |S| < |V|/2 in every cell")
    bnd = sub.get("boundary", {})
    bnd_n = _int(bnd, "n", 9, 1)
    bnd_t = float(bnd.get("t", 0.2))
    if "boundary" in tasks:
        _build_function("majority", {"n": bnd_n})
    if ham_t <= 0 or n01_t < 0 or bnd_t <= 0:
        raise ConfigError("coupling times must be positive")

    report, files = {}, []
    if "hamming" in tasks:
        report["hamming"] = [couplings.hamming_audit(n, ham_t, samples, seed, workers)
                             for n in ham_ns]
    if "n01" in tasks:
        g = graph_build("complete", n=n01_n)
        buckets = [b.record() for b in couplings.n01_statistics(g, n01_t, samples, seed,
                                                                n01_fixed, workers=workers)]
        report["n01"] = buckets
        files.append(("n01.csv", _csv(buckets)))
    if "lemma3" in tasks:
        cells = [r.record() for r in couplings.lemma3_grid(sizes, fracs, times, samples, seed,
                                                           workers)]
        report["lemma3"] = cells
        files.append(("lemma3.csv", _csv(cells)))
    if "boundary" in tasks:
        report["boundary"] = couplings.boundary_hit_experiment(
            zoo_build("majority", n=bnd_n), bnd_t, samples, seed)
    files.append(("couple.json", _json(report, cfg, seed)))
    return files


def cmd_perc(cfg, seed, workers):
    exp = cfg.get("experiment")
    if exp not in PERC_EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(PERC_EXPERIMENTS)}")
    grid = cfg.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid must be an object")
    ns = _numbers(grid.get("n", [16]), "n", integer=True, positive=True)
    ts = _numbers(grid.get("t", [1.0]), "t", nonneg=True)
    samples = _int(cfg, "samples", estimators.DEFAULT_SAMPLES, 2)
    rows, files = [], []
    if exp == "patch":
        shape = cfg.get("shape", "rhombus")
        patch = _patch(shape, ns[0], cfg)
        files.append(("patch.csv", lambda path, header: patch.write_csv(path, header)))
        report = {"shape": shape, "sites": patch.size, "left": int(patch.is_left.sum()),
                  "right": int(patch.is_right.sum())}
    elif exp == "duality":
        for n in ns:
            res = percolation.crossing_probability(percolation.rhombus(n), samples, seed)
            rows.append({"n": n, **res.record()})
        report = {"rows": rows}
    elif exp == "complete_graph":
        for t in ts:
            rows += percolation.complete_graph_crossing(ns, t, samples, seed, workers)
        report = {"rows": rows}
    elif exp == "switches":
        for t in ts:
            rows += [percolation.crossing_switches(n, t, samples, seed).record() for n in ns]
        report = {"rows": rows}
    else:
        alpha = cfg.get("alpha", 0.5)
        if not isinstance(alpha, (int, float)) or alpha <= 0:
            raise ConfigError("alpha must be positive")
        pad = cfg.get("pad_factor", 2.0)
        for t in ts:
            rows += percolation.medium_range_experiment(ns, float(alpha), t, samples, seed,
                                                        float(pad), workers,
                                                        bool(cfg.get("baseline", True)))
        report = {"rows": rows}
    if rows:
        files.append((f"perc_{exp}.csv", _csv(rows)))
    files.append((f"perc_{exp}.json", _json(report, cfg, seed)))
    return files


def _patch(shape, n, cfg):
    try:
        return percolation.patch_from_params(shape, n, cfg.get("a", 1.0), cfg.get("b", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_verify(cfg, seed, workers):
    from . import acceptance

    numbers = cfg.get("criteria", sorted(acceptance.CRITERIA))
    if (not isinstance(numbers, list) or not numbers
            or any(c not in acceptance.CRITERIA for c in numbers)):
        raise ConfigError(f"criteria must be a nonempty list drawn from 1..{len(acceptance.CRITERIA)}")
    checks = acceptance.run_all(numbers, seed, workers)
    report = {"criteria": [c.record() for c in checks], "all_passed": all(c.ok for c in checks)}
    verify_status["ok"] = report["all_passed"]
    return [("verify.json", _json(report, cfg, seed))]


verify_status = {"ok": True}
HANDLERS = {"spectrum": cmd_spectrum, "sweep": cmd_sweep, "exact": cmd_exact,
            "couple": cmd_couple, "perc": cmd_perc, "verify": cmd_verify}


def run_config(cfg: dict, err=None) -> int:
    """Validate, compute, then write. Returns the process exit status."""
    err = err or sys.stderr
    try:
        command, seed, workers = _validate_common(cfg)
        out = cfg.get("out")
        if out is not None and not isinstance(out, str):
            raise ConfigError("out must be a directory path")
        verify_status["ok"] = True
        files = HANDLERS[command](cfg, seed, workers)
    except CapError as exc:
        print(f"xsense: refused: {exc}", file=err)
        return 3
    except (ConfigError, TabulationError) as exc:
        print(f"xsense: invalid config: {exc}", file=err)
        return 2
    if out is not None:
        target = Path(out)
        target.mkdir(parents=True, exist_ok=True)
        header = io.header_rows(cfg_for_hash(cfg), seed)
        for name, writer in files:
            writer(target / name, header)
    return 0 if verify_status["ok"] else 1


def cfg_for_hash(cfg: dict) -> dict:
    """The config minus run-placement fields (output directory, worker count)."""
    return {k: v for k, v in cfg.items() if k not in ("out", "workers")}


def _set_path(cfg, dotted, raw):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not an object")
    node[keys[-1]] = value


def build_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    if cfg.get("command", args.command) != args.command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {args.command!r}")
    cfg["command"] = args.command
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_path(cfg, key, raw)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.workers is not None:
        cfg["workers"] = args.workers
    if args.out is not None:
        cfg["out"] = args.out
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xsense", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="master seed (overrides config and $XSENSE_SEED)")
    parser.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field (dotted path, JSON value)")
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"xsense: invalid config: {exc}", file=sys.stderr)
        return 2
    return run_config(cfg)


if __name__ == "__main__":
    sys.exit(main())
