"""Experiment runner.

    subgcomp <command> --config cfg.json [--set key=value ...] [--seed S] [--out DIR]

Exit status: 0 when every check passes, 2 when a mathematical check fails
(the failing check is named on stderr and in summary.json), 1 on input or
configuration errors.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .chaining import (GroupAction, covering_profile, cyclic_action, fernique_sandwich_check,
                       rademacher_image, symmetric_action)
from .comparison import (GaussianExpectation, estimate_constant, family_from_spec,
                         sup_decomposition_check)
from .core import (DiscreteLaw, GaussianSpec, MeasureOnT, empirical_law, natural_metric,
                   sample_gaussian)
from .errors import ConfigError, InputError, InputMissing, PreconditionFailed, SubgError
from .serialize import dumps
from .tensorization import RationalMeasure, convergence_study
from .transport import (fernique_functional, gaussian_grid, mix_with_product,
                        strassen_feasibility, strassen_min_c)

COMMANDS = ("fernique", "tensorize", "chaining", "compare", "strassen", "identity", "sample")


class CheckFailed(Exception):
    def __init__(self, name, detail=""):
        super().__init__(f"{name}: {detail}" if detail else name)
        self.name = name


# ---------------------------------------------------------------------------
# configuration


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a mapping")
    node[parts[-1]] = _parse_value(value)


def load_config(command, path=None, overrides=(), seed=None, out=None):
    cfg = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputMissing(f"config file {path} not found")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        base = path.parent
    cfg = copy.deepcopy(cfg)
    cfg.setdefault("command", command)
    if cfg["command"] != command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
    cfg.setdefault("inputs", {})
    cfg.setdefault("parameters", {})
    for item in overrides:
        apply_override(cfg, item)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output"] = str(out)
    if "seed" not in cfg:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2 ** 64:
        raise ConfigError("seed must be a 64-bit nonnegative integer")
    if "output" not in cfg:
        raise ConfigError("an output directory is required (config 'output' or --out)")
    resolved = {}
    for key, rel in cfg["inputs"].items():
        p = Path(rel)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise InputMissing(f"input {key!r} not found at {p}")
        resolved[key] = p
    return cfg, resolved


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _load(inputs, key, kind):
    if key not in inputs:
        raise ConfigError(f"input {key!r} is required")
    data = _read_json(inputs[key])
    return kind.from_dict(data)


def _load_process(inputs):
    if "law" in inputs:
        return _load(inputs, "law", DiscreteLaw)
    if "spec" in inputs:
        return _load(inputs, "spec", GaussianSpec)
    raise ConfigError("need a 'law' or 'spec' input")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    Path(path).write_text(buf.getvalue(), newline="")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


def emit_plotdata(table, path):
    """Plain CSV of (x, y, y_lo, y_hi) rows for external plotting."""
    rows = list(table.plot_columns() if hasattr(table, "plot_columns") else table)
    if not rows:
        raise OSError(f"refusing to write empty plot data to {path}")
    _write_csv(path, ["x", "y", "y_lo", "y_hi"], rows)
    return Path(path)


# ---------------------------------------------------------------------------
# commands; each returns (summary dict, list of failed check names)


def cmd_fernique(cfg, inputs, outdir):
    law = _load(inputs, "law", DiscreteLaw)
    mu = _load(inputs, "mu", MeasureOnT)
    tp = fernique_functional(law, mu)
    return tp.to_dict(), []


def cmd_identity(cfg, inputs, outdir):
    law = _load(inputs, "law", DiscreteLaw)
    m = cfg["parameters"].get("m", [0.0] * law.n)
    rep = sup_decomposition_check(law, m)
    return rep.to_dict(), [] if rep.passed else ["sup_decomposition"]


def cmd_tensorize(cfg, inputs, outdir):
    p = cfg["parameters"]
    law = _load_process(inputs)
    mu = RationalMeasure.from_measure(_load(inputs, "mu", MeasureOnT))
    Ns = [int(n) for n in p.get("Ns", [1, 2, 4])]
    table = convergence_study(law, mu, Ns, int(p.get("samples", 100_000)), cfg["seed"],
                              exact_F=p.get("exact_F"))
    (outdir / "study.csv").write_text(table.to_csv(), newline="")
    emit_plotdata(table, outdir / "plot.csv")
    failed = []
    gaps = [abs(r["gap"]) for r in table.rows]
    if len(gaps) >= 2 and not gaps[-1] < gaps[0]:
        failed.append("tensorization_gap_shrinks")
    return {"exact_F": table.exact_F, "rows": table.rows,
            "monotonicity_flags": [list(f) for f in table.monotone_flags]}, failed


def _action(spec, desc):
    if desc in (None, "cyclic"):
        return cyclic_action(spec.n)
    if desc == "symmetric":
        return symmetric_action(spec.n)
    if isinstance(desc, list):
        return GroupAction(tuple(desc))
    raise ConfigError(f"unknown action {desc!r}")


def cmd_chaining(cfg, inputs, outdir):
    p = cfg["parameters"]
    spec = _load(inputs, "spec", GaussianSpec)
    if "law" in inputs:
        law_x = _load(inputs, "law", DiscreteLaw)
    elif p.get("process", "rademacher") == "rademacher":
        law_x = rademacher_image(spec)
    else:
        law_x = spec
    metric = natural_metric(spec)
    rep = fernique_sandwich_check(law_x, spec, _action(spec, p.get("action")),
                                  int(p.get("samples", 100_000)), cfg["seed"])
    scales = p.get("scales") or rep.entropy.scales
    prof = covering_profile(metric, scales)
    (outdir / "covering.csv").write_text(prof.to_csv(), newline="")
    return rep.to_dict(), [] if rep.passed else ["dudley_fernique_sandwich"]


def cmd_compare(cfg, inputs, outdir):
    p = cfg["parameters"]
    law = _load(inputs, "law", DiscreteLaw)
    witnesses = family_from_spec(p.get("witnesses", {"canonical": True}), law.n, law)
    c_grid = p.get("c_grid")
    if c_grid is None:
        lo, hi, step = p.get("c_range", [1.0, 2.0, 0.01])
        c_grid = [round(lo + i * step, 12) for i in range(int(round((hi - lo) / step)) + 1)]
    gauss_method = p.get("gauss", "auto")
    gauss = GaussianExpectation(law.n, gauss_method, samples=int(p.get("samples", 200_000)),
                                seed=cfg["seed"])
    rep = estimate_constant(law, witnesses, c_grid, gauss, cfg["seed"],
                            strassen_grid_size=p.get("strassen_grid_size"))
    (outdir / "constant.csv").write_text(rep.to_csv(), newline="")
    (outdir / "witnesses.json").write_text(dumps({"witnesses": witnesses}))
    emit_plotdata([(r["c"], r["worst_gap"], r["worst_gap"], r["worst_gap"]) for r in rep.rows],
                  outdir / "plot.csv")
    summary = {"smallest_c": rep.smallest_c, "strassen_c": rep.strassen_c,
               "witness_count": len(witnesses), "gauss_method": gauss.method}
    return summary, [] if rep.smallest_c is not None else ["convex_order_no_c_in_grid"]


def cmd_strassen(cfg, inputs, outdir):
    p = cfg["parameters"]
    law = _load(inputs, "law", DiscreteLaw)
    grid = gaussian_grid(law.n, size=int(p.get("grid_size", 41)), index=law.index)
    tol = float(p.get("tol", 1e-6))
    results = []
    failed = []
    for c in p.get("c_values", []):
        res = strassen_feasibility(law, grid, float(c), tol)
        entry = res.to_dict()
        if res.feasible:
            mixed = mix_with_product(res, law, grid, 2.0 * res.c)
            entry["mixed_2c"] = mixed.to_dict()
            if not mixed.feasible:
                failed.append("strassen_upward_closure")
        results.append(entry)
    summary = {"results": results}
    if p.get("bisect", True):
        summary["min_c"] = strassen_min_c(law, grid, tol=tol)
    return summary, failed


def cmd_sample(cfg, inputs, outdir):
    p = cfg["parameters"]
    spec = _load(inputs, "spec", GaussianSpec)
    batch = sample_gaussian(spec, int(p.get("m", 1000)), cfg["seed"])
    _write_csv(outdir / "samples.csv", [str(l) for l in spec.index.labels], batch.rows.tolist())
    law = empirical_law(batch)
    (outdir / "empirical_law.json").write_text(dumps(law.to_dict()))
    return {"m": batch.m, "distinct_atoms": law.k, "sample_mean": batch.rows.mean(axis=0)}, []


HANDLERS = {"fernique": cmd_fernique, "identity": cmd_identity, "tensorize": cmd_tensorize,
            "chaining": cmd_chaining, "compare": cmd_compare, "strassen": cmd_strassen,
            "sample": cmd_sample}


def run(cfg, inputs):
    """Execute one configured experiment; returns the exit status."""
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)
    failed = []
    try:
        result, failed = HANDLERS[cfg["command"]](cfg, inputs, outdir)
    except PreconditionFailed as exc:
        result, failed = {"error": str(exc)}, ["precondition"]
    summary = {
        "command": cfg["command"],
        "config": {k: v for k, v in cfg.items() if k != "output"},
        "versions": {"subgcomp": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "kernels": kernels.BACKEND},
        "result": result,
        "failed_checks": failed,
        "passed": not failed,
    }
    (outdir / "summary.json").write_text(dumps(summary))
    return 2 if failed else 0, failed


def build_parser():
    ap = argparse.ArgumentParser(prog="subgcomp", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry (dotted keys, JSON values)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg, inputs = load_config(args.command, args.config, args.set, args.seed, args.out)
        status, failed = run(cfg, inputs)
    except (ConfigError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SubgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if failed:
        print("check failed: " + ", ".join(failed), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
