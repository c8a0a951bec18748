"""Batch front door: parse a YAML run configuration, execute a named
pipeline, export CSV results, plot-ready data, and a JSON summary.

Exit status: 0 when every hard check passes, 2 on property failures (the
report is still written), 1 on configuration or module errors.
"""

import argparse
import csv
import difflib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import space as _space
from . import systems as _systems
from . import errfn as _errfn
from . import chains as _chains
from . import conley as _conley
from . import lyapunov as _lyap
from ._kernels import SINK, USE_NUMBA

PIPELINES = ("chain-recurrence", "components", "conley-decomposition",
             "region-lyapunov", "global-lyapunov", "flow-lyapunov", "verify")

_SCHEMA = {
    "space": {"kind", "box", "cells", "metric", "matrix"},
    "system": {"kind", "name", "path", "T", "escape", "directionality"},
    "epsilon": {"constant", "formula", "values"},
    "pipeline": {"name", "epsilon0", "levels", "horizon", "sample_budget",
                 "K_max", "J_max", "region_cap", "D_budget", "quad_nodes",
                 "region", "kind", "T", "field_csv", "m"},
    "output": {"dir", "formats"},
}

_DEFAULTS = {
    "space": {"kind": "grid", "metric": "euclidean"},
    "system": {"kind": "builtin", "T": 1.0, "escape": "absorb",
               "directionality": "semiflow"},
    "epsilon": {},
    "pipeline": {"levels": 5, "horizon": 100, "sample_budget": 16,
                 "K_max": 20, "J_max": 20, "region_cap": 32,
                 "D_budget": None, "quad_nodes": 32, "m": 1},
    "output": {"dir": "out", "formats": ["csv", "json", "plot"]},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    space: dict
    system: dict
    epsilon: dict
    pipeline: dict
    output: dict
    seed: int = 0

    def echo(self):
        return {
            "space": self.space, "system": self.system,
            "epsilon": self.epsilon, "pipeline": self.pipeline,
            "output": self.output, "seed": self.seed,
        }


def _check_keys(block_name, block, known):
    for key in block:
        if key not in known:
            hint = difflib.get_close_matches(key, known, n=1)
            suggest = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(
                f"unknown key {key!r} in [{block_name}]{suggest}")


def parse_config(text, base_dir="."):
    """Validated RunConfig with defaults filled; unknown keys are fatal."""
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    top_known = set(_SCHEMA) | {"seed"}
    _check_keys("top level", raw, top_known)
    blocks = {}
    for name, known in _SCHEMA.items():
        block = raw.get(name, {}) or {}
        if not isinstance(block, dict):
            raise ConfigError(f"[{name}] must be a mapping")
        _check_keys(name, block, known)
        merged = dict(_DEFAULTS[name])
        merged.update(block)
        blocks[name] = merged
    cfg = RunConfig(space=blocks["space"], system=blocks["system"],
                    epsilon=blocks["epsilon"], pipeline=blocks["pipeline"],
                    output=blocks["output"], seed=int(raw.get("seed", 0)))
    pname = cfg.pipeline.get("name")
    if pname not in PIPELINES:
        hint = difflib.get_close_matches(str(pname), PIPELINES, n=1)
        suggest = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown pipeline {pname!r}{suggest}")
    for key in ("matrix", "path"):
        for block in (cfg.space, cfg.system):
            p = block.get(key)
            if p is not None:
                full = os.path.join(base_dir, p)
                if not os.path.exists(full):
                    raise ConfigError(f"referenced file does not exist: {p}")
                block[key] = full
    if isinstance(cfg.epsilon.get("values"), str):
        full = os.path.join(base_dir, cfg.epsilon["values"])
        if not os.path.exists(full):
            raise ConfigError(
                f"referenced file does not exist: {cfg.epsilon['values']}")
        cfg.epsilon["values"] = full
    for key in ("levels", "horizon", "sample_budget", "K_max", "J_max",
                "region_cap", "quad_nodes", "m"):
        v = cfg.pipeline.get(key)
        if v is not None and int(v) < 1:
            raise ConfigError(f"pipeline.{key} must be >= 1")
    return cfg


def build_space(cfg):
    blk = cfg.space
    if blk["kind"] == "grid":
        if "box" not in blk or "cells" not in blk:
            raise ConfigError("grid space needs box and cells")
        return _space.build_grid_space(blk["box"], blk["cells"], blk["metric"])
    if blk["kind"] == "finite":
        mat = np.loadtxt(blk["matrix"], delimiter=",", ndmin=2)
        return _space.build_finite_space(list(range(mat.shape[0])), mat)
    raise ConfigError(f"unknown space kind {blk['kind']!r}")


def build_system(cfg, space):
    blk = cfg.system
    kind = blk["kind"]
    if kind == "builtin":
        return _systems.builtin_flow(blk["name"], escape=blk["escape"])
    if kind == "ode":
        return _systems.ode_flow(blk["name"], escape=blk["escape"])
    if kind == "tabulated":
        arr = np.loadtxt(blk["path"], delimiter=",", dtype=np.int64, ndmin=2)
        if arr.shape[1] == 2:
            img = np.full(space.n, SINK, dtype=np.int64)
            img[arr[:, 0]] = arr[:, 1]
        else:
            img = arr[:, 0]
        return _systems.tabulated_system(img, blk["directionality"],
                                         escape=blk["escape"], T=blk["T"])
    raise ConfigError(f"unknown system kind {kind!r}")


def _discrete_over(space, system, T):
    if system.time_kind == "continuous":
        system = _systems.discretize(system, T)
    return _systems.tabulate(system, space)


def build_epsilon(cfg, space):
    blk = cfg.epsilon
    if "constant" in blk:
        return _errfn.make_error(space, float(blk["constant"]))
    if "formula" in blk:
        return _errfn.make_error(space, str(blk["formula"]))
    if "values" in blk:
        vals = np.loadtxt(blk["values"], delimiter=",")
        return _errfn.make_error(space, vals)
    raise ConfigError("epsilon block needs constant, formula, or values")


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _coord_cols(space):
    if space.coords is None:
        return 0
    return space.coords.shape[1]


def _point_rows(space, extra_cols):
    dim = _coord_cols(space)
    for i in range(space.n):
        row = [i]
        if dim:
            row.extend(space.coords[i])
        row.extend(col[i] for col in extra_cols)
        yield row


def _export_points(outdir, name, space, columns, values, formats):
    dim = _coord_cols(space)
    header = ["point_index"] + [f"coord_{k}" for k in range(dim)] + columns
    if "csv" in formats:
        _write_csv(os.path.join(outdir, f"{name}.csv"), header,
                   _point_rows(space, values))
    if "plot" in formats and dim:
        rows = []
        for i in range(space.n):
            x = space.coords[i][0]
            y = space.coords[i][1] if dim > 1 else 0.0
            rows.append((x, y, values[-1][i]))
        _write_csv(os.path.join(outdir, f"plot_{name}.csv"),
                   ["x", "y", "value"], rows)


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def _pipe_chain_recurrence(cfg, space, outdir, formats):
    p = cfg.pipeline
    system = build_system(cfg, space)
    tab = _discrete_over(space, system, cfg.system["T"])
    eps = build_epsilon(cfg, space)
    eps0 = float(p.get("epsilon0") or eps.values.min())
    ladder = _chains.chain_recurrent_limit(space, tab, eps0, int(p["levels"]))
    est = ladder.estimate
    graph = ladder.final_graph
    comps = _chains.chain_components(graph)
    labels = np.full(space.n, -1, dtype=int)
    for ci, c in enumerate(comps):
        labels[c.indices()] = ci
    _export_points(outdir, "recurrence", space,
                   ["recurrent", "component_id"],
                   [est.mask.astype(int), labels], formats)
    checks = [("ladder monotone", ladder.monotone, ladder.violations)]
    summary = {
        "levels": ladder.eps_values,
        "set_sizes": [s.size() for s in ladder.sets],
        "recurrent_points": est.size(),
        "component_count": len(comps),
    }
    return checks, summary


def _pipe_components(cfg, space, outdir, formats):
    checks, summary = _pipe_chain_recurrence(cfg, space, outdir, formats)
    return checks, summary


def _pipe_conley(cfg, space, outdir, formats):
    p = cfg.pipeline
    system = build_system(cfg, space)
    tab = _discrete_over(space, system, cfg.system["T"])
    eps = build_epsilon(cfg, space)
    eps0 = float(p.get("epsilon0") or eps.values.min())
    slack = 1 if space.is_grid else 0
    rep = _conley.conley_decomposition(space, tab, eps0, int(p["levels"]),
                                       int(p["sample_budget"]),
                                       m=int(p["m"]), slack_cells=slack)
    for ri, region in enumerate(rep.regions):
        _export_points(outdir, f"region_{ri}", space,
                       ["in_region", "in_attracting", "in_basin"],
                       [region.trap.region.mask.astype(int),
                        region.attracting.mask.astype(int),
                        region.basin_set.mask.astype(int)], formats)
    with open(os.path.join(outdir, "decomposition_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(rep.summary() + "\n")
        if rep.uncovered.size():
            fh.write(f"uncovered points: {rep.uncovered.indices().tolist()}\n")
    checks = [
        ("transient coverage", rep.uncovered.size() == 0,
         rep.uncovered.indices().tolist()),
        ("ChRec/basin identity per region",
         all(r.chrec_basin_equals_attracting for r in rep.regions),
         [r.seed for r in rep.regions if not r.chrec_basin_equals_attracting]),
    ]
    summary = {
        "recurrent_points": rep.chrec.size(),
        "regions": len(rep.regions),
        "covered": rep.covered.size(),
        "uncovered": rep.uncovered.size(),
        "skipped_seeds": rep.skipped_seeds,
    }
    return checks, summary


def _region_from_config(cfg, space):
    blk = cfg.pipeline.get("region")
    if not blk:
        raise ConfigError("region-lyapunov needs a pipeline.region block")
    lo = np.asarray(blk["min"], dtype=float)
    hi = np.asarray(blk["max"], dtype=float)
    mask = np.all((space.coords >= lo) & (space.coords <= hi), axis=1)
    return _space.PointSet(mask)


def _pipe_region_lyapunov(cfg, space, outdir, formats):
    p = cfg.pipeline
    system = build_system(cfg, space)
    tab = _discrete_over(space, system, cfg.system["T"])
    region = _region_from_config(cfg, space)
    kind = p.get("kind") or "strong"
    T = float(p.get("T") or 1)
    check = _conley.is_trapping(space, tab, region, T=T, kind=kind)
    if not check.certified:
        raise ValueError(
            f"conley: configured region is not {kind}; witness {check.witness}")
    trap = check.trap
    te = _errfn.trapping_error(space, tab, trap, T=T, kind=kind)
    lt = _lyap.region_lyapunov(space, tab, te, trap,
                               int(p["K_max"]), int(p["J_max"]))
    att = _conley.attracting_set(space, tab, trap)
    bas = _conley.basin(space, tab, trap)
    tol = lt.meta["tolerance"]
    vals = lt.values
    zero_ok = np.all(vals[att.mask] <= tol) if att.size() else True
    outside = ~bas.mask
    one_ok = np.all(np.abs(vals[outside] - lt.meta["one_value"]) <= tol) \
        if outside.any() else True
    strict_idx = np.nonzero(bas.mask & ~att.mask & (tab.img != SINK))[0]
    strict_ok = bool(np.all(vals[tab.img[strict_idx]] < vals[strict_idx]))
    _export_points(outdir, "region_lyapunov", space,
                   ["value", "in_attracting", "in_basin"],
                   [vals, att.mask.astype(int), bas.mask.astype(int)], formats)
    checks = [("zero set equals the attracting set", bool(zero_ok), []),
              ("one set equals the basin complement", bool(one_ok), []),
              ("strict decrease on basin minus attracting set",
               strict_ok, [])]
    summary = {"region_size": region.size(), "attracting": att.size(),
               "basin": bas.size(), "tolerance": tol}
    return checks, summary


def _pipe_global(cfg, space, outdir, formats):
    p = cfg.pipeline
    system = build_system(cfg, space)
    tab = _discrete_over(space, system, cfg.system["T"])
    res = _lyap.global_lyapunov(
        space, tab, D_budget=p["D_budget"], K_max=int(p["K_max"]),
        J_max=int(p["J_max"]), region_cap=int(p["region_cap"]))
    _export_points(outdir, "global_lyapunov", space, ["value"],
                   [res.field.values], formats)
    with open(os.path.join(outdir, "verification_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(str(res.verification) + "\n")
    checks = [(c.name, c.passed, c.witnesses) for c in res.verification.checks]
    summary = {
        "regions": len(res.family),
        "component_count": len(res.components),
        "component_values": [v for _, v in res.components],
    }
    return checks, summary


def _pipe_flow(cfg, space, outdir, formats):
    p = cfg.pipeline
    system = build_system(cfg, space)
    if system.time_kind != "continuous":
        raise ConfigError("flow-lyapunov needs a continuous system")
    tab = _discrete_over(space, system, 1.0)
    res = _lyap.global_lyapunov(
        space, tab, D_budget=p["D_budget"], K_max=int(p["K_max"]),
        J_max=int(p["J_max"]), region_cap=int(p["region_cap"]))
    comps = [c for c, _ in res.components]
    lift = _lyap.flow_lyapunov(space, system, res.field,
                               quad_nodes=int(p["quad_nodes"]),
                               chrec=res.ladder.estimate, comps=comps)
    _export_points(outdir, "flow_lyapunov", space, ["value"],
                   [lift.field.values], formats)
    with open(os.path.join(outdir, "verification_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(str(res.verification) + "\n" + str(lift.verification) + "\n")
    checks = [(c.name, c.passed, c.witnesses)
              for c in res.verification.checks + lift.verification.checks]
    summary = {"regions": len(res.family), "quad_nodes": lift.quad_nodes,
               "component_count": len(res.components)}
    return checks, summary


def _pipe_verify(cfg, space, outdir, formats):
    p = cfg.pipeline
    path = p.get("field_csv")
    if not path or not os.path.exists(path):
        raise ConfigError("verify needs an existing pipeline.field_csv")
    system = build_system(cfg, space)
    tab = _discrete_over(space, system, cfg.system["T"])
    eps = build_epsilon(cfg, space)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = rows[:, -1]
    if vals.shape[0] != space.n:
        raise ConfigError("field_csv row count does not match the sample")
    graph = _chains.build_chain_graph(space, tab, eps)
    chrec = _chains.chain_recurrent_set(graph)
    comps = _chains.chain_components(graph)
    L = _lyap.ScalarField(vals, "[0,1]", "loaded")
    family = _lyap.RegionFamily([], [], [])
    rep = _lyap.verify_global_lyapunov(space, tab, L, family, graph, chrec,
                                       comps)
    with open(os.path.join(outdir, "verification_report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(str(rep) + "\n")
    checks = [(c.name, c.passed, c.witnesses) for c in rep.checks]
    summary = {"recurrent_points": chrec.size(),
               "component_count": len(comps)}
    return checks, summary


_PIPELINE_FNS = {
    "chain-recurrence": _pipe_chain_recurrence,
    "components": _pipe_components,
    "conley-decomposition": _pipe_conley,
    "region-lyapunov": _pipe_region_lyapunov,
    "global-lyapunov": _pipe_global,
    "flow-lyapunov": _pipe_flow,
    "verify": _pipe_verify,
}


def run(cfg, outdir=None):
    """Execute the configured pipeline; returns (exit_code, summary dict)."""
    outdir = outdir or cfg.output["dir"]
    os.makedirs(outdir, exist_ok=True)
    formats = cfg.output["formats"]
    name = cfg.pipeline["name"]
    np.random.seed(cfg.seed)
    try:
        space = build_space(cfg)
    except (ConfigError, ValueError) as exc:
        raise type(exc)(f"space: {exc}") from exc
    try:
        checks, summary = _PIPELINE_FNS[name](cfg, space, outdir, formats)
    except ConfigError:
        raise
    except ValueError as exc:
        msg = str(exc)
        raise ValueError(msg if ":" in msg.split()[0] or msg.startswith(
            tuple(_SCHEMA)) else f"{name}: {msg}") from exc
    failures = [c for c in checks if not c[1]]
    exit_code = 0 if not failures else 2
    summary_doc = {
        "pipeline": name,
        "parameters": cfg.echo(),
        "seed": cfg.seed,
        "numba": USE_NUMBA,
        "checks": [{"name": n, "passed": ok,
                    "witnesses": w[:20] if isinstance(w, list) else w}
                   for n, ok, w in checks],
        "exit_code": exit_code,
        "summary": summary,
    }
    if "json" in formats:
        with open(os.path.join(outdir, "summary.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(summary_doc, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return exit_code, summary_doc


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="chainrec",
        description="chain recurrence / Conley decomposition / complete "
                    "Lyapunov pipelines over finite metric samples")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="execute a pipeline from a YAML config")
    runp.add_argument("config", help="path to the YAML run configuration")
    runp.add_argument("--set", action="append", default=[], metavar="K=V",
                      help="override a config key, dotted path (block.key)")
    runp.add_argument("--jobs", type=int, default=0,
                      help="cap worker threads for the jit kernels")
    runp.add_argument("--out", default=None, help="output directory override")
    args = parser.parse_args(argv)

    if args.jobs and USE_NUMBA:
        import numba

        numba.set_num_threads(max(1, args.jobs))
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text, base_dir=os.path.dirname(
            os.path.abspath(args.config)))
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set needs K=V, got {item!r}")
            key, val = item.split("=", 1)
            parts = key.split(".")
            if len(parts) == 1:
                target, leaf = None, parts[0]
                if leaf == "seed":
                    cfg.seed = int(val)
                    continue
                raise ConfigError(f"--set key must be block.key, got {key!r}")
            block = getattr(cfg, parts[0], None)
            if not isinstance(block, dict):
                raise ConfigError(f"unknown config block {parts[0]!r}")
            if parts[1] not in _SCHEMA[parts[0]]:
                raise ConfigError(f"unknown key {parts[1]!r} in [{parts[0]}]")
            block[parts[1]] = yaml.safe_load(val)
        print("effective configuration:")
        print(yaml.safe_dump(cfg.echo(), sort_keys=True).rstrip())
        code, summary = run(cfg, outdir=args.out)
        for check in summary["checks"]:
            tag = "pass" if check["passed"] else "FAIL"
            print(f"[{tag}] {check['name']}")
        print(f"exit status {code}")
        return code
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
