"""Command-line driver: configuration, dispatch, reports.

    foliated <command> --config cfg.json [--set params.T=500]... [--out report.json]
             [--format json|csv|svg] [--seed n] [--threads n]

Exit codes: 0 all thresholds met, 1 a threshold failed, 2 configuration
error (schema, precondition, group verification), 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .cocycle import PreconditionError, Representation, liouville_state, preset_representation, transverse_lyapunov
from .surface_group import GroupVerificationError, ReductionBudgetError, group_from_json, preset, verify_group

COMMANDS = ("exponent", "brownian-exponent", "gibbs", "visibility", "compare-pm", "harmonic-check", "distortion",
            "psi-u", "verify-group")

DEFAULT_PARAMS = {
    "exponent": {"T": 2000.0, "dt": 0.05, "N": 100},
    "brownian-exponent": {"T": 1000.0, "dt": 1e-3, "N": 200},
    "gibbs": {"T": 5000.0, "dt": 0.05, "N": 50, "eps": 0.1, "shift": 1.0, "arc_len": 1.0, "arc_samples": 0},
    "visibility": {"T": 2000.0, "dt": 0.05, "N": 20, "N_dirs": 256, "eps": 0.1, "x": [0.0, 1.0],
                   "probe_offset": 0.0},
    "compare-pm": {"T": 2000.0, "dt": 0.05, "N": 100},
    "harmonic-check": {"h": "point", "xi": 0.3, "log_u": "re", "grid": 256, "margin": 0.05,
                       "boundary_nodes": 1024},
    "distortion": {"T": 100.0, "distances": [0.05, 0.1, 0.2], "n_families": 1, "split": 20.0},
    "psi-u": {"T": 100.0, "distance": 0.1, "split": 20.0},
    "verify-group": {"tol": 1e-8},
}

# scalar estimates each command reports; thresholds may bound any of them
ESTIMATES = {
    "exponent": ("mean", "stderr", "ci95"),
    "brownian-exponent": ("mean", "stderr", "ci95"),
    "gibbs": ("attractor_count", "bl_median", "invariance_defect_max", "arc_bl"),
    "visibility": ("attractor_count", "unlabeled_fraction", "f_max", "continuity"),
    "compare-pm": ("tv",),
    "harmonic-check": ("residual", "lhs", "rhs"),
    "distortion": ("C", "defect_max"),
    "psi-u": ("psi", "log_psi", "defect", "distance"),
    "verify-group": ("relator_residual", "pairing_residual", "area_defect", "min_abs_trace"),
}

DEFAULT_THRESHOLDS = {"harmonic-check": {"residual_max": 1e-3}}

SVG_COMMANDS = ("gibbs", "compare-pm")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid configuration; ``code`` is one of schema, precondition, group."""

    def __init__(self, code: str, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.code = code
        self.field = field


# ---------------------------------------------------------------------------
# configuration


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config.schema.json").read_text())


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """Set ``a.b.c=value`` in place; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError("schema", assignment, "override must look like dotted.path=value")
    path, text = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError("schema", path, f"{k} is not an object")
    node[keys[-1]] = _parse_value(text)


def resolve(cfg: dict) -> dict:
    """Schema-check the config and fill in defaults for its command."""
    cfg = copy.deepcopy(cfg)
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as e:
        where = ".".join(str(p) for p in e.absolute_path) or "config"
        raise ConfigError("schema", where, e.message) from None
    cmd = cfg["command"]
    cfg.setdefault("group", "genus2")
    cfg.setdefault("representation", "inclusion")
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", int(os.environ.get("THREADS", "1") or 1))
    cfg["params"] = {**DEFAULT_PARAMS[cmd], **cfg.get("params", {})}
    if cmd in ("distortion", "psi-u"):
        m = cfg.get("metric", {})
        cfg["metric"] = {"epsilon": m.get("epsilon", 0.05), "word_radius": m.get("word_radius", 3),
                         "bump": {"support_radius": 1.8, "profile": "wendland-c4", **m.get("bump", {})}}
    cfg["thresholds"] = {**DEFAULT_THRESHOLDS.get(cmd, {}), **cfg.get("thresholds", {})}
    cfg["output"] = {"path": None, "format": "json", "timing": True, **cfg.get("output", {})}
    validate(cfg)
    return cfg


def _need(cond, field, message):
    if not cond:
        raise ConfigError("precondition", field, message)


def validate(cfg: dict) -> None:
    """Range checks for everything the command will use; nothing runs before this passes."""
    cmd = cfg["command"]
    p = cfg["params"]
    if "T" in p:
        low = {"exponent": 100, "brownian-exponent": 100, "compare-pm": 100, "gibbs": 100,
               "distortion": 50, "psi-u": 50}.get(cmd, 0)
        _need(p["T"] > 0 and p["T"] >= low, "params.T", f"must be positive and at least {low}, got {p['T']}")
    if "dt" in p:
        hi = 1e-2 if cmd == "brownian-exponent" else 1.0
        _need(0 < p["dt"] <= hi, "params.dt", f"must lie in (0, {hi}], got {p['dt']}")
        if "T" in p:
            _need(p["T"] / p["dt"] >= 1, "params.dt", "step longer than the run")
    if "N" in p:
        _need(p["N"] >= 1, "params.N", "need at least one orbit")
    if cmd in ("gibbs", "visibility"):
        _need(p["eps"] > 0, "params.eps", "must be positive")
    if cmd == "gibbs":
        _need(0 < p["shift"] <= p["T"] / 10, "params.shift", "must lie in (0, T/10]")
        _need(p["arc_samples"] >= 0, "params.arc_samples", "must be non-negative")
        _need(p["arc_len"] > 0, "params.arc_len", "must be positive")
    if cmd == "visibility":
        _need(p["N_dirs"] >= 1, "params.N_dirs", "need at least one direction")
        _need(p["x"][1] > 0, "params.x", "base point must lie in the upper half-plane")
        _need(p["probe_offset"] >= 0, "params.probe_offset", "must be non-negative")
    if cmd == "harmonic-check":
        _need(p["grid"] >= 64, "params.grid", "need at least 64 nodes per side")
        _need(0 <= p["margin"] < 0.5, "params.margin", "must lie in [0, 0.5)")
        _need(p["boundary_nodes"] >= 1, "params.boundary_nodes", "need at least one node")
    if cmd in ("distortion", "psi-u"):
        m = cfg["metric"]
        _need(0 <= m["epsilon"] <= 0.1, "metric.epsilon", "must lie in [0, 0.1]")
        _need(m["word_radius"] >= 2, "metric.word_radius", "must be at least 2")
        _need(m["bump"]["support_radius"] > 0, "metric.bump.support_radius", "must be positive")
        _need(p["split"] > 0 and p["split"] <= p["T"], "params.split", "must lie in (0, T]")
        dists = p["distances"] if cmd == "distortion" else [p["distance"]]
        lo_ok = (lambda d: 0 < d <= 0.5) if cmd == "distortion" else (lambda d: 0 <= d <= 0.5)
        key = "params.distances" if cmd == "distortion" else "params.distance"
        _need(all(lo_ok(d) for d in dists), key, "unstable distances must lie in (0, 0.5]")
        if cmd == "distortion":
            _need(p["n_families"] >= 1, "params.n_families", "need at least one family")
    if cmd == "verify-group":
        _need(p["tol"] > 0, "params.tol", "must be positive")
    for key in cfg["thresholds"]:
        name, _, kind = key.rpartition("_")
        _need(kind in ("min", "max") and name in ESTIMATES[cmd], f"thresholds.{key}",
              f"expected <estimate>_min or <estimate>_max with estimate in {list(ESTIMATES[cmd])}")
    fmt = cfg["output"]["format"]
    _need(fmt != "svg" or cmd in SVG_COMMANDS, "output.format", f"svg output is only available for {SVG_COMMANDS}")


def input_digest(cfg: dict) -> str:
    """Hash of the resolved config, ignoring worker count and output options."""
    core = {k: v for k, v in cfg.items() if k not in ("threads", "output")}
    return hashlib.sha256(canonical_json(core).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    command: str
    input_digest: str
    estimates: dict
    checks: list
    counts: dict
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    svg: str | None = None
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["ok"] for c in self.checks)

    def payload(self) -> dict:
        """Everything except wall-clock time."""
        return {
            "command": self.command,
            "input_digest": self.input_digest,
            "estimates": self.estimates,
            "checks": self.checks,
            "passed": self.passed,
            "counts": self.counts,
            "table": {"columns": self.columns, "rows": self.rows},
        }

    def to_json(self, timing: bool = True) -> str:
        doc = self.payload()
        if timing:
            doc["timing"] = {"wall_clock_s": self.wall_clock}
        return canonical_json(_plain(doc)) + "\n"

    def to_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])
        return buf.getvalue()


def _plain(x):
    """numpy scalars and arrays to plain Python for JSON."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def emit(report: Report, fmt: str = "json", path: str | None = None, timing: bool = True) -> None:
    """Write the report atomically (temp file and rename), or to stdout without a path."""
    if fmt == "json":
        text = report.to_json(timing)
    elif fmt == "csv":
        text = report.to_csv()
    elif fmt == "svg":
        if report.svg is None:
            raise ValueError(f"{report.command} report has no heatmap")
        text = report.svg
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise OSError(f"could not write {path}: {e}") from e


# ---------------------------------------------------------------------------
# commands


def _group(cfg):
    g = cfg["group"]
    if isinstance(g, str):
        return preset(g)
    try:
        return group_from_json(json.dumps(g))
    except GroupVerificationError as e:
        raise ConfigError("group", "group", str(e)) from None
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError("schema", "group", str(e)) from None


def _rep(cfg, group):
    r = cfg["representation"]
    if isinstance(r, str):
        rep = preset_representation(r, group, cfg["seed"])
    else:
        try:
            rep = Representation.from_json(r)
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError("schema", "representation", str(e)) from None
    if len(rep.images) != group.n_generators:
        raise ConfigError("precondition", "representation",
                          f"needs {group.n_generators} images, got {len(rep.images)}")
    return rep


def _exponent_result(est):
    return ({"mean": est.mean, "stderr": est.stderr, "ci95": est.ci95, "N": est.N, "T": est.T, "dt": est.dt},
            ["orbit", "exponent"], [[i, v] for i, v in enumerate(est.values)], {"steps_per_orbit": int(round(est.T / est.dt))})


def cmd_exponent(cfg, group, rep, threads):
    p = cfg["params"]
    est = transverse_lyapunov(group, rep, cfg["seed"], p["T"], p["dt"], p["N"], threads)
    return _exponent_result(est) + (None,)


def cmd_brownian(cfg, group, rep, threads):
    from .harmonic import brownian_lyapunov

    p = cfg["params"]
    est = brownian_lyapunov(group, rep, cfg["seed"], p["T"], p["dt"], p["N"], threads)
    return _exponent_result(est) + (None,)


def _birkhoff_ensemble(cfg, group, rep, threads):
    from .cocycle import _prepare
    from .measures import birkhoff_empirical
    from .parallel import STREAM_LIOUVILLE, orbit_rng, ordered_map

    p = cfg["params"]
    tables = _prepare(group, rep)

    def one(i):
        st = liouville_state(group, orbit_rng(cfg["seed"], STREAM_LIOUVILLE, i))
        m = birkhoff_empirical(group, rep, st, p["T"], p["dt"], tables=tables)
        m.warm()
        return m.drop_samples()

    return ordered_map(one, range(p["N"]), threads)


def cmd_gibbs(cfg, group, rep, threads):
    from .measures import bl_distance, classify_attractors, invariance_defect, unstable_arc_empirical
    from .parallel import ordered_map

    p = cfg["params"]
    ms = _birkhoff_ensemble(cfg, group, rep, threads)
    att = classify_attractors(ms, p["eps"])
    pair = [bl_distance(ms[i], ms[j]) for i in range(len(ms)) for j in range(i + 1, len(ms))]
    defects = ordered_map(lambda m: invariance_defect(group, rep, m, p["shift"]), ms, threads)
    to_rep = [bl_distance(m, att.representatives[att.labels[i]]) for i, m in enumerate(ms)]
    est = {
        "attractor_count": att.count,
        "bl_median": float(np.median(pair)) if pair else 0.0,
        "invariance_defect_max": float(max(defects)),
        "labels": att.labels,
    }
    if p["arc_samples"] > 0:
        from .cocycle import liouville_state as ls
        from .parallel import STREAM_ARC, orbit_rng

        g0 = ls(group, orbit_rng(cfg["seed"], STREAM_ARC, 0))
        arc = unstable_arc_empirical(group, rep, g0, p["arc_len"], p["arc_samples"], p["T"], p["dt"],
                                     seed=cfg["seed"], threads=threads)
        est["arc_bl"] = min(bl_distance(arc, r) for r in att.representatives)
    rows = [[i, att.labels[i], float(defects[i]), float(to_rep[i])] for i in range(len(ms))]
    svg = _heatmap(att.representatives[0], cfg)
    return est, ["start", "label", "invariance_defect", "bl_to_representative"], rows, \
        {"starts": len(ms), "steps_per_orbit": int(round(p["T"] / p["dt"]))}, svg


def _heatmap(m, cfg):
    return m.fiber_svg() if cfg["output"]["format"] == "svg" else None


def cmd_visibility(cfg, group, rep, threads):
    from .measures import classify_attractors, visibility

    p = cfg["params"]
    ms = _birkhoff_ensemble(cfg, group, rep, threads)
    att = classify_attractors(ms, p["eps"])
    x = complex(*p["x"])
    v = visibility(group, rep, att, x, p["N_dirs"], p["T"], p["dt"], cfg["seed"], threads=threads)
    est = {"attractor_count": att.count, "f": v.f, "f_max": float(np.max(v.f)), "unlabeled_fraction":
           v.unlabeled_fraction, "counts": v.counts, "half_width": v.half_width}
    rows = [[k, float(v.f[k]), int(v.counts[k])] for k in range(att.count)]
    if p["probe_offset"] > 0:
        w = visibility(group, rep, att, x + p["probe_offset"], p["N_dirs"], p["T"], p["dt"], cfg["seed"],
                       threads=threads)
        est["continuity"] = float(np.max(np.abs(w.f - v.f)))
        est["f_probe"] = w.f
    return est, ["attractor", "f", "count"], rows, {"starts": len(ms), "directions": p["N_dirs"]}, None


def cmd_compare(cfg, group, rep, threads):
    from .measures import compare_time_reversal

    p = cfg["params"]
    tv, plus, minus = compare_time_reversal(group, rep, p["T"], p["dt"], p["N"], cfg["seed"], threads=threads)
    h_plus = plus.fiber_marginal()
    h_minus = minus.fiber_marginal()
    rows = [[i, j, float(h_plus[i, j]), float(h_minus[i, j])] for i in range(h_plus.shape[0])
            for j in range(h_plus.shape[1])]
    return {"tv": tv}, ["fiber_u_cell", "fiber_v_cell", "mass_plus", "mass_minus"], rows, \
        {"orbits": p["N"], "steps_per_orbit": int(round(p["T"] / p["dt"]))}, _heatmap(plus, cfg)


def cmd_harmonic(cfg, group, rep, threads):
    from .harmonic import BoundaryMeasure, candel_identity_residual

    p = cfg["params"]
    h = BoundaryMeasure.uniform(p["boundary_nodes"]) if p["h"] == "uniform" else BoundaryMeasure.point(p["xi"])
    log_u = (lambda x: np.real(x)) if p["log_u"] == "re" else (lambda x: np.zeros(np.shape(x)))
    r = candel_identity_residual(h, log_u, p["grid"], p["margin"])
    return r.as_dict(), ["grid", "lhs", "rhs", "residual"], [[r.grid, r.lhs, r.rhs, r.residual]], \
        {"grid": r.grid, "boundary_nodes": r.boundary_nodes}, None


def _metric(cfg, group):
    from .curvature import metric_from_spec

    return metric_from_spec(group, cfg["metric"])


def cmd_distortion(cfg, group, rep, threads):
    from .curvature import distortion_constant, psi_u, unstable_family
    from .parallel import ordered_map

    p = cfg["params"]
    metric = _metric(cfg, group)
    fams = ordered_map(lambda i: unstable_family(metric, p["distances"], 2 * p["T"], seed=cfg["seed"] * 1000 + i,
                                                 split=p["split"]), range(p["n_families"]), threads)
    pairs = [f.pair(0, j) for f in fams for j in range(1, len(f.states))]
    rep_ = distortion_constant(metric, pairs, p["T"])
    defects = [psi_u(metric, q, p["T"]).defect for q in pairs]
    rows = [[k, float(d), float(x)] for k, (d, x) in enumerate(zip(rep_.distances, rep_.differences))]
    est = {"C": rep_.C, "defect_max": float(max(defects)), "metric": metric.report(),
           "past_residual_max": max(f.past_residual for f in fams)}
    return est, ["pair", "distance", "log_det_difference"], rows, {"pairs": len(pairs)}, None


def cmd_psi(cfg, group, rep, threads):
    from .curvature import psi_u, unstable_family

    p = cfg["params"]
    metric = _metric(cfg, group)
    fam = unstable_family(metric, [p["distance"]], 2 * p["T"], seed=cfg["seed"], split=p["split"])
    e = psi_u(metric, fam.pair(0, 1), p["T"])
    est = {"psi": e.value, "log_psi": e.log_value, "defect": e.defect, "distance": e.distance,
           "past_residual": fam.past_residual, "metric": metric.report()}
    return est, ["T", "psi", "defect"], [[e.T, e.value, e.defect]], {"T": e.T}, None


def cmd_verify(cfg, group, rep, threads):
    r = verify_group(group, cfg["params"]["tol"])
    est = {**r.as_dict()}
    rows = [[f] for f in r.failures]
    return est, ["failure"], rows, {"sides": len(group.domain.sides)}, None


DISPATCH = {
    "exponent": cmd_exponent,
    "brownian-exponent": cmd_brownian,
    "gibbs": cmd_gibbs,
    "visibility": cmd_visibility,
    "compare-pm": cmd_compare,
    "harmonic-check": cmd_harmonic,
    "distortion": cmd_distortion,
    "psi-u": cmd_psi,
    "verify-group": cmd_verify,
}


def _checks(cfg, estimates):
    out = []
    for key, limit in sorted(cfg["thresholds"].items()):
        name, _, kind = key.rpartition("_")
        value = estimates.get(name)
        ok = value is not None and (value >= limit if kind == "min" else value <= limit)
        out.append({"name": key, "value": value, "limit": limit, "ok": bool(ok)})
    if cfg["command"] == "verify-group":
        out.append({"name": "verified", "value": estimates["passed"], "limit": True, "ok": bool(estimates["passed"])})
    return out


def run(config: dict) -> Report:
    """Resolve, validate and execute a configuration.

    Raises ConfigError before any computation if the config is invalid.
    """
    t0 = time.perf_counter()
    cfg = resolve(config)
    group = _group(cfg)
    rep = _rep(cfg, group) if cfg["command"] not in ("harmonic-check", "verify-group", "distortion", "psi-u") else None
    try:
        est, columns, rows, counts, svg = DISPATCH[cfg["command"]](cfg, group, rep, cfg["threads"])
    except PreconditionError as e:
        raise ConfigError("precondition", e.field, str(e)) from None
    est = _plain(est)
    return Report(cfg["command"], input_digest(cfg), est, _checks(cfg, est), _plain(counts), columns,
                  _plain(rows), svg, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="foliated", description="Foliated geodesic flow experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                    help="override a config field by dotted path (repeatable)")
    ap.add_argument("--out", help="output path (stdout if omitted)")
    ap.add_argument("--format", choices=("json", "csv", "svg"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    return ap


def _fail(code: int, kind: str, field: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "field": field, "message": message}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError("schema", "config", f"cannot read {args.config}: {e}") from None
        cfg["command"] = args.command
        for a in args.overrides:
            apply_override(cfg, a)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        out = cfg.setdefault("output", {})
        if args.out is not None:
            out["path"] = args.out
        if args.format is not None:
            out["format"] = args.format
        report = run(cfg)
        o = resolve(cfg)["output"]
        emit(report, o["format"], o["path"], o["timing"])
    except ConfigError as e:
        return _fail(EXIT_CONFIG, e.code, e.field, str(e))
    except PreconditionError as e:
        return _fail(EXIT_CONFIG, "precondition", e.field, str(e))
    except (ReductionBudgetError, ArithmeticError, OSError, RuntimeError, ValueError) as e:
        return _fail(EXIT_RUNTIME, "runtime", type(e).__name__, str(e))
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
