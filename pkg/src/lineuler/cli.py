"""Configuration-driven runs with reproducible CSV/JSON artifacts.

Config files are flat "key = value" text; every run writes
<scenario>-<hash>.csv / .json into the output directory, where the hash
covers the canonicalized configuration.  Numeric outputs print with 17
significant digits and fixed iteration orders, so identical configurations
reproduce byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import approxeig, fields, flow, lyapunov, operators, orbits
from .errors import AliasingError, InvalidInputError

SCENARIOS = ("flow-info", "lyapunov", "bas", "spectrum", "approx-eig",
             "semigroup-growth", "orbits", "report")

ACCEPTANCE_IDS = ["AC%d" % i for i in range(1, 14)]


@dataclass
class RunConfig:
    scenario: str
    flow: str = "cellular"
    out_dir: str = "out"
    seed: int = 2025
    T: float = 30.0
    grid_size: int = 64
    mode_box: int = 12
    m: int = 1
    N_list: tuple = (4.0, 6.0, 8.0)
    s_list: tuple = ()
    xi_list: tuple = (0.0, 0.7, 2.0)
    delta: float = 0.05
    target_period: float = 50.0
    horizon: float = 80.0
    step: float = 1e-3
    sigma: float = 0.35
    center: tuple = (0.2, 0.2)

    def canonical_text(self):
        parts = []
        for f in sorted(dc_fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join("%.17g" % x for x in v)
            parts.append("%s=%s" % (f.name, v))
        return "\n".join(parts)

    def digest(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]


_LIST_KEYS = {"N_list", "s_list", "xi_list", "center"}
_INT_KEYS = {"seed", "grid_size", "mode_box", "m"}
_STR_KEYS = {"scenario", "flow", "out_dir"}


def parse_config_items(items):
    """Build a RunConfig from (key, value) string pairs; unknown keys fail."""
    known = {f.name for f in dc_fields(RunConfig)}
    kw = {}
    for key, value in items:
        if key not in known:
            raise InvalidInputError("unknown config key %r" % key)
        if key in _LIST_KEYS:
            kw[key] = tuple(float(x) for x in value.split(",") if x != "")
        elif key in _INT_KEYS:
            kw[key] = int(value)
        elif key in _STR_KEYS:
            kw[key] = value
        else:
            kw[key] = float(value)
    if "scenario" not in kw:
        raise InvalidInputError("config must set 'scenario'")
    cfg = RunConfig(**kw)
    if cfg.scenario not in SCENARIOS:
        raise InvalidInputError("unknown scenario %r" % cfg.scenario)
    return cfg


def read_config_file(path):
    items = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidInputError("bad config line %r" % line)
            key, value = line.split("=", 1)
            items.append((key.strip(), value.strip()))
    return items


def _resolve_flow(name):
    if name in fields.PRESETS:
        return fields.preset_flow(name)
    if os.path.exists(name):
        psi = fields.read_field(name)
        return fields.velocity_from_stream(psi)
    raise InvalidInputError("flow %r is neither a preset nor a coefficient "
                            "file" % name)


def _fmt(x):
    return "%.17g" % x


# ---------------------------------------------------------------------------
# scenario runners; each returns (csv_rows, verdicts, extra_json)


def _run_flow_info(cfg, u):
    scan = fields.find_stagnation_points(u, seed_grid=64)
    rows = ["x1,x2,kind,exponent,trace"]
    for p in scan.points:
        rows.append("%s,%s,%s,%s,%s" % (_fmt(p.location[0]), _fmt(p.location[1]),
                                        p.kind, _fmt(p.exponent),
                                        _fmt(np.trace(p.jacobian))))
    verdicts = {}
    rng = np.random.default_rng(cfg.seed)
    errs = []
    for _ in range(100):
        w = fields.random_real_field(32, rng)
        back = fields.curl(fields.curl_inverse(w))
        errs.append(float((back - w).norm(0) / w.norm(0)))
    verdicts["AC1"] = max(errs) <= 1e-12
    if u.name == "cellular":
        X = rng.uniform(0.0, 2 * np.pi, size=(100, 2))
        _, M = flow.tangent_map(u, X, 10.0, step=1e-3)
        dets = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
        verdicts["AC2"] = float(np.abs(dets - 1.0).max()) <= 1e-6
        chart = flow.build_chart(u, np.array([0.1, 0.0]), 6.0, 1e-3)
        verdicts["AC3"] = bool(chart.injectivity_ok
                               and np.abs(chart.det_DH - 1).max() <= 1e-4
                               and chart.transport_identity_error <= 1e-6)
    extra = {"stagnation_points": len(scan.points),
             "degenerate_components": len(scan.degenerate_components),
             "unresolved_cells": list(scan.unresolved_cells),
             "long_orbit_predicate": orbits.long_orbit_predicate(u).value,
             "curl_roundtrip_max_err": max(errs)}
    return rows, verdicts, extra


def _run_lyapunov(cfg, u):
    est = lyapunov.global_exponent(u, cfg.T, grid_size=cfg.grid_size,
                                   step=cfg.step)
    rows = ["x1,x2,lambda1"]
    for p, lam in zip(est.grid_points, est.grid_quotients):
        rows.append("%s,%s,%s" % (_fmt(p[0]), _fmt(p[1]), _fmt(lam)))
    verdicts = {}
    extra = {"value": est.value, "grid_slope": est.grid_slope,
             "stagnation_sup": est.stagnation_sup, "provenance": est.provenance}
    if u.name == "cellular":
        verdicts["AC5.cellular"] = bool(0.95 <= est.value <= 1.05)
        exps = lyapunov.stagnation_exponents(u)
        verdicts["AC5.stagnation"] = bool(
            exps and min(abs(e - 1.0) for e in exps) <= 1e-10)
        g2 = lyapunov.higher_norm_growth(u, 2, 10.0, grid_size=32,
                                         step=cfg.step)
        verdicts["AC13.bound"] = bool(g2.quotient <= 2.0 * est.value + 0.1)
        extra["second_variation_quotient"] = g2.quotient
    elif u.name in ("rigid", "shear"):
        verdicts["AC5.%s" % u.name] = bool(est.value <= 0.05)
    return rows, verdicts, extra


def _run_bas(cfg, u):
    spec = lyapunov.RaySampleSpec(n_samples=50, seed=cfg.seed)
    mu = lyapunov.bas_max_exponent(u, spec, T=cfg.T, step=cfg.step)
    rows = ["sample,drift"]
    rng = np.random.default_rng(cfg.seed)
    drifts = []
    for i in range(20):
        x0 = rng.uniform(0, 2 * np.pi, 2)
        th = rng.uniform(0, 2 * np.pi)
        xi0 = np.array([np.cos(th), np.sin(th)])
        b0 = np.array([-np.sin(th), np.cos(th)])
        tr = lyapunov.bas_trajectory(u, x0, xi0, b0, T=20.0, step=cfg.step)
        drifts.append(tr.first_integral_drift)
        rows.append("%d,%s" % (i, _fmt(tr.first_integral_drift)))
    verdicts = {"AC4": max(drifts) <= 1e-6}
    extra = {"mu": mu.value, "max_drift": max(drifts)}
    if u.name == "cellular":
        est = lyapunov.global_exponent(u, cfg.T, grid_size=cfg.grid_size,
                                       step=cfg.step)
        verdicts["AC6"] = abs(mu.value - est.value) <= 0.05
        extra["Lambda"] = est.value
    return rows, verdicts, extra


def _run_spectrum(cfg, u):
    op = operators.assemble_vorticity_operator(u, cfg.mode_box)
    vals = operators.spectrum(op, m=0)
    rows = ["re,im"] + ["%s,%s" % (_fmt(v.real), _fmt(v.imag)) for v in vals]
    verdicts = {}
    extra = {"mode_box": cfg.mode_box}
    if u.name == "rigid":
        expect = np.sort_complex(np.array(
            [-1j * k1 for k1 in range(-cfg.mode_box, cfg.mode_box + 1)
             for k2 in range(-cfg.mode_box, cfg.mode_box + 1)
             if (k1, k2) != (0, 0)]))
        got = np.sort_complex(vals)
        verdicts["AC8"] = bool(np.max(np.abs(got - expect)) <= 1e-10)
        extra["note"] = ("eigenvalues fill i*Z with the 2-pi-periodic basis "
                         "e^{i k.x}; a lattice 2*pi*i*Z corresponds to a "
                         "period-one normalization of the torus")
    if u.name == "cellular":
        w = u.curl_field(cfg.mode_box)
        img = operators.apply_vorticity_operator(u, w)
        verdicts["AC7.kernel"] = bool(img.norm(0) <= 1e-12 * w.norm(0))
        _, mism = operators.assemble_velocity_operator_with_check(u, 8)
        verdicts["AC7.similarity"] = bool(mism <= 1e-10)
        extra["kernel_residual"] = img.norm(0) / w.norm(0)
        extra["similarity_mismatch"] = mism
    return rows, verdicts, extra


def _run_approx_eig(cfg, u):
    scenario = {"cellular": "cellular-vertical-line",
                "shear": "shear-imaginary-axis",
                "rigid": "rigid-spectral-gap"}[u.name]
    kw = {}
    if cfg.s_list:
        kw["s_list"] = cfg.s_list if len(cfg.s_list) > 1 else cfg.s_list[0]
    report = approxeig.sweep(scenario, list(cfg.N_list),
                             xi_list=list(cfg.xi_list), m=cfg.m, **kw)
    verdicts = {}
    if scenario == "cellular-vertical-line":
        ok_factor = all(r.residual <= 3.0 * r.predicted for r in report.rows
                        if np.isfinite(r.residual))
        trends = report.trends()
        spreads = []
        for N in sorted({r.half_length for r in report.rows}):
            vals = [r.residual for r in report.rows if r.half_length == N
                    and np.isfinite(r.residual)]
            if len(vals) >= 2:
                spreads.append((max(vals) - min(vals)) / max(vals))
        verdicts["AC10"] = bool(ok_factor and all(trends.values())
                                and all(sp <= 0.25 for sp in spreads))
    elif scenario == "shear-imaginary-axis":
        ok = True
        for r in report.rows:
            ok &= np.isfinite(r.residual) and (
                r.residual <= 2.0 * math.sqrt(3.0) / r.half_length)
        verdicts["AC9"] = bool(ok and all(report.trends().values()))
    else:
        best = min((r.residual for r in report.rows
                    if np.isfinite(r.residual)), default=float("inf"))
        verdicts["AC11"] = bool(best >= 0.3)
    rows = ["scenario,m,lambda,xi,N,s,residual,predicted,kg_norm,tail,inj"]
    for r in report.rows:
        rows.append("%s,%d,%s,%s,%s,%s,%s,%s,%s,%s,%d"
                    % (r.scenario, r.m, _fmt(r.lam), _fmt(r.xi),
                       _fmt(r.half_length), _fmt(r.half_width),
                       _fmt(r.residual), _fmt(r.predicted),
                       _fmt(r.coupling_norm), _fmt(r.tail),
                       int(r.injectivity_ok)))
    return rows, verdicts, report.summary()


def _run_semigroup(cfg, u):
    seed = operators.gaussian_bump(cfg.center, cfg.sigma, 48, normalize_m=cfg.m)
    extra = {}
    verdicts = {}
    rows = ["t,log_norm,tail"]
    try:
        est = operators.semigroup_growth(u, cfg.m, seed, cfg.T,
                                         grid_size=cfg.grid_size,
                                         step=cfg.step, strict=True)
        failed = None
    except AliasingError as exc:
        est = exc.diagnostics
        failed = str(exc)
    for t, ln, tl in zip(est.times, est.log_norms, est.tails):
        rows.append("%s,%s,%s" % (_fmt(t), _fmt(ln), _fmt(tl)))
    extra["slope"] = est.slope
    extra["valid"] = est.valid
    if failed:
        extra["aliasing_failure"] = failed
    if u.name == "cellular" and cfg.m == 1:
        lam = 1.0
        verdicts["AC12.m1"] = bool(est.valid
                                   and abs(est.slope - lam) <= 0.15 * lam)
        try:
            est0 = operators.semigroup_growth(u, 0, seed, min(cfg.T, 2.0),
                                              grid_size=cfg.grid_size,
                                              step=cfg.step, strict=True)
            verdicts["AC12.m0"] = bool(abs(est0.slope) <= 1e-3)
            extra["m0_slope"] = est0.slope
        except AliasingError as exc:
            verdicts["AC12.m0"] = False
            extra["m0_failure"] = str(exc)
    return rows, verdicts, extra


def _run_orbits(cfg, u):
    scan = orbits.longest_orbit_scan(u, cfg.target_period,
                                     horizon=cfg.horizon, step=cfg.step)
    rows = ["x1,x2,period_or_inf,horizon"]
    for e in scan.sampled:
        period = "inf" if not math.isfinite(e.period) else _fmt(e.period)
        rows.append("%s,%s,%s,%s" % (_fmt(e.point[0]), _fmt(e.point[1]),
                                     period, _fmt(e.horizon)))
    pred = orbits.long_orbit_predicate(u)
    extra = {"witness_found": scan.witness is not None,
             "predicate": pred.value, "provenance": pred.provenance}
    verdicts = {}
    if pred.value:
        verdicts["long-orbit-consistency"] = scan.witness is not None
    return rows, verdicts, extra


def run(cfg):
    """Execute one scenario; writes artifacts and returns the verdict dict."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    started = time.time()
    if cfg.scenario == "report":
        return report(cfg)
    u = _resolve_flow(cfg.flow)
    runner = {"flow-info": _run_flow_info, "lyapunov": _run_lyapunov,
              "bas": _run_bas, "spectrum": _run_spectrum,
              "approx-eig": _run_approx_eig,
              "semigroup-growth": _run_semigroup,
              "orbits": _run_orbits}[cfg.scenario]
    rows, verdicts, extra = runner(cfg, u)
    stem = "%s-%s" % (cfg.scenario, cfg.digest())
    csv_path = os.path.join(cfg.out_dir, stem + ".csv")
    with open(csv_path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    payload = {
        "config": {f.name: getattr(cfg, f.name) for f in dc_fields(cfg)},
        "config_digest": cfg.digest(),
        "versions": {"lineuler": __import__("lineuler").__version__,
                     "numpy": np.__version__},
        "wall_clock_s": time.time() - started,
        "verdicts": verdicts,
        "results": extra,
        "csv": os.path.basename(csv_path),
    }
    json_path = os.path.join(cfg.out_dir, stem + ".json")
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return verdicts


def report(cfg):
    """Aggregate verdicts from prior runs into one acceptance matrix."""
    matrix = {ac: {} for ac in ACCEPTANCE_IDS}
    found = []
    for name in sorted(os.listdir(cfg.out_dir)):
        if not name.endswith(".json") or name.startswith("report-"):
            continue
        with open(os.path.join(cfg.out_dir, name)) as fh:
            payload = json.load(fh)
        found.append(name)
        for key, val in payload.get("verdicts", {}).items():
            root = key.split(".")[0]
            if root in matrix:
                matrix[root][key] = bool(val)
    table = {}
    for ac in ACCEPTANCE_IDS:
        if not matrix[ac]:
            table[ac] = "missing"
        else:
            table[ac] = "pass" if all(matrix[ac].values()) else "fail"
    payload = {"matrix": table, "details": matrix, "sources": found}
    out = os.path.join(cfg.out_dir, "report-%s.json" % cfg.digest())
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for ac in ACCEPTANCE_IDS:
        print("%s: %s" % (ac, table[ac]))
    ok = all(v == "pass" for v in table.values())
    return {"report": ok}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lineuler",
        description="Spectral diagnostics for the linearized 2D Euler "
                    "equation on the torus")
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key")
    args = parser.parse_args(argv)
    items = [("scenario", args.scenario)]
    if args.config:
        items += read_config_file(args.config)
    for kv in args.set:
        if "=" not in kv:
            parser.error("--set expects KEY=VALUE")
        key, value = kv.split("=", 1)
        items.append((key.strip(), value.strip()))
    try:
        cfg = parse_config_items(items)
        verdicts = run(cfg)
    except (InvalidInputError, FileNotFoundError) as exc:
        json.dump({"error": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    if verdicts and not all(verdicts.values()):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
