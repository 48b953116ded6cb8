"""Command-line experiment runner.

Every subcommand reads an optional JSON config (``--config``), fills in the
defaults listed in ``DEFAULTS``, applies the flag overrides and appends one
JSON record per line to ``<out>/<experiment>.jsonl``.  Tabular results also
go to ``<out>/<experiment>.csv``.  Records carry the full config, a version
string, the seed and a ``timing`` block; everything outside ``timing`` is
reproducible from config and seed.

Exit status is 0 iff every verdict in the run passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .continuum_kernels import S_hypo, S_mt, S_mt_closed, heat_kernel
from .discrete_kernels import (
    Q_pow, Q_pow_exact, R_pm, R_pm_exact, S_bar, S_bar_exact, S_star, S_star_exact,
    johansson_transition, schutz_transition,
)
from .discrete_model import DiscreteIC, EventSpec, GeomParams
from .fredholm import MultiPointQuery, solve_continuum, solve_discrete
from .initial import NarrowWedge, ic_from_dict
from .scaling import lemma_check, product_check, summarize
from .simulate import (
    blpp_mc_coupled, blpp_mc_direct, empirical_cdf, glpp_event_probability, gue_lambda_max, joint_probability,
)

NW = {"kind": "narrow_wedge"}

DEFAULTS = {
    "kernel-eval": {"kernel": "S_mt", "m": 1, "n": 2, "t": 1.0, "x": [0.0, 0.5], "y": [0.0, -0.5],
                    "q": 0.5, "theta": 0.5, "ic": NW},
    "fredholm-discrete": {"q": 0.5, "theta": 0.5, "m": 2, "ic": {"step": 6}, "n": [3], "a": [[4]], "L": 40, "tol": 1e-10},
    "fredholm-continuum": {"ic": NW, "m": 1, "times": [1.0], "thresholds": [[0.0]],
                           "per_panel": 8, "panels": 8, "L": None, "tol": 1e-4},
    "mc-blpp": {"ic": NW, "m": 1, "times": [1.0], "thresholds": [[0.0]], "samples": 100_000,
                "mesh": 1e-3, "method": "direct", "N": 400, "q": 0.5, "theta": 0.5},
    "mc-glpp": {"q": 0.5, "theta": 0.5, "m": 2, "ic": {"step": 6}, "n": [3], "a": [[4]], "samples": 100_000},
    "gue-oracle": {"m": 2, "thresholds": [[-1.0], [0.0], [1.0], [2.0], [3.0]], "samples": 100_000, "determinant": True},
    "lemma-check": {"lemmas": [1, 2, 3, 4], "N": [100, 400, 1600], "lemma2_scale": "2N"},
    "product-check": {"N": [100, 400, 1600], "m": [1, 2, 3]},
    "validate-all": {},
}

QUICK = {
    "mc-blpp": {"samples": 20_000},
    "mc-glpp": {"samples": 20_000},
    "gue-oracle": {"samples": 20_000},
    "lemma-check": {"N": [25, 100, 400]},
    "product-check": {"N": [25, 100, 400], "m": [1, 2]},
}


class ConfigError(ValueError):
    pass


def version_string() -> str:
    """git-describe output when run from a checkout, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def build_config(cmd: str, args) -> dict:
    cfg = dict(DEFAULTS[cmd])
    if args.quick:
        cfg.update(QUICK.get(cmd, {}))
    if args.config:
        user = json.loads(Path(args.config).read_text())
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(user) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for {cmd}: {unknown}")
        cfg.update(user)
    if args.samples is not None:
        if "samples" not in cfg:
            raise ConfigError(f"--samples does not apply to {cmd}")
        cfg["samples"] = args.samples
    if args.nodes is not None:
        if "per_panel" not in cfg:
            raise ConfigError(f"--nodes does not apply to {cmd}")
        cfg["per_panel"] = args.nodes
    if args.scale is not None:
        if cmd in ("lemma-check", "product-check"):
            cfg["N"] = [max(1, args.scale // 16), max(2, args.scale // 4), args.scale]
        elif "N" in cfg:
            cfg["N"] = args.scale
        elif "ic" in cfg and "step" in cfg["ic"]:
            cfg["ic"] = {"step": args.scale}
        else:
            raise ConfigError(f"--scale does not apply to {cmd}")
    return cfg


def _discrete_ic(spec: dict) -> DiscreteIC:
    if "step" in spec:
        return DiscreteIC.step(int(spec["step"]), int(spec.get("level", 0)))
    if "x" in spec:
        return DiscreteIC(tuple(spec["x"]))
    raise ConfigError("discrete ic needs 'step' or 'x'")


def _threshold_sets(cfg: dict, key: str, k: int) -> list:
    sets = [list(map(float, a)) for a in cfg[key]]
    if any(len(a) != k for a in sets):
        raise ConfigError(f"each entry of {key!r} needs {k} values")
    return sets


# ---------------------------------------------------------------------------
# subcommands; each returns (result, table rows, verdicts)


def run_kernel_eval(cfg, seed):
    x = np.asarray(cfg["x"], dtype=float)
    y = np.asarray(cfg["y"], dtype=float)
    name, m, n = cfg["kernel"], int(cfg["m"]), int(cfg["n"])
    params = GeomParams(cfg["q"], cfg["theta"])
    if name == "S_mt":
        t = float(cfg["t"])
        quad = S_mt(m, t, x[:, None], y[None, :])
        closed = S_mt_closed(m, t, x[:, None], y[None, :])
    elif name == "heat":
        quad = closed = heat_kernel(float(cfg["t"]), x[:, None], y[None, :])
    elif name == "S_hypo":
        quad = closed = S_hypo(m, float(cfg["t"]), x, y, ic_from_dict(cfg["ic"]))
    elif name in ("Q_pow", "R_plus", "R_minus", "S_star", "S_bar"):
        z1 = np.rint(x).astype(np.int64)[:, None]
        z2 = np.rint(y).astype(np.int64)[None, :]
        pairs = {
            "Q_pow": (lambda: Q_pow(n, z1, z2, params.theta), lambda: Q_pow_exact(n, z1, z2, params.theta)),
            "R_plus": (lambda: R_pm(1, m, z1, z2, params), lambda: R_pm_exact(1, m, z1, z2, params)),
            "R_minus": (lambda: R_pm(-1, m, z1, z2, params), lambda: R_pm_exact(-1, m, z1, z2, params)),
            "S_star": (lambda: S_star(m, n, z1, z2, params), lambda: S_star_exact(m, n, z1, z2, params)),
            "S_bar": (lambda: S_bar(m, n, z1, z2, params), lambda: S_bar_exact(m, n, z1, z2, params)),
        }
        quad, closed = (np.asarray(f()) for f in pairs[name])
    else:
        raise ConfigError(f"unknown kernel {name!r}")
    quad, closed = np.broadcast_arrays(np.asarray(quad, dtype=float), np.asarray(closed, dtype=float))
    rows = [{"x": float(x[i]), "y": float(y[j]), "quadrature": float(quad[i, j]), "closed": float(closed[i, j])}
            for i in range(x.size) for j in range(y.size)]
    diff = float(np.max(np.abs(quad - closed))) if quad.size else 0.0
    return {"kernel": name, "values": rows, "max_diff": diff}, rows, []


def run_fredholm_discrete(cfg, seed):
    params = GeomParams(cfg["q"], cfg["theta"])
    ic = _discrete_ic(cfg["ic"])
    estimates = []
    for a in _threshold_sets(cfg, "a", len(cfg["n"])):
        res = solve_discrete(EventSpec(tuple(cfg["n"]), tuple(int(v) for v in a)), int(cfg["m"]), ic, params,
                             L=int(cfg["L"]), tol=float(cfg["tol"]))
        estimates.append({"thresholds": a, "value": res.value, "stderr": 0.0, "certificate": res.certificate})
    return _prob_result("glpp", cfg, estimates), estimates, []


def run_fredholm_continuum(cfg, seed):
    X = ic_from_dict(cfg["ic"])
    estimates = []
    for a in _threshold_sets(cfg, "thresholds", len(cfg["times"])):
        q = MultiPointQuery(tuple(cfg["times"]), tuple(a), int(cfg["m"]))
        res = solve_continuum(q, X, per_panel=int(cfg["per_panel"]), panels=int(cfg["panels"]),
                              L=cfg["L"], tol=float(cfg["tol"]))
        estimates.append({"thresholds": a, "value": res.value, "stderr": 0.0,
                          "certificate": res.certificate, "size": res.size})
    return _prob_result("blpp", cfg, estimates), estimates, []


def run_mc_blpp(cfg, seed):
    X = ic_from_dict(cfg["ic"])
    m, times, n = int(cfg["m"]), tuple(cfg["times"]), int(cfg["samples"])
    if cfg["method"] == "direct":
        S = blpp_mc_direct(X, m, times, n, mesh=float(cfg["mesh"]), seed=seed)
    elif cfg["method"] == "coupled":
        S = blpp_mc_coupled(X, m, times, int(cfg["N"]), n, GeomParams(cfg["q"], cfg["theta"]), seed=seed)
    else:
        raise ConfigError("method must be 'direct' or 'coupled'")
    estimates = []
    for a in _threshold_sets(cfg, "thresholds", len(times)):
        e = joint_probability(S, a, seed)
        estimates.append({"thresholds": a, "value": e.value, "stderr": e.stderr, "dkw_band": e.dkw_band})
    return _prob_result("blpp", cfg, estimates), estimates, []


def run_mc_glpp(cfg, seed):
    params = GeomParams(cfg["q"], cfg["theta"])
    ic = _discrete_ic(cfg["ic"])
    estimates = []
    for i, a in enumerate(_threshold_sets(cfg, "a", len(cfg["n"]))):
        e = glpp_event_probability(ic, int(cfg["m"]), tuple(cfg["n"]), tuple(int(v) for v in a),
                                   int(cfg["samples"]), params, seed=seed)
        estimates.append({"thresholds": a, "value": e.value, "stderr": e.stderr, "dkw_band": e.dkw_band})
    return _prob_result("glpp", cfg, estimates), estimates, []


def run_gue_oracle(cfg, seed):
    m = int(cfg["m"])
    lam = gue_lambda_max(m, int(cfg["samples"]), seed=seed)
    sets = _threshold_sets(cfg, "thresholds", 1)
    rows, verdicts = [], []
    for a, e in zip(sets, empirical_cdf(lam, [s[0] for s in sets], seed)):
        row = {"thresholds": a, "value": e.value, "stderr": e.stderr, "dkw_band": e.dkw_band}
        if cfg["determinant"]:
            det = solve_continuum(MultiPointQuery((1.0,), (a[0],), m), NarrowWedge()).value
            ok = abs(det - e.value) <= 3.0 * e.stderr + 1e-4
            row.update(determinant=det, passed=ok)
            verdicts.append({"name": f"gue m={m} a={a[0]}", "passed": ok})
        rows.append(row)
    result = _prob_result("blpp", {"ic": NW, "m": m, "times": [1.0]}, rows)
    return result, rows, verdicts


def run_lemma_check(cfg, seed):
    rows, summaries, verdicts = [], {}, []
    for lemma in cfg["lemmas"]:
        r = lemma_check(int(lemma), tuple(cfg["N"]), lemma2_scale=cfg["lemma2_scale"])
        s = summarize(r)
        summaries[str(lemma)] = s
        verdicts.append({"name": f"lemma {lemma}", "passed": bool(s["decreasing"] and 0.3 <= s["rate"] <= 0.7)})
        rows += [{k: v for k, v in row.items() if k != "effective"} | {f"eff_{k}": v for k, v in row["effective"].items()}
                 for row in r]
    return {"summaries": summaries}, rows, verdicts


def run_product_check(cfg, seed):
    rows, summaries, verdicts = [], {}, []
    for m in cfg["m"]:
        r = product_check(tuple(cfg["N"]), m=int(m))
        s = summarize(r)
        summaries[str(m)] = s
        verdicts.append({"name": f"product m={m}", "passed": bool(s["decreasing"])})
        rows += [{k: v for k, v in row.items() if k != "effective"} for row in r]
    return {"summaries": summaries}, rows, verdicts


def _prob_result(model: str, cfg: dict, estimates: list) -> dict:
    if model == "blpp":
        key = {"model": "blpp", "ic": cfg["ic"], "m": int(cfg["m"]), "times": [float(t) for t in cfg["times"]]}
    else:
        key = {"model": "glpp", "ic": cfg["ic"], "m": int(cfg["m"]), "n": [int(v) for v in cfg["n"]],
               "q": cfg["q"], "theta": cfg["theta"]}
    return {"quantity": key, "estimates": estimates}


# ---------------------------------------------------------------------------
# validate-all


def _suite(quick: bool, seed: int):
    """(name, callable returning (passed, detail)) pairs."""
    rng = np.random.default_rng(seed)

    def transitions():
        worst = 0.0
        for _ in range(10 if quick else 100):
            N = int(rng.integers(1, 5))
            m = int(rng.integers(1, 4))
            x = np.sort(rng.integers(0, 4, N))
            y = x + np.sort(rng.integers(0, 4, N))
            y = np.maximum.accumulate(y)
            a = johansson_transition(DiscreteIC(tuple(x)), DiscreteIC(tuple(y)), m, 0.5)
            b = schutz_transition(DiscreteIC(tuple(x)), DiscreteIC(tuple(y)), m, 0.5)
            worst = max(worst, abs(a - b))
        return worst < 1e-10, worst

    def relations():
        p = GeomParams()
        z1, z2 = np.arange(-15, 5)[:, None], np.arange(-12, 6)[None, :]

        def rel(a, b):
            return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))

        d1 = rel(S_star(2, 3, z1, z2, p), S_star_exact(2, 3, z1, z2, p))
        d2 = rel(S_bar(2, 3, z1, z2, p), S_bar_exact(2, 3, z1, z2, p))
        return max(d1, d2) < 1e-8, float(max(d1, d2))

    def continuum():
        x, y = np.linspace(-2, 2, 9)[:, None], np.linspace(-1.5, 1.5, 7)[None, :]
        worst = float(np.max(np.abs(S_mt(0, 0.7, x, y) - heat_kernel(0.7, x, y))))
        for m in range(1, 5):
            worst = max(worst, float(np.max(np.abs(S_mt(m, 0.7, x, y) - S_mt_closed(m, 0.7, x, y)))))
        return worst < 1e-9, worst

    def narrow_wedge():
        v = solve_continuum(MultiPointQuery((1.0,), (0.0,), 1), NarrowWedge()).value
        return abs(v - 0.5) < 2e-3, v

    def gue():
        n = 20_000 if quick else 200_000
        lam = gue_lambda_max(2, n, seed=seed)
        worst = 0.0
        for a in (-0.5, 1.0, 2.0):
            e = empirical_cdf(lam, [a])[0]
            det = solve_continuum(MultiPointQuery((1.0,), (a,), 2), NarrowWedge()).value
            worst = max(worst, abs(det - e.value) / max(e.stderr, 1e-12))
        return worst < 3.0, worst

    def discrete():
        ic = DiscreteIC.step(6)
        det = solve_discrete(EventSpec((3,), (4,)), 2, ic).value
        e = glpp_event_probability(ic, 2, (3,), (4,), 20_000 if quick else 200_000, seed=seed)
        z = abs(det - e.value) / e.stderr
        return z < 3.0, z

    def lemmas():
        Ns = (25, 100, 400) if quick else (100, 400, 1600)
        res = {L: summarize(lemma_check(L, Ns)) for L in (1, 2, 3, 4)}
        ok = all(s["decreasing"] and 0.3 <= s["rate"] <= 0.7 for s in res.values())
        return ok, {L: round(s["rate"], 3) for L, s in res.items()}

    def product():
        s = summarize(product_check((25, 100, 400) if quick else (100, 400, 1600), m=1))
        return s["decreasing"], round(s["rate"], 3)

    return [
        ("transition formulas", transitions),
        ("operator relations", relations),
        ("continuum kernels", continuum),
        ("narrow wedge gaussian", narrow_wedge),
        ("gue oracle m=2", gue),
        ("discrete fredholm vs mc", discrete),
        ("lemma rates", lemmas),
        ("product kernel", product),
    ]


def run_validate_all(cfg, seed, quick=False):
    verdicts, rows = [], []
    for name, fn in _suite(quick, seed):
        passed, detail = fn()
        passed = bool(passed)
        verdicts.append({"name": name, "passed": passed})
        rows.append({"check": name, "passed": passed, "detail": json.dumps(_jsonable(detail))})
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {_jsonable(detail)}")
    return {"checks": rows}, rows, verdicts


# ---------------------------------------------------------------------------
# compare


def compare(a: dict, b: dict, nsigma: float = 3.0, abs_tol: float = 0.0) -> dict:
    """Per-threshold deltas between two probability records.

    Estimates agree when |va - vb| <= nsigma * sqrt(sa^2 + sb^2) + certificates + abs_tol.
    """
    qa, qb = a["result"].get("quantity"), b["result"].get("quantity")
    if qa is None or qb is None:
        raise ValueError("records do not hold probability estimates")
    if qa != qb:
        diffs = sorted(k for k in set(qa) | set(qb) if qa.get(k) != qb.get(k))
        return {"passed": False, "vacuous": False, "rows": [], "diagnostic": f"records differ in {diffs}"}
    eb = {tuple(e["thresholds"]): e for e in b["result"]["estimates"]}
    rows = []
    for ea in a["result"]["estimates"]:
        key = tuple(ea["thresholds"])
        if key not in eb:
            continue
        other = eb[key]
        band = nsigma * math.hypot(ea.get("stderr", 0.0), other.get("stderr", 0.0))
        band += ea.get("certificate", 0.0) + other.get("certificate", 0.0) + abs_tol
        delta = ea["value"] - other["value"]
        rows.append({"thresholds": list(key), "a": ea["value"], "b": other["value"], "delta": delta,
                     "band": band, "passed": abs(delta) <= band})
    return {"passed": all(r["passed"] for r in rows), "vacuous": not rows, "rows": rows,
            "diagnostic": "no shared thresholds" if not rows else ""}


# ---------------------------------------------------------------------------
# plumbing

RUNNERS = {
    "kernel-eval": run_kernel_eval,
    "fredholm-discrete": run_fredholm_discrete,
    "fredholm-continuum": run_fredholm_continuum,
    "mc-blpp": run_mc_blpp,
    "mc-glpp": run_mc_glpp,
    "gue-oracle": run_gue_oracle,
    "lemma-check": run_lemma_check,
    "product-check": run_product_check,
    "validate-all": run_validate_all,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_outputs(out: Path, experiment: str, record: dict, rows: list):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{experiment}.jsonl", "a") as fh:
        fh.write(json.dumps(_jsonable(record), sort_keys=True) + "\n")
    if rows:
        flat = [{k: json.dumps(_jsonable(v)) if isinstance(v, (list, dict)) else v for k, v in r.items()} for r in rows]
        fields = list(dict.fromkeys(k for r in flat for k in r))
        with open(out / f"{experiment}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(flat)


def run(cmd: str, args) -> int:
    cfg = build_config(cmd, args)
    seed = int(args.seed)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    t0 = time.perf_counter()
    if cmd == "validate-all":
        result, rows, verdicts = run_validate_all(cfg, seed, quick=args.quick)
    else:
        result, rows, verdicts = RUNNERS[cmd](cfg, seed)
    passed = all(v["passed"] for v in verdicts)
    record = {
        "experiment": cmd,
        "version": version_string(),
        "seed": seed,
        "quick": bool(args.quick),
        "config": cfg,
        "result": result,
        "verdicts": verdicts,
        "passed": passed,
        "timing": {"runtime_s": time.perf_counter() - t0, "timestamp": datetime.now(timezone.utc).isoformat()},
    }
    write_outputs(Path(args.out), cmd, record, rows)
    if cmd != "validate-all":
        print(json.dumps(_jsonable(result), sort_keys=True)[:2000])
    return 0 if passed else 1


def run_compare(args) -> int:
    a = _last_record(args.a)
    b = _last_record(args.b)
    rep = compare(a, b, nsigma=args.nsigma, abs_tol=args.abs_tol)
    for r in rep["rows"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  a={r['thresholds']}: {r['a']:.6g} vs {r['b']:.6g} "
              f"(delta {r['delta']:+.3g}, band {r['band']:.3g})")
    if rep["vacuous"]:
        print(f"VACUOUS  {rep['diagnostic']}")
    elif rep["diagnostic"]:
        print(f"FAIL  {rep['diagnostic']}")
    return 0 if rep["passed"] else 1


def _last_record(path: str) -> dict:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigError(f"{path} holds no records")
    return json.loads(lines[-1])


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blpp-lab", description="Brownian / geometric LPP numerical lab")
    sub = p.add_subparsers(dest="cmd", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON file with config overrides")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="results")
        sp.add_argument("--quick", action="store_true", help="reduced sizes")
        sp.add_argument("--samples", type=int)
        sp.add_argument("--nodes", type=int, help="Nystrom nodes per panel")
        sp.add_argument("--scale", type=int, help="lattice size N")
    cp = sub.add_parser("compare", help="compare the last records of two .jsonl files")
    cp.add_argument("a")
    cp.add_argument("b")
    cp.add_argument("--nsigma", type=float, default=3.0)
    cp.add_argument("--abs-tol", type=float, default=0.0)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.cmd == "compare":
            return run_compare(args)
        return run(args.cmd, args)
    except (ConfigError, ValueError, KeyError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
