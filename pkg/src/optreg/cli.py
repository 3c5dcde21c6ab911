"""Command-line front end.

    optreg check      SCENARIO
    optreg oracle     SCENARIO [--seed N]
    optreg synthesize SCENARIO [-o gains.json]
    optreg simulate   SCENARIO [-o OUT_DIR] [--tend T] [--dt H] [--seed N] [--eps E]
                      [--poles-k1 P] [--poles-lbar P] [--poles-lhat P] [--decimate K]
                      [--force] [--sweep eps=1,0.5,0.2,0.1] [--backend numba|numpy]

SCENARIO is a JSON path or the name of a bundled scenario (example1..3).
Exit codes: 0 ok, 2 schema error, 3 assumption/synthesis failure,
4 divergence or oracle bracket failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checks import check_scenario, failures
from .errors import BracketFailure, NonFiniteState, OptRegError, ScenarioError
from .generator import kkt_check, solve_allocation_oracle
from .sim.run import run_scenario, synthesize_scenario, write_outputs
from .sim.scenario import bundled_path, instantiate, load_scenario

log = logging.getLogger("optreg")

EXIT_OK, EXIT_SCHEMA, EXIT_SYNTH, EXIT_DIVERGED = 0, 2, 3, 4


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    candidate = bundled_path(path)
    return candidate if candidate.exists() else p


def _mat(m) -> dict:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return {"shape": list(m.shape), "data": m.reshape(-1).tolist()}


def gains_document(s, gains) -> dict:
    agents = []
    for i, (a, g) in enumerate(zip(s.agents, gains)):
        S = a.disturbance.S
        doc = {
            "agent": i + 1,
            "law": g.law,
            "regulator": {
                "X1": _mat(g.regulator.X1),
                "U1": _mat(g.regulator.U1),
                "X2": _mat(g.regulator.X2),
                "U2": g.regulator.U2,
                "residuals": g.regulator.residuals(a.plant, S),
            },
            "Kx": _mat(g.Kx),
            "K2": _mat(g.K2),
            "K3": g.K3,
            "Lbar": _mat(g.Lbar),
            # empty blocks (no disturbance) have no spectrum; reported as null
            "spectral_abscissa": {k: (v if np.isfinite(v) else None) for k, v in g.abscissas(a.plant, S).items()},
        }
        if g.Lhat is not None:
            doc["Lhat"] = _mat(g.Lhat)
        if g.high_gain is not None:
            hg = g.high_gain
            doc["high_gain"] = {
                "r": hg.r,
                "eps": hg.eps,
                "c": hg.c.tolist(),
                "Xbar1": _mat(hg.Xbar1),
                "Ubar1": _mat(hg.Ubar1),
                "Kbar1": _mat(hg.Kbar1),
                "Kbar2": _mat(hg.Kbar2),
                "Kbar3": hg.Kbar3,
                "Xhat": _mat(hg.Xhat),
                # the compensation term uses the reconstructed estimate eta_bar + Lbar x
                "compensation_input": "eta",
            }
        agents.append(doc)
    return {"scenario": s.name, "agents": agents}


def _parse_poles(text):
    if text is None:
        return None
    return [complex(t.replace(" ", "")) if "j" in t else float(t) for t in text.split(",") if t.strip()]


def _apply_overrides(s, args):
    kw = {}
    for flag, field in (("tend", "t_end"), ("dt", "dt"), ("seed", "seed"), ("decimate", "decimate"), ("eps", "eps")):
        val = getattr(args, flag, None)
        if val is not None:
            kw[field] = val
    poles = dict(s.poles)
    for key in ("k1", "lbar", "lhat"):
        val = _parse_poles(getattr(args, f"poles_{key}", None))
        if val is not None:
            poles[key] = val
    kw["poles"] = poles
    return s.with_overrides(**kw)


def _load(args):
    s = load_scenario(_resolve(args.scenario))
    return _apply_overrides(s, args)


def cmd_check(args) -> int:
    s = _load(args)
    results = check_scenario(s)
    for r in results:
        print(r.line())
    bad = failures(results)
    print(f"{len(results) - len(bad)}/{len(results)} checks passed")
    return EXIT_SYNTH if bad else EXIT_OK


def cmd_oracle(args) -> int:
    s = _load(args)
    runs = []
    for inst in instantiate(s):
        y, theta = solve_allocation_oracle(inst.problem)
        cert = kkt_check(y, inst.problem)
        runs.append(
            {
                "axis": inst.axis,
                "y_star": y.tolist(),
                "theta": theta,
                "grad_spread": cert.grad_spread,
                "constraint_residual": cert.constraint_residual,
            }
        )
    print(json.dumps(runs[0] if len(runs) == 1 else {"runs": runs}, indent=2))
    return EXIT_OK


def cmd_synthesize(args) -> int:
    s = _load(args)
    gains = synthesize_scenario(s)
    doc = gains_document(s, gains)
    text = json.dumps(doc, indent=2)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text)
    for a in doc["agents"]:
        res = max(a["regulator"]["residuals"].values())
        absc = ", ".join(f"{k}={v:.4g}" for k, v in a["spectral_abscissa"].items() if v is not None)
        print(f"agent {a['agent']}: regulator residual {res:.2e}; abscissa {absc}", file=sys.stderr)
    return EXIT_OK


def _simulate_one(s, out_dir: Path, backend):
    results = run_scenario(s, backend=backend)
    write_outputs(results, out_dir, extra={"scenario": s.name, "law": s.law.kind, "eps": s.law.eps})
    return results


def cmd_simulate(args) -> int:
    s = _load(args)
    bad = failures(check_scenario(s))
    if bad and not args.force:
        for r in bad:
            print(f"assumption failed: {r.line()}", file=sys.stderr)
        print("refusing to simulate (use --force to override)", file=sys.stderr)
        return EXIT_SYNTH
    out_dir = Path(args.output)
    if args.sweep:
        key, _, values = args.sweep.partition("=")
        if key.strip() != "eps":
            raise ScenarioError(f"only eps sweeps are supported, got {key!r}")
        variants = [(float(v), s.with_overrides(eps=float(v))) for v in values.split(",") if v.strip()]
        with ThreadPoolExecutor() as pool:
            futures = {
                eps: pool.submit(_simulate_one, sv, out_dir / f"eps={eps:g}", args.backend) for eps, sv in variants
            }
            summary = {}
            for eps, fut in futures.items():
                try:
                    res = fut.result()
                    summary[f"{eps:g}"] = max(r.metrics.optimality_gap for r in res)
                except NonFiniteState as exc:
                    summary[f"{eps:g}"] = f"diverged at t={exc.t:.4g}"
        print(json.dumps({"optimality_gap": summary}, indent=2))
        return EXIT_OK
    results = _simulate_one(s, out_dir, args.backend)
    for r in results:
        m = r.metrics
        print(
            f"axis {r.record.axis}: optimality gap {m.optimality_gap:.3e}, tracking {m.tracking_error:.3e}, "
            f"constraint residual {m.constraint_residual:.3e}"
        )
    print(f"wrote {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optreg", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario")
        p.add_argument("--tend", type=float)
        p.add_argument("--dt", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--decimate", type=int)
        p.add_argument("--poles-k1")
        p.add_argument("--poles-lbar")
        p.add_argument("--poles-lhat")

    p = sub.add_parser("check", help="test the structural assumptions")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="solve the allocation problem directly")
    common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("synthesize", help="compute and report all gains")
    common(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="synthesize, integrate and evaluate")
    common(p)
    p.add_argument("-o", "--output", default="optreg_out")
    p.add_argument("--force", action="store_true")
    p.add_argument("--sweep")
    p.add_argument("--backend", choices=("numba", "numpy"))
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except BracketFailure as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NonFiniteState as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OptRegError, ValueError) as exc:
        print(f"synthesis failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SYNTH


if __name__ == "__main__":
    sys.exit(main())
