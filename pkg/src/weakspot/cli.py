"""Command-line driver: ``weakspot {forward,synthesize,invert,sweep,gradcheck}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import load_config, make_problem, setup
from .exceptions import InvalidArgument, ToleranceExceeded, WeakspotError
from .fem import compute_strains, extract_measurements
from .optimizer import run
from .problem import finite_difference_check
from .risk import CVAR, EXPECTATION, RiskSpec
from .scenario import nominal_xi, synthesize

log = logging.getLogger("weakspot")

GRADCHECK_MAX_ELEMENTS = 200
GRADCHECK_TOL = 1e-4


def _parse_betas(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok.lower() in ("e", "expectation"):
            out.append(None)
        else:
            out.append(float(tok))
    return out


def _risk_for(beta, base: RiskSpec):
    return RiskSpec(EXPECTATION, tail=base.tail) if beta is None else RiskSpec(CVAR, beta, base.tail)


def _measurements(st, args):
    seed = args.seed if args.seed is not None else st.config.seed
    if st.config.sensors.layout == "file":
        return st.sensors
    return synthesize(st, seed)


def invert_once(st, sensors, risk, out_dir: Path, threads=1):
    """Run one inversion and write its artifacts; returns the summary dict."""
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = make_problem(st, sensors, risk, threads)
    t0 = time.perf_counter()
    state = run(problem, st.config.optimizer)
    elapsed = time.perf_counter() - t0
    io.write_vtk(out_dir / "alpha.vtk", st.mesh, {"alpha": state.alpha, "alpha_target": st.true_alpha})
    io.write_alpha_csv(out_dir / "alpha.csv", st.mesh, state.alpha)
    io.write_convergence_csv(out_dir / "convergence.csv", state.history)
    summary = {
        "risk": risk.kind,
        "beta": risk.beta if risk.kind == CVAR else None,
        "status": state.status,
        "iterations": state.iteration,
        "initial_objective": state.history[0][1],
        "final_objective": state.objective,
        "t": state.t if np.isfinite(state.t) else None,
        "evaluations": problem.evaluations,
        "factorizations": problem.factorizations,
        "grid_size": len(problem.grid),
        "forward_solves": problem.forward_solves,
        "adjoint_solves": problem.adjoint_solves,
        "solve_count": problem.forward_solves + problem.adjoint_solves,
        "elements": st.mesh.n_elements,
        "sensors": len(sensors),
        "seconds": round(elapsed, 3),
    }
    io.write_json(out_dir / "summary.json", summary)
    return summary


def cmd_forward(args, cfg):
    st = setup(cfg)
    alpha = st.true_alpha if args.target else np.ones(st.mesh.n_elements)
    xi = np.asarray(_floats(args.xi), dtype=float) if args.xi else nominal_xi(st)
    f = st.loads.forces(st.model, alpha, xi)
    fact = st.model.factorize(alpha)
    u = st.mesh.expand(fact.solve(st.mesh.reduce(f)))
    s = compute_strains(st.mesh, u, st.model)
    readings = extract_measurements(u, s, st.sensors, st.mesh)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    U = u.reshape(st.mesh.n_nodes, st.mesh.dim)
    with open(out / "displacement.csv", "w") as fh:
        fh.write("node," + ",".join(f"u{a}" for a in "xyz"[:st.mesh.dim]) + "\n")
        for n, row in enumerate(U):
            fh.write(f"{n}," + ",".join(f"{v:.17g}" for v in row) + "\n")
    with open(out / "strain.csv", "w") as fh:
        fh.write("element,component,strain\n")
        for e in range(st.mesh.n_elements):
            lo, hi = st.mesh.strain_offsets[e], st.mesh.strain_offsets[e + 1]
            for c, v in enumerate(s[lo:hi]):
                fh.write(f"{e},{c},{v:.17g}\n")
    io.write_sensors_csv(out / "readout.csv", st.sensors.with_values(readings), readings)
    io.write_vtk(out / "forward.vtk", st.mesh, {"alpha": alpha}, {"displacement": u})
    print(f"max |u| = {np.max(np.abs(u)):.6e}")
    return 0


def _floats(text):
    return [float(v) for v in text.split(",")]


def cmd_synthesize(args, cfg):
    st = setup(cfg)
    sensors = synthesize(st, args.seed if args.seed is not None else cfg.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_sensors_csv(out / "sensors.csv", sensors)
    io.write_vtk(out / "target.vtk", st.mesh, {"alpha": st.true_alpha})
    print(f"wrote {len(sensors)} sensor readings to {out / 'sensors.csv'}")
    return 0


def cmd_invert(args, cfg):
    st = setup(cfg)
    sensors = _measurements(st, args)
    risk = cfg.risk if args.beta is None else _risk_for(_parse_betas(args.beta)[0], cfg.risk)
    summary = invert_once(st, sensors, risk, Path(args.out_dir), args.threads)
    print(f"{summary['status']}: objective {summary['initial_objective']:.4e} -> "
          f"{summary['final_objective']:.4e} in {summary['iterations']} iterations")
    return 0


def cmd_sweep(args, cfg):
    st = setup(cfg)
    sensors = _measurements(st, args)
    betas = _parse_betas(args.beta or "0.1,0.3,0.5,0.7,0.9")
    for beta in betas:
        name = "expectation" if beta is None else f"beta_{beta:g}"
        summary = invert_once(st, sensors, _risk_for(beta, cfg.risk), Path(args.out_dir) / name, args.threads)
        print(f"{name}: {summary['status']}, objective {summary['final_objective']:.4e}, "
              f"{summary['iterations']} iterations")
    return 0


def cmd_gradcheck(args, cfg):
    if not args.h > 0:
        raise InvalidArgument(f"--h must be positive, got {args.h}")
    st = setup(cfg)
    if st.mesh.n_elements > GRADCHECK_MAX_ELEMENTS:
        raise InvalidArgument(f"gradcheck is limited to {GRADCHECK_MAX_ELEMENTS} elements")
    sensors = _measurements(st, args)
    risk = cfg.risk if args.beta is None else _risk_for(_parse_betas(args.beta)[0], cfg.risk)
    problem = make_problem(st, sensors, risk, args.threads)
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    alpha = rng.uniform(0.5, 1.0, st.mesh.n_elements)
    g, fd, rel = finite_difference_check(problem, alpha, args.h)
    checked = np.isfinite(rel)
    worst = float(np.max(rel[checked])) if checked.any() else float("nan")
    print(f"elements checked: {int(checked.sum())}/{rel.size}")
    print(f"max relative error: {worst:.3e}")
    if not checked.any() or not worst <= GRADCHECK_TOL:
        raise ToleranceExceeded(f"max relative error {worst:.3e} exceeds {GRADCHECK_TOL:g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="weakspot", description="Risk-averse identification of weakened elements.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config_path", nargs="?", help="experiment config (TOML)")
        sp.add_argument("--config", dest="config_flag", help="experiment config (TOML)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out-dir", default="out")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--beta", default=None, help="CVaR level(s), comma separated; 'E' for expectation")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    sp = common(sub.add_parser("forward", help="single forward solve"))
    sp.add_argument("--xi", default=None, help="random parameters, comma separated")
    sp.add_argument("--target", action="store_true", help="use the weakened target strength field")
    sp.set_defaults(func=cmd_forward)
    common(sub.add_parser("synthesize", help="write synthetic sensor readings")).set_defaults(func=cmd_synthesize)
    common(sub.add_parser("invert", help="run one inversion")).set_defaults(func=cmd_invert)
    common(sub.add_parser("sweep", help="run one inversion per beta")).set_defaults(func=cmd_sweep)
    sp = common(sub.add_parser("gradcheck", help="adjoint gradient vs central differences"))
    sp.add_argument("--h", type=float, default=1e-6, help="relative finite-difference step")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    path = args.config_flag or args.config_path
    if not path:
        print("weakspot: a config file is required (positional or --config)", file=sys.stderr)
        return 2
    try:
        cfg = load_config(path)
        return args.func(args, cfg)
    except (WeakspotError, ValueError, OSError) as exc:
        print(f"weakspot: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
