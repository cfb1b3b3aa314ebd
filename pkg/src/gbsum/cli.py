"""Command line entry point ``gbsum``.

Exit codes: 0 success, 1 numerical acceptance failure, 2 configuration or
guard failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import beams as bm
from . import flow as fl
from . import io
from . import oracle as orc
from . import summation as sm
from . import verify as vfy
from . import wigner as wg
from .config import ConfigError, RunConfig, load
from .errors import GuardError, NumericalFailure

log = logging.getLogger("gbsum")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _map(fn, items, threads: int):
    # ordered results, so outputs do not depend on the worker count
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _eps_tag(eps: float) -> str:
    return f"{eps:.6g}".replace(".", "p")


def _data(cfg: RunConfig, eps: float, dx: float | None = None):
    grid = orc.interval_grid(cfg.dom, dx or cfg.dx(eps))
    return orc.wkb_data(cfg.profile, eps, grid, cfg.vf, cfg.raw["data"].get("mode", "right"))


def _build_run(cfg: RunConfig, eps: float, times):
    dat = _data(cfg, eps)
    return sm.build_run(dat.uI, dat.vI, eps, cfg.dom, cfg.vf, cfg.bc, cfg.cutoff(), times)


# ----------------------------------------------------------------------------
# subcommands


def cmd_trace(cfg: RunConfig, out: Path, args) -> int:
    tr = cfg.raw["trace"]
    p = cfg.profile
    n = int(tr["rays"])
    c = np.asarray(p.center)
    offs = np.linspace(-p.radius, p.radius, n + 2)[1:-1]
    y = c[None, :] + offs[:, None] * (np.eye(c.size)[0] if c.size > 1 else np.ones(1))
    eta = np.repeat(np.asarray(p.eta0, float)[None, :], n, 0)
    times = np.linspace(0.0, float(tr["T"]), int(tr["samples"]))
    fc = fl.FlowConfig.for_horizon(float(tr["T"]))
    nd = c.size

    def one(i):
        b = fl.initial_batch(y[i:i + 1], eta[i:i + 1])
        rows, t_prev = [], 0.0
        h0 = float(cfg.vf.value(y[i]) * np.linalg.norm(eta[i]))
        for t in times:
            if t > t_prev:
                b = fl.propagate(b, t - t_prev, cfg.vf, cfg.dom, fc)
                t_prev = t
            st = b.state(0)
            d = fl.invariant_defects(st)
            H = float(cfg.vf.value(st.x) * np.linalg.norm(st.xi))
            rows.append((i, t, *st.x, *st.xi, int(b.nrefl[0]), H, abs(H - h0) / h0, d["symplectic"]))
        return rows

    rows = [r for rs in _map(one, range(n), args.threads) for r in rs]
    header = ["ray", "t"] + [f"x{k + 1}" for k in range(nd)] + [f"xi{k + 1}" for k in range(nd)] + [
        "reflections", "H", "H_drift", "symplectic_defect"]
    io.write_csv(out / "trace.csv", header, rows)
    return EXIT_OK


def cmd_beam(cfg: RunConfig, out: Path, args) -> int:
    bc_ = cfg.raw["beam"]
    from .media import velocity_from_spec

    vf = velocity_from_spec(bc_["velocity"])
    eps_list = [float(e) for e in (args.eps_override or bc_["eps_list"])]
    ts = np.linspace(0.0, float(bc_["T"]), int(bc_["samples"]))

    def one(eps):
        return bm.beam_residual_norm(bc_["y"], bc_["eta"], vf, eps, ts, cutoff_d=float(bc_["cutoff_d"]))

    res = _map(one, eps_list, args.threads)
    io.write_csv(out / "beam_residual.csv", ["eps", "residual"], zip(eps_list, res))
    slope = np.polyfit(np.log(eps_list), np.log(res), 1)[0] if len(eps_list) > 1 else float("nan")
    io.write_csv(out / "beam_slope.csv", ["quantity", "slope"], [("interior_residual", slope)])
    # the beam field at t = 0 on a window around the centre
    eps = eps_list[0]
    y = np.atleast_1d(np.asarray(bc_["y"], float))
    st = fl.initial_state(y, np.atleast_1d(np.asarray(bc_["eta"], float)))
    beam = bm.make_beam(st, "A", bm.DIRICHLET, float(bc_["cutoff_d"]), vf)
    x = np.linspace(y[0] - float(bc_["cutoff_d"]), y[0] + float(bc_["cutoff_d"]), 801)
    vals = bm.eval_beam(beam, x[:, None], eps)
    io.write_csv(out / f"beam_field_eps{_eps_tag(eps)}.csv", ["x1", "re", "im"],
                 ((xx, v.real, v.imag) for xx, v in zip(x, vals)))
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out: Path, args) -> int:
    times = cfg.times

    def one(eps):
        run = _build_run(cfg, eps, times)
        rows = []
        for i, t in enumerate(times):
            d = sm.assemble(run, t, ("u", "dt", "dx"))
            tag = f"eps{_eps_tag(eps)}_t{i:03d}"
            io.write_field(out / f"u_{tag}", d["u"], args.format)
            io.write_field(out / f"dtu_{tag}", d["dt"], args.format)
            dx = d["dx"][0]
            io.write_field(out / f"dxu_{tag}", dx, args.format)
            rows.append((eps, i, t, sm.physical_energy(d["dt"], [dx], cfg.vf)))
        return rows

    rows = [r for rs in _map(one, cfg.eps_list, args.threads) for r in rs]
    io.write_csv(out / "solve_energy.csv", ["eps", "index", "t", "energy"], rows)
    return EXIT_OK


def cmd_reference(cfg: RunConfig, out: Path, args) -> int:
    if cfg.dom.ndim != 1:
        raise GuardError("oracle.dimension", "the reference solver is one-dimensional")
    times = cfg.times
    q = int(cfg.raw["grid"]["reference_refine"])
    cfl = float(cfg.raw["reference"]["cfl"])
    method = cfg.raw["reference"].get("method", "richardson")

    def data_at(eps):
        def f(h):
            d = _data(cfg, eps, h)
            return d.uI, d.vI
        return f

    def one(eps):
        h = cfg.dx(eps) / q
        eta_max = 2.0 * float(np.max(np.abs(cfg.profile.eta0)))
        if method == "richardson":
            # levels 2h, h, h/2; the extrapolated snapshots live on the h grid
            ref = orc.reference_solve_richardson(data_at(eps), cfg.vf, cfg.bc.kind, times, cfg.dom, 2 * h,
                                                 cfl=cfl, eps=eps, eta_max=eta_max)
        else:
            fine = _data(cfg, eps, h)
            ref = orc.reference_solve_1d(fine.uI, fine.vI, cfg.vf, cfg.bc.kind, times, cfg.dom,
                                         cfl=cfl, eps=eps, eta_max=eta_max)
        dat = _data(cfg, eps)
        run = sm.build_run(dat.uI, dat.vI, eps, cfg.dom, cfg.vf, cfg.bc, cfg.cutoff(), times)
        scale = np.sqrt(2 * float(ref.energy[0]))
        errs, ests = [], []
        for i, t in enumerate(times):
            d = sm.assemble(run, t, ("dt",))
            ref_ut = ref.ut[i].subsample(q)
            errs.append((ref_ut - d["dt"]).norm() / scale)
            ests.append(ref.error_estimate[i] / scale if ref.error_estimate else float("nan"))
            io.write_field(out / f"ref_dtu_eps{_eps_tag(eps)}_t{i:03d}", ref_ut, args.format)
        return eps, errs, ests, ref.energy_drift

    res = _map(one, cfg.eps_list, args.threads)
    rows = [(e, i, t, err, est) for e, errs, ests, _ in res
            for i, (t, err, est) in enumerate(zip(times, errs, ests))]
    io.write_csv(out / "reference_errors.csv", ["eps", "index", "t", "rel_err", "reference_error_estimate"], rows)
    io.write_csv(out / "comparison.csv",
                 ["eps", "sup_t_rel_err", "sup_t_reference_error_estimate", "reference_energy_drift"],
                 [(e, max(errs), max(ests), drift) for e, errs, ests, drift in res])
    return EXIT_OK


def cmd_wigner(cfg: RunConfig, out: Path, args) -> int:
    tfs = cfg.raw["test_functions"]
    times = sorted({float(tf["t"]) for tf in tfs})

    def one(eps):
        run = _build_run(cfg, eps, times)
        rows = []
        for tf in tfs:
            phi = wg.TestFunction(float(tf["x0"]), float(tf["rx"]), float(tf["xi0"]), float(tf["rxi"]))
            r = wg.transport_check(float(tf["t"]), phi, run)
            rows.append((eps, tf.get("name", ""), r.t, r.lhs, r.rhs, r.rel_err))
        return rows

    rows = [r for rs in _map(one, cfg.eps_list, args.threads) for r in rs]
    io.write_csv(out / "wigner.csv", ["eps", "test_function", "t", "lhs", "rhs", "rel_err"], rows)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, args) -> int:
    seed = int(cfg.raw.get("verify", {}).get("seed", cfg.raw.get("seed", 0)))
    names = cfg.raw.get("verify", {}).get("checks")
    recs = vfy.run_suite(seed, names)
    ok = all(r["passed"] for r in recs)
    report = {"passed": ok, "seed": seed, "invariants": recs}
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    for r in recs:
        log.info("%s %s = %.3e (%s %s)", "PASS" if r["passed"] else "FAIL", r["name"], r["value"],
                 r["op"], r["threshold"])
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "trace": cmd_trace,
    "beam": cmd_beam,
    "solve": cmd_solve,
    "wigner": cmd_wigner,
    "reference": cmd_reference,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gbsum", description="Gaussian beam summation experiments")
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, default=None, help="JSON run configuration (defaults built in)")
    p.add_argument("--out", type=Path, default=Path("gbsum_out"), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="maximum parallel workers")
    p.add_argument("--eps-override", type=lambda s: [float(v) for v in s.split(",") if v],
                   default=None, help="comma separated eps values replacing eps_list")
    p.add_argument("--format", choices=("csv", "bin"), default="csv", help="field output format")
    return p


def _setup_logging():
    level = os.environ.get("GBS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _report_guards(out: Path, violations: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "errors.json").write_text(json.dumps({"violations": violations}, indent=2) + "\n")
    for v in violations:
        print(f"guard violated: {v['guard']} (module {v['module']}): {v['message']}", file=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    out: Path = args.out
    try:
        cfg = load(args.config, args.eps_override)
    except ConfigError as e:
        _report_guards(out, e.violations)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as e:
        _report_guards(out, [{"guard": "cli.config", "module": "cli", "message": str(e)}])
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.subcommand](cfg, out, args)
    except GuardError as e:
        _report_guards(out, [{"guard": e.guard, "module": e.module, "message": e.detail}])
        return EXIT_CONFIG
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_FAIL
    (out / "config.json").write_text(json.dumps(cfg.raw, indent=2, sort_keys=True) + "\n")
    io.write_manifest(out, cfg.raw, args.subcommand)
    return code


if __name__ == "__main__":
    sys.exit(main())
