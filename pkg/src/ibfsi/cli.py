"""Command-line front end: simulate, unload, fit, summarize.

Respects IBFSI_THREADS by capping the BLAS/OpenMP thread pools before
numpy gets busy.  All heavy lifting lives in the library modules; this
file only parses arguments and reports outcomes.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np


def _cap_threads():
    cap = os.environ.get("IBFSI_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _cmd_simulate(args):
    from .errors import CheckpointError, ConfigError
    from .runner import RunConfig, run

    try:
        cfg = RunConfig.from_file(args.config)
        state, rows = run(cfg, args.out, restore_path=args.restore)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"completed {state.n} steps to t = {state.t:.6g} s; "
          f"{len(rows)} time-series rows in {args.out}/timeseries.csv")
    return 0


def _parse_law(text):
    from .constitutive import KPA_TO_CGS, ConstitutiveLaw

    fields = {}
    for part in text.split(","):
        key, val = part.split("=")
        fields[key.strip()] = float(val)
    return ConstitutiveLaw(
        c=fields["c"] * KPA_TO_CGS,
        b=fields["b"],
        beta_s=fields.get("beta", 2.5e4) * KPA_TO_CGS,
    )


def _cmd_unload(args):
    from .errors import NonconvergenceError
    from .fesolid import read_fe_mesh, write_fe_mesh, FEMesh
    from .unload import (
        StaticProblem,
        backward_displacement,
        luminal_surface_facets,
    )

    mesh = read_fe_mesh(args.mesh)
    law = _parse_law(args.law)
    facets = luminal_surface_facets(mesh)
    fixed = np.array([], dtype=int)
    pin = True
    if mesh.dim == 3:
        # hold the vessel ends; rigid modes are then constrained
        from .unload import average_vessel_radius

        z = mesh.nodes[:, 2]
        lo = np.where(np.isclose(z, z.min()))[0]
        hi = np.where(np.isclose(z, z.max()))[0]
        fixed = np.concatenate([lo, hi])
        pin = False
    prob = StaticProblem(mesh, law, args.pressure_mmHg, facets,
                         fixed_nodes=fixed, pin_rigid_modes=pin)
    x_loaded = mesh.nodes.copy()
    try:
        X, info = backward_displacement(x_loaded, prob)
    except NonconvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        hist = getattr(exc, "history", [])
        _write_history(os.path.join(os.path.dirname(args.out) or ".", "history.csv"), hist)
        return 3
    out_mesh = FEMesh(X, mesh.elems)
    write_fe_mesh(args.out, out_mesh)
    _write_history(os.path.join(os.path.dirname(args.out) or ".", "history.csv"),
                   info["residuals"])
    print(f"unloaded geometry written to {args.out} "
          f"({info['iterations']} iterations, final residual "
          f"{info['residuals'][-1]:.3e} cm)")
    return 0


def _write_history(path, residuals):
    with open(path, "w") as f:
        f.write("iter,residual\n")
        for i, r in enumerate(residuals):
            f.write(f"{i},{r!r}\n")


def _cmd_fit(args):
    from .constitutive import fit_parameters, read_fit_data, write_fit_result
    from .errors import FitError

    try:
        data = read_fit_data(args.data)
        c, b, res = fit_parameters(data)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        write_fit_result(args.out, c, b, res)
    print(f"c = {c:.6g} kPa, b = {b:.6g}, residual = {res:.3e}")
    return 0


def _cmd_summarize(args):
    from .circulation import hemodynamic_summary
    from .errors import ContractViolation

    data = np.genfromtxt(args.timeseries, delimiter=",", names=True)
    try:
        summary = hemodynamic_summary(
            data["t"], data["q_valve_ml_s"], args.period
        )
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    keys = sorted(summary)
    if args.out:
        with open(args.out, "w") as f:
            f.write(",".join(keys) + "\n")
            f.write(",".join(str(summary[k]) for k in keys) + "\n")
    for k in keys:
        print(f"{k}: {summary[k]}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="ibfsi",
        description="Immersed-boundary / finite-element FSI toolkit",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scene config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--restore", default=None, help="checkpoint to resume from")
    sim.set_defaults(func=_cmd_simulate)

    unl = sub.add_parser("unload", help="recover the zero-pressure geometry")
    unl.add_argument("--mesh", required=True)
    unl.add_argument("--pressure-mmHg", type=float, required=True)
    unl.add_argument("--law", required=True,
                     help="c=<kPa>,b=<..>,beta=<kPa>")
    unl.add_argument("--out", required=True)
    unl.set_defaults(func=_cmd_unload)

    fit = sub.add_parser("fit", help="fit (c, b) to equibiaxial data")
    fit.add_argument("--data", required=True, help="CSV: stretch,stress_kPa")
    fit.add_argument("--out", default=None, help="CSV: c_kPa,b,residual")
    fit.set_defaults(func=_cmd_fit)

    summ = sub.add_parser("summarize", help="per-cycle flow metrics")
    summ.add_argument("--timeseries", required=True)
    summ.add_argument("--period", type=float, required=True)
    summ.add_argument("--out", default=None)
    summ.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None):
    _cap_threads()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
