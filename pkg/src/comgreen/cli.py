"""Command-line front end.

Subcommands: list, verify, derive, kernel, propagate, spectrum, parse.
Exit codes: 0 pass, 1 check failed, 2 invalid input.  All outputs are
deterministic functions of the flags and config file; CSV floats carry 17
significant digits (round-trip exact for binary64).
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import catalog
from .conservation import chebyshev_times, check_commuting_complete_set, conservation_residual
from .eigenstates import assemble_kernel, kernel_evaluate
from .errors import ComgreenError
from .gridsim import (
    Axis,
    evolve,
    gaussian_packet,
    imaginary_time_ground_state,
    kernel_convolve,
    l2_distance,
    save_csv,
)
from .modelparse import load_model_file

FMT = "%.17g"


def _fail_input(msg):
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _emit_json(payload, path=None):
    text = json.dumps(payload, indent=2)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _parse_point(text, dim):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != dim:
        raise ValueError(f"expected {dim} comma-separated coordinates, got {text!r}")
    return vals[0] if dim == 1 else np.array(vals)


def _parse_points(text, dim):
    """Either 'lo:hi:n' (1D range) or ';'-separated points."""
    if ":" in text and dim == 1:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    pts = [_parse_point(chunk, dim) for chunk in text.split(";") if chunk]
    return np.array(pts)


def _params_from_args(args):
    params = {}
    for item in args.param or []:
        name, _, value = item.partition("=")
        if not _:
            raise ValueError(f"--param expects name=value, got {item!r}")
        params[name] = float(value)
    return params or None


def _run_config(args):
    """Merge the [run] section of --config (if any) under the CLI flags."""
    cfg = {}
    if getattr(args, "config", None):
        model = load_model_file(args.config)
        cfg = dict(model.run)
        cfg["_model"] = model
    return cfg


def _cfg_float(args, cfg, flag, key, default):
    v = getattr(args, flag, None)
    if v is not None:
        return v
    if key in cfg:
        return float(cfg[key])
    return default


# ---------------------------------------------------------------------------
# subcommands


def cmd_list(args):
    print("systems (hamiltonian + conserved set + closed-form kernel):")
    for name in catalog.SYSTEM_NAMES:
        spec = catalog.catalog_kernel(name)
        lo, hi = spec.window
        win = f"({lo:g}, {'inf' if math.isinf(hi) else f'{hi:g}'})"
        C = spec.C
        print(f"  {name:<9} dim={spec.dim}  window={win}  "
              f"C={C.real:+.6f}{C.imag:+.6f}i ({spec.C_source})")
    print("observables:")
    for name in catalog.OBSERVABLE_NAMES:
        obs = catalog.catalog_observable(name)
        print(f"  {name:<12} dim={obs.dim}  {obs.source}")
    return 0


def cmd_verify(args):
    params = _params_from_args(args)
    tol = args.tol
    if args.system:
        observables, H = catalog.catalog_set(args.system, params)
        lo, hi = catalog.system_window(args.system, params)
        if math.isinf(hi):
            hi = 3.0
    elif args.model:
        model = load_model_file(args.model)
        H, obs_map, _ = model.lower_all(params and dict(params) or None)
        if H is None:
            return _fail_input("model file has no [hamiltonian] section")
        observables = list(obs_map.values())
        lo, hi = 0.0, 3.0
    else:
        return _fail_input("verify needs --system or --model")
    t_lo = args.t_lo if args.t_lo is not None else lo + 0.02 * (hi - lo)
    t_hi = args.t_hi if args.t_hi is not None else lo + 0.98 * (hi - lo)
    times = chebyshev_times(t_lo, t_hi, args.samples)
    report = check_commuting_complete_set(observables, H, times, tol=tol)
    payload = report.to_dict()
    if not payload["pass"] and not report.structural_failure and report.samples:
        worst = max(report.samples, key=lambda s: s.residual_max)
        per_obs = [
            (o, conservation_residual(o, H, worst.t).max_coefficient(worst.t))
            for o in observables
        ]
        obs, _ = max(per_obs, key=lambda kv: kv[1])
        R = conservation_residual(obs, H, worst.t)
        payload["worst_residual"] = {
            "observable": obs.label or "obs",
            "t": worst.t,
            "alpha": list(R.alpha_at(worst.t)),
            "gamma": R.gamma_at(worst.t),
        }
    _emit_json(payload, args.json)
    return 0 if payload["pass"] else 1


def cmd_derive(args):
    params = _params_from_args(args)
    try:
        observables, H = catalog.catalog_set(args.system, params)
    except ValueError as exc:
        return _fail_input(exc)
    window = catalog.system_window(args.system, params)
    reference = catalog.catalog_kernel(args.system, params)
    spec = assemble_kernel(observables, H, window, label=args.system,
                           params=reference.params, hbar=reference.hbar)

    hi = window[1] if math.isfinite(window[1]) else 2.5
    ts = np.linspace(0.15, 0.85, args.times) * hi
    if spec.dim == 1:
        xs = np.linspace(-2.0, 2.0, args.points)
        x0s = np.linspace(-1.5, 1.5, args.points)
    else:
        s = np.linspace(-1.5, 1.5, args.points)
        xs = np.stack([s, 0.4 * s - 0.2], axis=-1)
        x0s = np.stack([0.7 * s + 0.1, -s], axis=-1)

    deviation = 0.0
    rows = []
    for t in ts:
        if spec.dim == 1:
            Kp = spec.evaluator(xs[:, None], t, x0s[None, :])
            Kc = reference.evaluator(xs[:, None], t, x0s[None, :])
            for i, x in enumerate(xs):
                for j, x0 in enumerate(x0s):
                    rows.append((t, (x,), (x0,), Kp[i, j]))
        else:
            Kp = spec.evaluator(xs[:, None, :], t, x0s[None, :, :])
            Kc = reference.evaluator(xs[:, None, :], t, x0s[None, :, :])
            for i in range(len(xs)):
                for j in range(len(x0s)):
                    rows.append((t, tuple(xs[i]), tuple(x0s[j]), Kp[i, j]))
        deviation = max(deviation, float(np.max(np.abs(Kp - Kc) / np.abs(Kc))))

    t_probe = 0.4 * hi
    C_der, spread = catalog.implied_constant(
        spec, reference, t_probe,
        xs if spec.dim > 1 else xs[:7], x0s if spec.dim > 1 else x0s[:7],
    )
    meta = spec.metadata()
    meta["derived_C"] = {"re": C_der.real, "im": C_der.imag}
    meta["catalog_deviation"] = deviation

    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{args.system}_kernel.json")
    csv_path = os.path.join(out_dir, f"{args.system}_kernel_samples.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        if spec.dim == 1:
            fh.write("t,x,x0,re,im\n")
        else:
            fh.write("t,x,y,x0,y0,re,im\n")
        for t, x, x0, val in rows:
            coords = ",".join(FMT % c for c in (*x, *x0))
            fh.write(f"{FMT % t},{coords},{FMT % val.real},{FMT % val.imag}\n")
    _emit_json(meta, json_path)
    print(f"max deviation from catalog: {deviation:.3e}")
    print(f"derived C: {C_der.real:+.12f}{C_der.imag:+.12f}i  "
          f"(catalog {reference.C.real:+.12f}{reference.C.imag:+.12f}i, spread {spread:.2e})")
    print(f"samples: {csv_path}")
    return 0


def cmd_kernel(args):
    params = _params_from_args(args)
    try:
        spec = catalog.catalog_kernel(args.system, params,
                                      branch="tracked" if args.tracked else "first-window")
    except ValueError as exc:
        return _fail_input(exc)
    xs = _parse_points(args.x, spec.dim)
    x0 = _parse_point(args.x0, spec.dim)
    vals = kernel_evaluate(spec, xs, args.t, x0)
    vals = np.atleast_1d(vals)
    xs_arr = np.atleast_1d(xs).reshape(len(vals), -1)
    out = sys.stdout if not args.out else open(args.out, "w", encoding="utf-8")
    try:
        cols = "x,re,im" if spec.dim == 1 else "x,y,re,im"
        out.write(cols + "\n")
        for row, v in zip(xs_arr, vals):
            coords = ",".join(FMT % c for c in row)
            out.write(f"{coords},{FMT % v.real},{FMT % v.imag}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_propagate(args):
    cfg = _run_config(args)
    params = _params_from_args(args)
    try:
        H = catalog.catalog_hamiltonian(args.system, params)
        spec = catalog.catalog_kernel(args.system, params)
    except ValueError as exc:
        return _fail_input(exc)
    dim = spec.dim
    n = int(_cfg_float(args, cfg, "grid_n", "grid.n", 1024 if dim == 1 else 128))
    lo = _cfg_float(args, cfg, "grid_min", "grid.min", -11.0)
    hi = _cfg_float(args, cfg, "grid_max", "grid.max", 11.0)
    w_lo, w_hi = spec.window
    default_t = 0.6 * w_hi if math.isfinite(w_hi) else 1.5
    t_final = _cfg_float(args, cfg, "t_final", "t_final", default_t)
    dt = _cfg_float(args, cfg, "dt", "dt", 5e-4 if dim == 1 else 2e-3)
    tol = _cfg_float(args, cfg, "tol", "tol", None)

    axes = tuple(Axis(lo, hi, n) for _ in range(dim))
    center = _parse_point(args.center, dim) if args.center else (0.3 if dim == 1 else (0.5, 0.0))
    momentum = _parse_point(args.momentum, dim) if args.momentum else None
    psi0 = gaussian_packet(axes, center, args.sigma, momentum=momentum, hbar=spec.hbar)

    marks = list(np.linspace(0.0, t_final, args.frames + 1)[1:]) if args.frames else []
    result = evolve(H, psi0, t_final, dt, hbar=spec.hbar, snapshot_times=marks)
    conv = kernel_convolve(spec, psi0, t_final)
    dist = l2_distance(result.state, conv)

    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    frames = []
    for snap in result.snapshots:
        path = os.path.join(out_dir, f"{args.system}_frame_t{snap.t:.6f}.csv")
        save_csv(snap, path)
        frames.append(path)
    save_csv(result.state, os.path.join(out_dir, f"{args.system}_final_evolved.csv"))
    save_csv(conv, os.path.join(out_dir, f"{args.system}_final_kernel.csv"))

    payload = {
        "system": args.system,
        "t_final": t_final,
        "dt": dt,
        "l2_disagreement": dist,
        "norm_drift": result.norm_drift,
        "grid": {"n": n, "min": lo, "max": hi},
        "packet": {
            "center": list(np.atleast_1d(center)),
            "sigma": args.sigma,
            "momentum": list(np.atleast_1d(momentum)) if momentum is not None else None,
        },
        "frames": frames,
    }
    _emit_json(payload, os.path.join(out_dir, f"{args.system}_propagate.json"))
    if tol is not None and dist > tol:
        return 1
    return 0


def cmd_spectrum(args):
    from .errors import ConvergenceError

    params = _params_from_args(args)
    try:
        spec = catalog.catalog_kernel(args.system, params)
    except ValueError as exc:
        return _fail_input(exc)
    tau_hi = args.tau_max
    try:
        even = imaginary_time_ground_state(spec, (tau_hi / 10.0, tau_hi))
    except ConvergenceError:
        # time-dependent driving or a potential unbounded below: the
        # imaginary-time diagonal has no constant decay rate to extract
        payload = {
            "system": args.system,
            "continuous": False,
            "E0": None,
            "E1": None,
            "slope_spread": None,
            "note": "no convergent decay rate: the system has no normalizable "
                    "ground state (time-dependent driving or unbounded potential)",
        }
        _emit_json(payload, args.json)
        return 1
    payload = {
        "system": args.system,
        "continuous": even.continuous,
        "E0": None if even.continuous else even.energy,
        "E1": None,
        "tau_window": list(even.tau_window),
        "slope_spread": even.spread,
    }
    if args.system == "ho" and not even.continuous:
        odd = imaginary_time_ground_state(spec, (tau_hi / 10.0, 0.75 * tau_hi),
                                          sector="odd", probe=args.probe)
        payload["E1"] = odd.energy
    _emit_json(payload, args.json)
    return 0


def cmd_parse(args):
    from .modelparse import lower, parse, print_ast

    params = _params_from_args(args)
    if args.expr:
        ast = parse(args.expr)
        obj = lower(ast, params or {})
        kind = type(obj).__name__
        payload = {"kind": kind, "dim": obj.dim, "canonical": print_ast(ast)}
        if hasattr(obj, "alpha"):
            payload["alpha"] = [a.description for a in obj.alpha]
            payload["gamma"] = obj.gamma.description
        else:
            payload["M"] = [[e.description for e in row] for row in obj.M]
            payload["v"] = [e.description for e in obj.v]
            payload["c"] = obj.c.description
        _emit_json(payload)
        return 0
    if args.model:
        model = load_model_file(args.model)
        H, obs, _ = model.lower_all(params and dict(params) or None)
        payload = {
            "dim": model.dim(),
            "params": model.params,
            "hamiltonian": H.source if H else None,
            "observables": {name: o.source for name, o in obs.items()},
        }
        _emit_json(payload)
        return 0
    return _fail_input("parse needs --expr or --model")


# ---------------------------------------------------------------------------
# argument wiring


def build_parser():
    ap = argparse.ArgumentParser(
        prog="comgreen",
        description="Propagators for quadratic Hamiltonians from time-dependent "
                    "constants of motion, with grid-based verification.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="show catalog systems and observables")

    p = sub.add_parser("verify", help="conservation and commuting-set checks")
    p.add_argument("--system", choices=catalog.SYSTEM_NAMES)
    p.add_argument("--model", help="model file with [hamiltonian] and [observables]")
    p.add_argument("--t-lo", type=float, default=None)
    p.add_argument("--t-hi", type=float, default=None)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--json", help="also write the JSON report here")
    p.add_argument("--param", action="append", help="name=value (repeatable)")

    p = sub.add_parser("derive", help="assemble the kernel from the conserved set")
    p.add_argument("--system", required=True, choices=catalog.SYSTEM_NAMES)
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--times", type=int, default=10)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--param", action="append")

    p = sub.add_parser("kernel", help="evaluate a catalog kernel")
    p.add_argument("--system", required=True, choices=catalog.SYSTEM_NAMES)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", required=True, help="'lo:hi:n' or ';'-separated points")
    p.add_argument("--x0", required=True, help="initial point ('x' or 'x,y')")
    p.add_argument("--tracked", action="store_true", help="branch tracking past caustics")
    p.add_argument("--out")
    p.add_argument("--param", action="append")

    p = sub.add_parser("propagate", help="grid evolution vs kernel quadrature")
    p.add_argument("--system", required=True, choices=catalog.SYSTEM_NAMES)
    p.add_argument("--config", help="model file whose [run] section sets defaults")
    p.add_argument("--grid-n", type=int, default=None)
    p.add_argument("--grid-min", type=float, default=None)
    p.add_argument("--grid-max", type=float, default=None)
    p.add_argument("--t-final", dest="t_final", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tol", type=float, default=None, help="exit 1 if L2 disagreement exceeds")
    p.add_argument("--center", help="packet center ('x' or 'x,y')")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--momentum", help="packet momentum ('p' or 'px,py')")
    p.add_argument("--frames", type=int, default=0, help="intermediate CSV frames")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--param", action="append")

    p = sub.add_parser("spectrum", help="imaginary-time spectral extraction")
    p.add_argument("--system", required=True, choices=catalog.SYSTEM_NAMES)
    p.add_argument("--tau-max", dest="tau_max", type=float, default=80.0)
    p.add_argument("--probe", type=float, default=1.0, help="odd-sector probe point")
    p.add_argument("--json")
    p.add_argument("--param", action="append")

    p = sub.add_parser("parse", help="parse and lower an expression or model file")
    p.add_argument("--expr")
    p.add_argument("--model")
    p.add_argument("--param", action="append")
    return ap


_COMMANDS = {
    "list": cmd_list,
    "verify": cmd_verify,
    "derive": cmd_derive,
    "kernel": cmd_kernel,
    "propagate": cmd_propagate,
    "spectrum": cmd_spectrum,
    "parse": cmd_parse,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = _COMMANDS[args.command](args)
    except (ComgreenError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = 2
    return code


if __name__ == "__main__":
    sys.exit(main())
