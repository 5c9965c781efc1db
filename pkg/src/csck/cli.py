"""``csck`` command line.

Every command writes one JSON document (``{"manifest": ..., "result": ...}``)
to ``--out`` or stdout, except ``flow`` which writes JSON lines: a manifest
line followed by one record per accepted step.  Exit status is 0 on success,
2 for invalid input or configuration and 3 for numerical failure; in both
error cases a JSON error payload is written to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import functionals as fn
from . import io
from .bergman import (
    balance_iterate,
    density_of_states,
    integrated_density,
    lu_coefficient_check,
    section_norms,
)
from .errors import BadConfig, CsckError, NumericalError, UnknownCommand, ValidationError
from .flows import run_calabi_flow, run_kr_flow
from .geodesics import (
    BergmanPath,
    GeodesicSpec,
    bergman_vs_exact,
    geodesic_path,
    mass_identity_check,
    ray_report,
    segment_weights,
)
from .p1metric import InvariantMetricP1
from .parallel import ordered_map
from .polytope import interval, sigma_measure
from .potentials import abreu_scalar_curvature, futaki_normalization, mean_scalar_curvature
from .stability import destabilizer_search, dt_norm, futaki, futaki_from_weights, toric_k_energy
from .verify import CHECKS, verify

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def int_list(text: str) -> list:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def name_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip()]


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so usage errors get the JSON payload and exit 2."""

    def error(self, message):
        if "argument command: invalid choice" in message:
            raise UnknownCommand(message)
        raise ValidationError(message)


# ---------------------------------------------------------------- commands


def cmd_poly(args):
    poly = io.load_polytope(args.file)
    if args.action == "check":
        return {"delzant": True, "lattice": poly.is_lattice, "dim": poly.dimension,
                "volume": poly.volume, "vertices": poly.vertex_array.tolist()}, [args.file]
    if args.action == "volume":
        return {"volume": poly.volume}, [args.file]
    sigma = sigma_measure(poly)
    return {"volume": poly.volume, "sigma_total": sigma.total, "per_facet": list(sigma.per_facet),
            "density": list(sigma.density)}, [args.file]


def _sample_points(poly, m: int) -> np.ndarray:
    """Cell midpoints of an ``m``-per-axis grid over the bounding box, kept if interior."""
    verts = poly.vertex_array
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(m) + 0.5) / m for i in range(poly.dimension)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    keep = np.array([poly.contains(p, margin=1e-9) for p in pts])
    return pts[keep]


def cmd_abreu(args):
    u = io.load_potential(args.potential)
    pts = _sample_points(u.polytope, args.grid)
    r = abreu_scalar_curvature(u, pts)
    return {
        "points": pts.tolist(),
        "R_values": np.asarray(r).tolist(),
        "R_mean": mean_scalar_curvature(u),
        "mu": futaki_normalization(u.polytope),
    }, [args.potential]


def cmd_futaki(args):
    poly, f = io.load_polytope(args.poly), io.load_pl(args.pl)
    return {"futaki": futaki(poly, f, args.order), "mu": futaki_normalization(poly)}, [args.poly, args.pl]


def cmd_futaki_weights(args):
    poly, f = io.load_polytope(args.poly), io.load_pl(args.pl)
    estimate, report = futaki_from_weights(poly, f, args.k)
    d, d_report = dt_norm(poly, f, args.k, report=True)
    return {"estimate": estimate, "report": report, "polytope_futaki": futaki(poly, f),
            "D": d, "D_report": d_report}, [args.poly, args.pl]


def cmd_kenergy(args):
    u = io.load_potential(args.potential)
    return {"k_energy": toric_k_energy(u, args.order)}, [args.potential]


def cmd_destabilize(args):
    poly = io.load_polytope(args.poly)
    rep = destabilizer_search(poly, max_entry=args.grid_normals, n_offsets=args.grid_offsets,
                              executor_map=lambda f, items: ordered_map(f, items))
    return rep, [args.poly]


def cmd_bergman(args):
    metric = io.load_metric(args.metric)
    if args.action == "rho":
        (k,) = args.k[:1]
        data = section_norms(metric, k)
        x = np.linspace(0.0, 1.0, args.samples)
        rho = density_of_states(metric, k, x, data)
        return {"k": k, "x": x.tolist(), "rho": rho.tolist(), "integral": integrated_density(metric, k, data),
                "norms": data.to_json()}, [args.metric]
    return lu_coefficient_check(metric, args.k), [args.metric]


def cmd_balance(args):
    metric = io.load_metric(args.metric)
    weights, report = balance_iterate(metric, args.k, max_steps=args.max_steps, tol=args.tol, method=args.method)
    return {"k": args.k, "weights": weights, "report": report}, [args.metric]


def cmd_geodesic(args):
    if args.action == "segment":
        h0, h1 = io.load_metric(args.first), io.load_metric(args.second)
        spec = GeodesicSpec("segment", h0, h1, k_list=tuple(args.k), grid=args.grid, tsteps=args.tsteps)
        report = bergman_vs_exact(spec)

        def gap(k):
            lam, _ = segment_weights(h0, h1, k)
            return mass_identity_check(BergmanPath.from_weights(h0, k, lam).absolute(), 0.0, 1.0, args.tsteps)["gap"]

        report["mass_gaps"] = dict(zip(map(str, spec.k_list), ordered_map(gap, spec.k_list)))
        report["exact_mass_lhs"] = mass_identity_check(geodesic_path(h0, h1), 0.0, 1.0, args.tsteps)["lhs"]
        return report, [args.first, args.second]
    start, pl = io.load_metric(args.first), io.load_pl(args.second)
    spec = GeodesicSpec("ray", start, pl=pl, polytope=interval(), k_list=tuple(args.k), grid=args.grid,
                        tsteps=args.tsteps, horizon=args.horizon)
    return ray_report(spec), [args.first, args.second]


def cmd_energy(args):
    metrics = io.load_metric_batch(args.metric)
    background = io.load_metric(args.background) if args.background else None
    wanted = args.which
    unknown = sorted(set(wanted) - {"I", "J", "F0", "F", "K"})
    if unknown:
        raise ValidationError(f"unknown functional(s): {', '.join(unknown)}")

    def one(m):
        b = background or InvariantMetricP1.fubini_study(m.kernel.degree)
        psi = m.resampled(b.kernel.degree).coeffs - b.coeffs
        rep = fn.evaluate_all(b, psi).as_dict()
        return {key: rep[key] for key in wanted}

    rows = ordered_map(one, metrics)
    inputs = [args.metric] + ([args.background] if args.background else [])
    return {"values": rows if isinstance(io.load_json(args.metric), list) else rows[0]}, inputs


_MONITOR_KEYS = {"K": "K", "F": "F", "F0": "F0", "Rnorm": "R_sup", "RL2": "R_L2", "C": "calabi"}


def _parse_monitors(names: list) -> tuple:
    keys, powers = [], []
    for name in names:
        if name.startswith("mult:p="):
            try:
                powers.append(float(name.split("=", 1)[1]))
            except ValueError as exc:
                raise ValidationError(f"bad monitor {name!r}") from exc
        elif name in _MONITOR_KEYS:
            keys.append(_MONITOR_KEYS[name])
        else:
            raise ValidationError(f"unknown monitor {name!r}; known: {', '.join(_MONITOR_KEYS)}, mult:p=<p>")
    return keys, powers


def cmd_flow(args):
    metric = io.load_metric(args.metric)
    keys, powers = _parse_monitors(args.monitor) if args.monitor else (None, [2.0])
    powers = tuple(powers) or (2.0,)
    if args.kind == "kr":
        run = run_kr_flow(metric, T=args.T, dt=args.dt, p_values=powers, stop_tol=args.stop_tol)
    else:
        run = run_calabi_flow(metric, T=args.T, dt=args.dt, p_values=powers, stop_tol=args.stop_tol)
    records = []
    for rec in run.history:
        if keys is not None:
            rec = {"t": rec["t"], **{k: rec[k] for k in keys if k in rec},
                   **{f"mult_p{p:g}": rec[f"mult_p{p:g}"] for p in powers}}
        records.append(rec)
    return records, [args.metric]


def cmd_verify(args):
    tier = "quick" if args.quick or args.suite == "quick" else "full"
    report, timings = verify(tier, args.criteria)
    by_crit = {r["criterion"]: r for r in report["results"]}
    for c, secs in timings.items():
        status = "PASS" if by_crit[c]["passed"] else "FAIL"
        print(f"criterion {c:2d} [{status}] {by_crit[c]['title']}  ({secs:.1f} s)", file=sys.stderr)
    print(f"{tier} tier: {report['passed']} passed, {report['failed']} failed, {sum(timings.values()):.1f} s",
          file=sys.stderr)
    return report, []


COMMANDS = {
    "poly": cmd_poly, "abreu": cmd_abreu, "futaki": cmd_futaki, "futaki-weights": cmd_futaki_weights,
    "kenergy": cmd_kenergy, "destabilize": cmd_destabilize, "bergman": cmd_bergman, "balance": cmd_balance,
    "geodesic": cmd_geodesic, "energy": cmd_energy, "flow": cmd_flow, "verify": cmd_verify,
}


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", "--json", dest="out", help="output file (default stdout)")
    common.add_argument("--csv", help="also write the main table as CSV to this path")
    common.add_argument("--config", help="TOML or JSON file of option defaults")
    common.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")

    parser = _Parser(prog="csck", description="Toric stability, Bergman and flow computations.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("poly", parents=[common], help="polytope checks")
    p.add_argument("action", choices=["check", "volume", "sigma"])
    p.add_argument("file")

    p = sub.add_parser("abreu", parents=[common], help="scalar curvature of a symplectic potential")
    p.add_argument("potential")
    p.add_argument("--grid", type=int, default=16, help="samples per axis")

    p = sub.add_parser("futaki", parents=[common], help="Futaki invariant of a PL function")
    p.add_argument("poly")
    p.add_argument("pl")
    p.add_argument("--order", type=int, default=12, help="quadrature order")

    p = sub.add_parser("futaki-weights", parents=[common], help="Futaki invariant from weight asymptotics")
    p.add_argument("poly")
    p.add_argument("pl")
    p.add_argument("--k", type=int_list, default=[4, 8, 16, 32, 64])

    p = sub.add_parser("kenergy", parents=[common], help="toric K-energy of a potential")
    p.add_argument("potential")
    p.add_argument("--order", type=int, default=12)

    p = sub.add_parser("destabilize", parents=[common], help="scan simple creases for a destabilizer")
    p.add_argument("poly")
    p.add_argument("--grid-normals", type=int, default=1, help="max |entry| of crease normals")
    p.add_argument("--grid-offsets", type=int, default=10, help="offsets per normal")

    p = sub.add_parser("bergman", parents=[common], help="density of states")
    p.add_argument("action", choices=["rho", "lu"])
    p.add_argument("metric")
    p.add_argument("--k", type=int_list, default=[16])
    p.add_argument("--samples", type=int, default=64)

    p = sub.add_parser("balance", parents=[common], help="balancing iteration at one k")
    p.add_argument("metric")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-steps", type=int, default=500)
    p.add_argument("--method", choices=["fixed-point", "gradient"], default="fixed-point")

    p = sub.add_parser("geodesic", parents=[common], help="Bergman versus exact geodesics")
    p.add_argument("action", choices=["segment", "ray"])
    p.add_argument("first", help="start metric")
    p.add_argument("second", help="end metric (segment) or PL function (ray)")
    p.add_argument("--k", type=int_list, default=[4, 8, 16, 32])
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--tsteps", type=int, default=64)
    p.add_argument("--horizon", type=float, default=3.0)

    p = sub.add_parser("energy", parents=[common], help="energy functionals of one or many metrics")
    p.add_argument("metric", help="metric JSON or a JSON array of metrics")
    p.add_argument("--which", type=name_list, default=["I", "J", "F0", "F", "K"])
    p.add_argument("--background", help="background metric (default Fubini-Study)")

    p = sub.add_parser("flow", parents=[common], help="Kahler-Ricci or Calabi flow")
    p.add_argument("kind", choices=["kr", "calabi"])
    p.add_argument("metric")
    p.add_argument("--T", type=float, default=30.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--monitor", type=name_list, default=None,
                   help="subset of K,F,F0,Rnorm,RL2,C and mult:p=<p> (default: everything)")
    p.add_argument("--stop-tol", type=float, default=None, help="stop once sup|R - 2| falls below this")

    p = sub.add_parser("verify", parents=[common], help="acceptance checks")
    p.add_argument("suite", choices=["quick", "full", "all"])
    p.add_argument("--quick", action="store_true", help="run the quick tier")
    p.add_argument("--criteria", type=int_list, default=None, help=f"subset of {sorted(CHECKS)}")
    p.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    config = io.load_config(known.config)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    dests = {}
    for name, sp in subparsers.choices.items():
        for action in sp._actions:
            if action.dest not in ("help", "config"):
                dests.setdefault(action.dest, []).append((sp, action))
    unknown = sorted(set(config) - set(dests))
    if unknown:
        raise BadConfig(f"{known.config}: unknown option(s): {', '.join(unknown)}")
    for key, value in config.items():
        for sp, action in dests[key]:
            if action.type is not None and isinstance(value, str):
                value = action.type(value)
            elif action.type in (int_list, name_list) and isinstance(value, list):
                value = list(value)
            sp.set_defaults(**{key: value})


def _error_payload(exc: Exception) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("offset", "vertex", "point", "residual"):
        value = getattr(exc, attr, None)
        if value is not None:
            payload[attr] = value
    return payload


def _csv_rows(result):
    if isinstance(result, list):
        return result
    if isinstance(result, dict) and isinstance(result.get("rows"), list):
        return result["rows"]
    if isinstance(result, dict) and "x" in result and "rho" in result:
        return [{"x": a, "rho": b} for a, b in zip(result["x"], result["rho"])]
    return [result] if isinstance(result, dict) else []


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = None
    try:
        parser = build_parser()
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        with np.errstate(over="ignore", under="ignore"):
            result, inputs = COMMANDS[args.command](args)
        params = {k: v for k, v in vars(args).items() if k not in ("out", "csv", "config")}
        manifest = io.manifest_for(["csck", *argv], params, inputs, args.seed).to_json()
        if args.command == "flow":
            lines = [json.dumps(io.to_jsonable({"manifest": manifest}), sort_keys=True)]
            lines += [json.dumps(io.to_jsonable(r), sort_keys=True) for r in result]
            io.write_text("\n".join(lines) + "\n", args.out)
        else:
            io.write_text(io.dumps({"manifest": manifest, "result": result}), args.out)
        if args.csv:
            io.write_csv(_csv_rows(result), args.csv)
        if args.command == "verify" and args.strict and result["failed"]:
            return 1
        return EXIT_OK
    except ValidationError as exc:
        io.write_text(io.dumps(_error_payload(exc)))
        return EXIT_INVALID
    except NumericalError as exc:
        io.write_text(io.dumps(_error_payload(exc)))
        return EXIT_NUMERICAL
    except CsckError as exc:  # pragma: no cover - every error subclasses one of the two above
        io.write_text(io.dumps(_error_payload(exc)))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
