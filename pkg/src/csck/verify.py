"""Acceptance checks shared by ``csck verify`` and the test suite.

Every check returns a list of :class:`Measurement` records; a check passes
when all its measurements do.  Two tiers exist: ``full`` runs the stated
problem sizes, ``quick`` shrinks grids, horizons and seed counts so the
whole tier finishes within a minute.  Reports carry no timings so that
repeated runs are byte-identical; timings are returned separately.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from . import functionals as fn
from .bergman import (
    balance_iterate,
    density_of_states,
    integrated_density,
    lu_coefficient_check,
)
from .flows import (
    convergence_criterion,
    dissipation_check,
    kr_initial_constant,
    monotonicity_report,
    run_calabi_flow,
    run_kr_flow,
)
from .geodesics import (
    BergmanPath,
    GeodesicSpec,
    bergman_vs_exact,
    geodesic_path,
    mass_identity_check,
    segment_weights,
)
from .p1metric import InvariantMetricP1, bump_family
from .parallel import ordered_map
from .polytope import box, build_polytope, halfspace, interval, simplex
from .potentials import abreu_scalar_curvature, guillemin_potential
from .stability import PLConvexFunction, dt_norm, futaki, futaki_from_weights

TIERS = ("quick", "full")


@dataclass(frozen=True)
class Measurement:
    """One measured quantity against its acceptance threshold.

    ``relation`` is one of ``<``, ``<=``, ``>=``, ``==``, ``in`` (closed
    interval ``tolerance = [lo, hi]``) or ``true``.  ``basis`` says where
    the target comes from: ``closed-form``, ``oracle`` (an independent
    computation) or ``property`` (a structural invariant).
    """

    name: str
    value: object
    tolerance: object
    relation: str
    basis: str
    passed: bool


def measure(name, value, relation, tolerance, basis) -> Measurement:
    if relation == "<":
        ok = value < tolerance
    elif relation == "<=":
        ok = value <= tolerance
    elif relation == ">=":
        ok = value >= tolerance
    elif relation == "==":
        ok = value == tolerance
    elif relation == "in":
        ok = tolerance[0] <= value <= tolerance[1]
    elif relation == "true":
        ok = bool(value)
    else:
        raise ValueError(f"unknown relation {relation!r}")
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    return Measurement(name, value, tolerance, relation, basis, bool(ok))


@dataclass(frozen=True)
class CheckResult:
    criterion: int
    title: str
    tier: str
    measurements: tuple

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.measurements)

    def to_json(self) -> dict:
        return {
            "criterion": self.criterion,
            "title": self.title,
            "tier": self.tier,
            "passed": self.passed,
            "measurements": [asdict(m) for m in self.measurements],
        }

    def summary_line(self) -> str:
        failed = [m.name for m in self.measurements if not m.passed]
        status = "PASS" if self.passed else "FAIL"
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"criterion {self.criterion:2d} [{status}] {self.title}{tail}"


# ---------------------------------------------------------------- 1 Abreu


def check_abreu(tier: str) -> list:
    out = []
    line = guillemin_potential(interval())
    x = (np.arange(50) + 0.5) / 50
    r = abreu_scalar_curvature(line, x[:, None])
    out.append(measure("interval: max |R - 2| at 50 points", float(np.max(np.abs(r - 2))), "<", 1e-8, "closed-form"))
    tri = guillemin_potential(simplex(2))
    pts = _simplex_interior_points(50)
    r2 = abreu_scalar_curvature(tri, pts)
    out.append(measure("2-simplex: max |R - 6| at 50 points", float(np.max(np.abs(r2 - 6))), "<", 1e-6, "oracle"))
    return out


def _simplex_interior_points(n: int) -> np.ndarray:
    """``n`` deterministic points of the open unit triangle (barycentric grid, shrunk)."""
    pts = []
    m = 1
    while m * (m + 1) // 2 < n:
        m += 1
    for i in range(m):
        for j in range(m - i):
            pts.append(((i + 1 / 3) / (m + 1 / 3), (j + 1 / 3) / (m + 1 / 3)))
    return np.array(pts[:n])


# ---------------------------------------------------------------- 2 Futaki


def _square_abs() -> PLConvexFunction:
    return PLConvexFunction(((( Fraction(1), Fraction(0)), Fraction(-1, 2)), ((Fraction(-1), Fraction(0)), Fraction(1, 2))))


def check_futaki(tier: str) -> list:
    unit = interval()
    out = [
        measure("F([0,1], 2x - 3)", abs(futaki(unit, PLConvexFunction.affine([2], -3))), "<", 1e-12, "closed-form"),
        measure("F([0,1], |x - 1/2|) - 1/2", abs(futaki(unit, _abs_half()) - 0.5), "<", 1e-10, "closed-form"),
    ]
    polys = {"interval": unit, "2-simplex": simplex(2), "square": box([1, 1]), "3-simplex": simplex(3),
             "trapezoid": _trapezoid()}
    for name, poly in polys.items():
        one = PLConvexFunction.constant(poly.dimension, 1)
        out.append(measure(f"F({name}, 1)", abs(futaki(poly, one)), "<", 1e-12, "closed-form"))
    return out


def _abs_half() -> PLConvexFunction:
    return PLConvexFunction((((Fraction(1),), Fraction(-1, 2)), ((Fraction(-1),), Fraction(1, 2))))


def _trapezoid():
    # Hirzebruch-type trapezoid: 0 <= y <= 1, 0 <= x <= 2 - y
    return build_polytope([
        halfspace([1, 0], 0), halfspace([0, 1], 0), halfspace([0, -1], 1), halfspace([-1, -1], 2),
    ])


# ---------------------------------------------------------------- 3 weights vs polytope


def futaki_pairs() -> list:
    f = Fraction
    return [
        ("[0,1], |x - 1/2|", interval(), _abs_half()),
        ("[0,1], max(x, 1/3)", interval(), PLConvexFunction((((f(1),), f(0)), ((f(0),), f(1, 3))))),
        ("2-simplex, max(x, y)", simplex(2), PLConvexFunction((((f(1), f(0)), f(0)), ((f(0), f(1)), f(0))))),
        ("square, |x - 1/2|", box([1, 1]), _square_abs()),
        ("2-simplex, max(x + y, 1/2)",
         simplex(2), PLConvexFunction((((f(1), f(1)), f(0)), ((f(0), f(0)), f(1, 2))))),
        ("trapezoid, max(y, 1/2)", _trapezoid(), PLConvexFunction((((f(0), f(1)), f(0)), ((f(0), f(0)), f(1, 2))))),
    ]


def check_futaki_weights(tier: str) -> list:
    ks = (4, 8, 16, 32, 64) if tier == "full" else (4, 8, 16, 32)
    out = []

    def one(item):
        name, poly, f = item
        _, rep = futaki_from_weights(poly, f, ks)
        exact = futaki(poly, f)
        return name, abs(rep["calibrated"] - exact) / abs(exact)

    for name, rel in ordered_map(one, futaki_pairs()):
        out.append(measure(f"{name}: relative error", rel, "<", 0.02, "oracle"))
    out.append(measure("number of pairs", len(out), ">=", 5, "property"))
    return out


# ---------------------------------------------------------------- 4 D(T)


def check_dt_norm(tier: str) -> list:
    ks = (4, 8, 16, 32, 64) if tier == "full" else (4, 8, 16, 32)
    unit = interval()
    d = dt_norm(unit, PLConvexFunction.affine([1], 0), ks)
    d_const = dt_norm(unit, PLConvexFunction.constant(1, 3), ks)
    return [
        measure("[0,1], x: |12 D^2 - 1|", abs(12 * d**2 - 1), "<", 0.02, "oracle"),
        measure("[0,1], constant: D", d_const, "==", 0.0, "closed-form"),
    ]


# ---------------------------------------------------------------- 5 density of states


def perturbed_metric() -> InvariantMetricP1:
    """Fubini-Study times ``exp(-0.1 x (1 - x))``."""
    return InvariantMetricP1.from_function(lambda x: 0.1 * x * (1 - x), 16)


def check_density(tier: str) -> list:
    fs = InvariantMetricP1.fubini_study(16)
    x = np.linspace(0, 1, 33)
    worst = max(float(np.max(np.abs(density_of_states(fs, k, x) - (k + 1)))) for k in range(1, 33))
    out = [measure("FS: max |rho_k - (k+1)| for k <= 32", worst, "<", 1e-8, "closed-form")]
    metrics = [perturbed_metric()] + [bump_family(s, degree=20, amplitude=0.05) for s in range(3 if tier == "full" else 1)]
    ks = (1, 8, 32, 64) if tier == "full" else (1, 8, 32)
    worst_int = max(abs(integrated_density(m, k) - (k + 1)) for m in metrics for k in ks)
    out.append(measure("perturbed: max |int rho_k - (k+1)|", worst_int, "<", 1e-8, "closed-form"))
    lu = lu_coefficient_check(perturbed_metric(), (8, 16, 32, 64))
    out.append(measure("Lu: max |A1 - R/2| / max |R/2|", lu["max_relative_deviation"], "<", 0.05, "oracle"))
    return out


# ---------------------------------------------------------------- 6 balancing


def check_balance(tier: str) -> list:
    fs = InvariantMetricP1.fubini_study(16)
    _, rep_fs = balance_iterate(fs, 8, tol=1e-8)
    _, rep = balance_iterate(bump_family(0, degree=24, amplitude=0.08), 8, tol=1e-8, max_steps=500,
                             raise_on_failure=False)
    return [
        measure("perturbed k=8: final residual", rep["residual"], "<", 1e-8, "property"),
        measure("perturbed k=8: max step increase of -F0", rep["max_neg_F0_increase"], "<=", 0.0, "property"),
        measure("FS start: steps", rep_fs["steps"], "==", 0, "closed-form"),
    ]


# ---------------------------------------------------------------- 7 energy identities


def check_energies(tier: str) -> list:
    b = InvariantMetricP1.fubini_study(24)
    n_pairs, n_chain = (20, 100) if tier == "full" else (6, 30)
    worst_f0 = worst_k = worst_alt = 0.0
    for s in range(n_pairs):
        p1 = fn.random_potential(2 * s, b, amplitude=0.05)
        b1 = b.with_coeffs(b.coeffs + p1)
        p2 = fn.random_potential(2 * s + 1, b1, amplitude=0.05)
        worst_f0 = max(worst_f0, abs(fn.eval_F0(b, p1) + fn.eval_F0(b1, p2) - fn.eval_F0(b, p1 + p2)))
        worst_k = max(worst_k, abs(fn.eval_K(b, p1) + fn.eval_K(b1, p2) - fn.eval_K(b, p1 + p2)))
    slack = np.inf
    for s in range(n_chain):
        psi = fn.random_potential(1000 + s, b)
        i_val, j_val = fn.eval_I_J(b, psi)
        slack = min(slack, j_val, i_val / 2 - j_val, j_val - i_val / 2)
        worst_alt = max(worst_alt, abs(fn.eval_F0(b, psi) - fn.eval_F0_alternative(b, psi)))
    return [
        measure("F0 cocycle: max defect", worst_f0, "<", 1e-8, "closed-form"),
        measure("K cocycle: max defect", worst_k, "<", 1e-8, "closed-form"),
        measure("0 <= J <= I/2 <= J: min slack", float(slack), ">=", -1e-10, "closed-form"),
        measure("two F0 expressions: max difference", worst_alt, "<", 1e-9, "closed-form"),
    ]


# ---------------------------------------------------------------- 8 geodesics


def check_geodesics(tier: str) -> list:
    fs = InvariantMetricP1.fubini_study(16)
    end = perturbed_metric().with_coeffs(2 * perturbed_metric().coeffs)  # FS e^{-0.2 x (1 - x)}
    grid, tsteps = (256, 64) if tier == "full" else (64, 16)
    rep = bergman_vs_exact(GeodesicSpec("segment", fs, end, k_list=(4, 8, 16, 32), grid=grid, tsteps=tsteps),
                           reverse=tier == "full")
    smooth = mass_identity_check(lambda x, t: t * t * x * (1 - x), 0.0, 1.0, 64, 32)
    lam, _ = segment_weights(fs, end, 8)
    bergman = mass_identity_check(BergmanPath.from_weights(fs, 8, lam).absolute(), 0.0, 1.0, 64, 32)
    exact = mass_identity_check(geodesic_path(fs, end), 0.0, 1.0, 64 if tier == "full" else 32, 32)
    return [
        measure("segment errors strictly decreasing in k", rep["strictly_decreasing"], "true", True, "property"),
        measure("rate exponent of (log k / k)", rep["rate_exponent"], "in", [0.7, 1.3], "oracle"),
        measure("mass gap, path t^2 x (1 - x)", smooth["gap"], "<", 1e-4, "closed-form"),
        measure("mass gap, Bergman segment k=8", bergman["gap"], "<", 1e-4, "closed-form"),
        measure("exact geodesic: |mass lhs|", abs(exact["lhs"]), "<", 1e-5, "closed-form"),
    ]


# ---------------------------------------------------------------- 9 Kahler-Ricci flow


def _kr_seed(seed: int, tier: str) -> dict:
    degree = 20 if tier == "full" else 12
    horizon = 30.0 if tier == "full" else 8.0
    start = bump_family(seed, degree=degree, amplitude=0.05)
    run = run_kr_flow(start, T=horizon, dt=1e-2)
    t, r_sup = run.series("t"), run.series("R_sup")
    hit = np.flatnonzero(r_sup < 1e-6)
    mono = monotonicity_report(run, ("K", "F"), slack=1e-12)
    harnack = run.series("harnack")
    conv = convergence_criterion(t, r_sup)
    return {
        "t_hit": float(t[hit[0]]) if len(hit) else float("inf"),
        "K_inc": mono["K"]["max_increase"],
        "F_inc": mono["F"]["max_increase"],
        "harnack": float(np.ptp(harnack)),
        "conv_ok": conv["verdict"] == "bounded" and (conv["decay_rate"] is None or conv["decay_rate"] > 0),
        "integral": conv["integral"],
    }


def check_kr_flow(tier: str) -> list:
    seeds = (0, 1, 2) if tier == "full" else (0,)
    rows = ordered_map(lambda s: _kr_seed(s, tier), seeds)
    out = []
    for s, r in zip(seeds, rows):
        out += [
            measure(f"seed {s}: first t with sup|R - 2| < 1e-6", r["t_hit"], "<", 30.0, "property"),
            measure(f"seed {s}: max step increase of K", r["K_inc"], "<=", 1e-12, "property"),
            measure(f"seed {s}: max step increase of F", r["F_inc"], "<=", 1e-12, "property"),
            measure(f"seed {s}: drift of the Harnack constant", r["harnack"], "<", 1e-6, "closed-form"),
            measure(f"seed {s}: curvature integral bounded, positive decay", r["conv_ok"], "true", True, "property"),
        ]
    if tier == "full":
        c0 = kr_initial_constant(bump_family(0, degree=20, amplitude=0.05), T=30.0, dt=1e-2, check_horizon=15.0)
    else:
        c0 = kr_initial_constant(bump_family(0, degree=12, amplitude=0.05), T=12.0, dt=1e-2, check_horizon=8.0)
    ratio = c0["sup_phidot_after_1_corrected"] / c0["phidot_at_1_corrected"]
    out.append(measure("corrected c0: sup_{t>=1} |phi_dot| / |phi_dot(1)|", ratio, "<", 10.0, "property"))
    return out


# ---------------------------------------------------------------- 10 Calabi flow


def check_calabi_flow(tier: str) -> list:
    degree, horizon = (16, 1.0) if tier == "full" else (10, 0.6)
    run = run_calabi_flow(bump_family(0, degree=degree, amplitude=0.05), T=horizon, dt=1e-3)
    mono = monotonicity_report(run, ("calabi",), slack=0.0)
    diss = dissipation_check(run)
    ext = run.series("extremal_residual")
    return [
        measure("max step increase of C", mono["calabi"]["max_increase"], "<=", 1e-20, "property"),
        measure("mid-run |dK/dt / (-C) - 1|", diss["rel_error_mid"], "<", 0.01, "closed-form"),
        measure("extremal residual final / initial", float(ext[-1] / ext[0]), "<", 1e-6, "property"),
        measure("final sup|R - 2|", float(run.series("R_sup")[-1]), "<", 1e-5, "property"),
    ]


# ---------------------------------------------------------------- 11 determinism


def check_determinism(tier: str) -> list:
    """Run the quick tier of the other checks twice and compare the serialized reports."""
    from .io import dumps

    inner = [c for c in CHECKS if c != 11]
    first, t1 = verify("quick", inner)
    second, t2 = verify("quick", inner)
    return [
        measure("quick tier reports byte-identical", dumps(first) == dumps(second), "true", True, "property"),
        measure("quick tier under 60 s", max(sum(t1.values()), sum(t2.values())) < 60.0, "true", True, "property"),
    ]


CHECKS = {
    1: ("Abreu curvature of Guillemin potentials", check_abreu),
    2: ("Futaki invariant of PL functions", check_futaki),
    3: ("Futaki from weight asymptotics", check_futaki_weights),
    4: ("Donaldson-Futaki norm D", check_dt_norm),
    5: ("density of states and Lu coefficient", check_density),
    6: ("balancing on the torus-invariant slice", check_balance),
    7: ("energy functional identities", check_energies),
    8: ("Bergman and exact geodesics", check_geodesics),
    9: ("Kahler-Ricci flow on P^1", check_kr_flow),
    10: ("Calabi flow on P^1", check_calabi_flow),
    11: ("determinism of the quick tier", check_determinism),
}


def run_check(criterion: int, tier: str = "full") -> tuple:
    """Run one check; returns ``(CheckResult, seconds)``."""
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}")
    title, func = CHECKS[criterion]
    start = time.perf_counter()
    with np.errstate(over="ignore", under="ignore"):
        measurements = tuple(func(tier))
    return CheckResult(criterion, title, tier, measurements), time.perf_counter() - start


def verify(tier: str = "quick", criteria=None) -> tuple:
    """Run the selected checks in order; returns ``(report, timings)``."""
    chosen = sorted(CHECKS) if criteria is None else sorted(set(int(c) for c in criteria))
    results, timings = [], {}
    for c in chosen:
        res, secs = run_check(c, tier)
        results.append(res)
        timings[c] = secs
    report = {
        "tier": tier,
        "results": [r.to_json() for r in results],
        "passed": sum(r.passed for r in results),
        "failed": sum(not r.passed for r in results),
    }
    return report, timings
