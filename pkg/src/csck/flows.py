"""Kahler-Ricci and Calabi flows of invariant metrics on P^1.

The flow potential ``phi`` is relative to a fixed background ``b`` (the
initial metric).  Both flows use explicit RK4 in the Legendre coefficients
with a step bounded by the stiffness of the spatial operator, halved when
a stage loses positivity.

Kahler-Ricci:  ``phi_t = log(rho_{b+phi} / rho_b) + MU phi - f_b`` (projected).
Calabi:        ``phi_t = R - MU`` projected in the ``rho``-weighted inner product,
               which makes it the gradient flow of the discrete K-energy.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .errors import NoDecayDetected, NonPositiveMetric, StepCollapse, ValidationError
from .p1metric import MU, InvariantMetricP1

MIN_DT = 1e-12


@dataclass
class FlowState:
    """Potential relative to ``background`` at time ``t``.

    ``history`` is an append-only list of per-step records shared between
    successive states of one run.
    """

    background: InvariantMetricP1
    phi: np.ndarray
    t: float = 0.0
    history: list = field(default_factory=list)
    aux: float = 0.0  # running integral used by the initial-constant scheme

    @property
    def metric(self) -> InvariantMetricP1:
        return self.background.with_coeffs(self.background.coeffs + self.phi)


class _Background:
    """Cached background quantities."""

    def __init__(self, b: InvariantMetricP1):
        self.metric = b
        self.kernel = b.kernel
        self.rho = b.density()
        self.log_rho = b.log_density_coeffs()
        self.ricci_potential = b.ricci_potential_coeffs()


_BG_CACHE: dict = {}


def _bg(b: InvariantMetricP1) -> _Background:
    key = id(b)
    got = _BG_CACHE.get(key)
    if got is None or got.metric is not b:
        if len(_BG_CACHE) > 16:
            _BG_CACHE.clear()
        got = _BG_CACHE[key] = _Background(b)
    return got


def kr_velocity(background: InvariantMetricP1, phi: np.ndarray, mu: float = MU) -> np.ndarray:
    """Coefficients of the Kahler-Ricci flow velocity."""
    bg = _bg(background)
    k = bg.kernel
    rho = k.evaluate(background.density_coeffs + k.laplacian(phi))
    if rho.min() <= 0:
        raise NonPositiveMetric("metric lost positivity")
    return k.project(np.log(rho)) - bg.log_rho + mu * phi - bg.ricci_potential


def calabi_velocity(background: InvariantMetricP1, phi: np.ndarray, mu: float = MU) -> np.ndarray:
    """Coefficients of ``R - MU`` after the ``rho``-weighted projection."""
    m = background.with_coeffs(background.coeffs + phi)
    k = m.kernel
    rho = m.density()
    if rho.min() <= 0:
        raise NonPositiveMetric("metric lost positivity")
    r = k.evaluate(m.ricci_coeffs())
    return k.weighted_projection(r / rho - mu, rho)


def _rk4(rhs, phi, aux_rate, t, dt):
    k1 = rhs(phi)
    k2 = rhs(phi + 0.5 * dt * k1)
    k3 = rhs(phi + 0.5 * dt * k2)
    k4 = rhs(phi + dt * k3)
    new = phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    aux = None
    if aux_rate is not None:
        a = [aux_rate(v, s) for v, s in ((k1, t), (k2, t + dt / 2), (k3, t + dt / 2), (k4, t + dt))]
        aux = dt / 6 * (a[0] + 2 * a[1] + 2 * a[2] + a[3])
    return new, aux


def _stable_dt(background, phi, dt, order: int) -> float:
    k = background.kernel
    rho_min = background.with_coeffs(background.coeffs + phi).min_density
    if rho_min <= 0:
        raise NonPositiveMetric("metric lost positivity")
    lam = k.degree * (k.degree + 1)
    bound = 2.0 * rho_min / lam if order == 2 else 2.5 * (rho_min / lam) ** 2
    return min(dt, bound)


def _advance(state: FlowState, dt: float, rhs, order: int, aux_rate=None, mu: float = MU) -> FlowState:
    dt = _stable_dt(state.background, state.phi, dt, order)
    while True:
        if dt < MIN_DT:
            raise StepCollapse(f"time step fell below {MIN_DT} at t = {state.t}")
        try:
            new, aux = _rk4(rhs, state.phi, aux_rate, state.t, dt)
            if state.background.with_coeffs(state.background.coeffs + new).density().min() > 0:
                break
        except NonPositiveMetric:
            pass
        dt /= 2
    return FlowState(state.background, new, state.t + dt, state.history, state.aux + (aux or 0.0))


def kr_flow_step(state: FlowState, dt: float, mu: float = MU, track_gradient: bool = False,
                 record: bool = True, p_values=(2.0,)) -> FlowState:
    """One accepted explicit RK4 step of the Kahler-Ricci potential flow."""
    b = state.background
    rhs = lambda phi: kr_velocity(b, phi, mu)  # noqa: E731
    aux_rate = None
    if track_gradient:
        aux_rate = lambda v, s: b.kernel.dirichlet(v) * np.exp(-mu * s)  # noqa: E731
    new = _advance(state, dt, rhs, 2, aux_rate, mu)
    if record:
        new.history.append(flow_record(new, "kr", mu, p_values))
    return new


def calabi_flow_step(state: FlowState, dt: float, mu: float = MU, record: bool = True,
                     p_values=(2.0,)) -> FlowState:
    """One accepted explicit RK4 step of the Calabi flow."""
    b = state.background
    rhs = lambda phi: calabi_velocity(b, phi, mu)  # noqa: E731
    new = _advance(state, dt, rhs, 4)
    if record:
        new.history.append(flow_record(new, "calabi", mu, p_values))
    return new


def calabi_functional(metric: InvariantMetricP1, mu: float = MU) -> float:
    """``int (R - MU)^2 rho``."""
    k = metric.kernel
    rho = metric.density()
    r = k.evaluate(metric.ricci_coeffs())
    return k.integrate((r / rho - mu) ** 2 * rho)


def curvature_deviation(metric: InvariantMetricP1, mu: float = MU) -> tuple:
    """Sup over nodes and check grid, and weighted L^2 norm, of ``R - MU``."""
    k = metric.kernel
    grid = k.check_grid()
    sup = max(np.abs(metric.scalar_curvature() - mu).max(), np.abs(metric.scalar_curvature(grid) - mu).max())
    return float(sup), float(np.sqrt(calabi_functional(metric, mu)))


def extremal_residual(metric: InvariantMetricP1) -> float:
    """``L^2`` norm of ``w (R' / rho)'``; vanishes iff R is affine in the moment map."""
    k = metric.kernel
    w = k.w_nodes
    rc, pc = metric.ricci_coeffs(), metric.density_coeffs
    r, r1, r2 = (k.evaluate(rc, None, d) for d in range(3))
    p, p1, p2 = (k.evaluate(pc, None, d) for d in range(3))
    num = r1 * p - r * p1
    dh = (r2 * p - r * p2) / p**3 - 3 * num * p1 / p**4
    return float(np.sqrt(k.integrate(p * (w * dh) ** 2)))


def multiplier_diagnostic(state: FlowState, p: float) -> float:
    """``int exp(-p phi) rho_b``."""
    k = state.background.kernel
    return k.integrate(np.exp(-p * k.evaluate(state.phi)) * state.background.density())


def flow_record(state: FlowState, kind: str, mu: float = MU, p_values=(2.0,)) -> dict:
    """Monitors for one state.

    K, F and the Harnack quantity do not change when a constant is added to
    ``phi``; they are evaluated on the mean-zero part so that growth of the
    constant mode does not swamp them with rounding error.
    """
    b = state.background
    k = b.kernel
    m = state.metric
    rho = m.density()
    gauged = state.phi.copy()
    gauged[0] = 0.0
    sup, l2 = curvature_deviation(m, mu)
    rec = {
        "t": state.t,
        "K": fn.eval_K(b, gauged, mu),
        "F0": fn.eval_F0(b, state.phi),
        "R_sup": sup,
        "R_L2": l2,
        "calabi": l2**2,
        "volume": k.integrate(rho),
        "osc_phi": float(np.ptp(k.evaluate(state.phi))),
        "mean_phi_b": k.inner(state.phi, b.density_coeffs),
    }
    if kind == "kr":
        vel = kr_velocity(b, state.phi, mu)
        vel_gauged = kr_velocity(b, gauged, mu)
        rec["F"] = fn.eval_F(b, gauged, mu)
        rec["phidot_sup"] = float(np.abs(k.evaluate(vel)).max())
        rec["grad_phidot_sq"] = k.dirichlet(vel)
        rec["phidot_mean"] = k.inner(vel, m.density_coeffs)
        rec["harnack"] = rec["K"] - mu * fn.eval_F0(b, gauged) - k.inner(vel_gauged, m.density_coeffs)
        f_now = state.background.with_coeffs(b.coeffs + gauged).ricci_potential_coeffs()
        rec["alpha"] = k.inner(vel + f_now, m.density_coeffs)
    else:
        vel = calabi_velocity(b, state.phi, mu)
        rec["projected_calabi"] = k.integrate(k.evaluate(vel) ** 2 * rho)
        rec["extremal_residual"] = extremal_residual(m)
    with np.errstate(over="ignore"):
        for p in p_values:
            rec[f"mult_p{p:g}"] = multiplier_diagnostic(state, p)
    return rec


@dataclass
class FlowRun:
    kind: str
    state: FlowState
    c0: float

    @property
    def history(self) -> list:
        return self.state.history

    def series(self, key: str) -> np.ndarray:
        return np.array([h[key] for h in self.history])


def run_kr_flow(initial: InvariantMetricP1, T: float = 30.0, dt: float = 1e-2, c0: float | None = None,
                mu: float = MU, p_values=(2.0,), stop_tol: float | None = None,
                track_gradient: bool = False) -> FlowRun:
    """Run the Kahler-Ricci flow from ``initial`` (also the background) up to time ``T``.

    ``c0`` is the initial constant potential; by default ``(1/MU) int f_b rho_b``.
    Stops early once ``sup |R - MU| < stop_tol`` if given.
    """
    if T <= 0 or dt <= 0:
        raise ValidationError("T and dt must be positive")
    initial.validate()
    k = initial.kernel
    if c0 is None:
        c0 = base_initial_constant(initial, mu)
    state = FlowState(initial, k.constant(c0), 0.0, [])
    state.history.append(flow_record(state, "kr", mu, p_values))
    while state.t < T - 1e-14:
        state = kr_flow_step(state, min(dt, T - state.t), mu, track_gradient, True, p_values)
        if stop_tol is not None and state.history[-1]["R_sup"] < stop_tol:
            break
    return FlowRun("kr", state, c0)


def run_calabi_flow(initial: InvariantMetricP1, T: float = 2.0, dt: float = 1e-3, mu: float = MU,
                    p_values=(2.0,), stop_tol: float | None = None) -> FlowRun:
    if T <= 0 or dt <= 0:
        raise ValidationError("T and dt must be positive")
    initial.validate()
    state = FlowState(initial, np.zeros(initial.kernel.degree + 1), 0.0, [])
    state.history.append(flow_record(state, "calabi", mu, p_values))
    while state.t < T - 1e-14:
        state = calabi_flow_step(state, min(dt, T - state.t), mu, True, p_values)
        if stop_tol is not None and state.history[-1]["R_sup"] < stop_tol:
            break
    return FlowRun("calabi", state, 0.0)


def base_initial_constant(background: InvariantMetricP1, mu: float = MU) -> float:
    """``(1/MU) int f_b rho_b``: the initial constant without the trajectory term."""
    k = background.kernel
    return k.inner(background.ricci_potential_coeffs(), background.density_coeffs) / mu


def _rk4_log_gain(z: np.ndarray) -> np.ndarray:
    """Log of the RK4 amplification factor for ``y' = lambda y`` with ``z = lambda dt``."""
    return np.log1p(z + z**2 / 2 + z**3 / 6 + z**4 / 24)


def kr_initial_constant(background: InvariantMetricP1, T: float = 30.0, dt: float = 1e-2,
                        mu: float = MU, check_horizon: float = 15.0) -> dict:
    """Two-pass estimate of the initial constant that keeps ``phi_t`` bounded.

    Pass one integrates ``||grad phi_t||^2 exp(-MU t)`` alongside the flow
    (the gradient does not depend on the constant); the tail beyond ``T`` is
    bounded by ``||grad phi_t(T)||^2 exp(-MU T) / MU``.  This gives
    ``c0_formula``.

    The constant Legendre mode of the discrete flow obeys the affine
    recursion ``a <- G a + h`` with ``G`` the RK4 gain of ``y' = MU y`` and
    ``h`` independent of ``a``, so ``c0 = -sum h_n / (G_0 ... G_n)`` is the
    constant whose discrete trajectory stays bounded.  It differs
    from ``c0_formula`` by the time-discretisation error.  Pass two reruns
    from ``c0`` up to ``check_horizon`` and reports the size of ``phi_dot``.
    """
    base = base_initial_constant(background, mu)
    background.validate()
    k = background.kernel
    rhs = lambda phi: kr_velocity(background, phi, mu)  # noqa: E731
    aux_rate = lambda v, s: k.dirichlet(v) * np.exp(-mu * s)  # noqa: E731
    # pass one in the mean-zero gauge: the constant mode is reset after
    # every step and its per-step forcing is accumulated instead
    state = FlowState(background, np.zeros(k.degree + 1), 0.0, [])
    forcing, log_gain = [], 0.0
    times, grad = [0.0], [k.dirichlet(rhs(state.phi))]
    while state.t < T - 1e-14:
        new = _advance(state, min(dt, T - state.t), rhs, 2, aux_rate, mu)
        log_gain += float(_rk4_log_gain(mu * (new.t - state.t)))
        forcing.append(new.phi[0] * np.exp(-log_gain))
        new.phi[0] = 0.0
        state = new
        times.append(state.t)
        grad.append(k.dirichlet(rhs(state.phi)))
    times, grad = np.array(times), np.array(grad)
    window = grad[times >= 0.75 * T]
    # a window already at the rounding floor counts as decayed
    at_floor = len(window) > 0 and window.max() < 1e-20 * grad.max()
    if grad.max() > 1e-20 and not at_floor and (len(window) < 2 or not window[-1] < window[0]):
        raise NoDecayDetected("gradient of the flow velocity is not decreasing over the final window")
    integral = state.aux
    tail = grad[-1] * np.exp(-mu * T) / mu
    c0_formula = base + (integral + tail) / mu
    c0 = -math.fsum(forcing)
    horizon = min(check_horizon, T)
    corrected = run_kr_flow(background, horizon, dt, c0, mu)
    uncorrected = run_kr_flow(background, horizon, dt, base, mu)
    ct, cs = corrected.series("t"), corrected.series("phidot_sup")
    return {
        "c0": float(c0),
        "c0_formula": float(c0_formula),
        "base": base,
        "integral": float(integral),
        "tail_bound": float(tail),
        "horizon": horizon,
        "sup_phidot_corrected": float(cs.max()),
        "sup_phidot_after_1_corrected": float(cs[ct >= 1.0].max()) if horizon >= 1.0 else float("nan"),
        "phidot_at_1_corrected": float(np.interp(1.0, ct, cs)),
        "sup_phidot_uncorrected": float(uncorrected.series("phidot_sup").max()),
    }


def convergence_criterion(times, deviations, floor: float = 1e-13) -> dict:
    """Running ``int ||R - MU||_inf dt`` with an exponential tail fit."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(deviations, dtype=float)
    if len(t) < 2:
        raise ValidationError("history needs at least two records")
    integral = float(np.trapezoid(e, t)) if hasattr(np, "trapezoid") else float(np.trapz(e, t))
    if e.max() <= floor:
        return {"integral": integral, "decay_rate": None, "tail": 0.0, "verdict": "bounded"}
    half = t >= t[0] + 0.5 * (t[-1] - t[0])
    mask = half & (e > 10 * floor)
    if mask.sum() < 3:
        mask = e > 10 * floor
    if mask.sum() < 3:
        return {"integral": integral, "decay_rate": None, "tail": 0.0, "verdict": "bounded"}
    slope, _ = np.polyfit(t[mask], np.log(e[mask]), 1)
    rate = float(-slope)
    bounded = rate > 1e-3
    tail = float(e[-1] / rate) if bounded else float("inf")
    return {
        "integral": integral,
        "decay_rate": rate,
        "tail": tail,
        "verdict": "bounded" if bounded else "unbounded-so-far",
    }


def harnack_fit(run: FlowRun) -> dict:
    """Fit ``osc phi <= A int phi rho_b + B`` over the run (sanity data)."""
    osc = run.series("osc_phi")
    mean = run.series("mean_phi_b")
    design = np.stack([mean, np.ones_like(mean)], axis=1)
    (a, b), *_ = np.linalg.lstsq(design, osc, rcond=None)
    b_env = float(np.max(osc - a * mean))
    return {"A": float(a), "B_fit": float(b), "B_envelope": b_env}


def monotonicity_report(run: FlowRun, keys=("K",), slack: float = 1e-10) -> dict:
    out = {}
    for key in keys:
        v = run.series(key)
        inc = np.diff(v)
        out[key] = {"max_increase": float(inc.max()) if len(inc) else 0.0, "ok": bool(np.all(inc <= slack))}
    return out


def dissipation_check(run: FlowRun, floor: float = 1e-8) -> dict:
    """Compare the numerical ``dK/dt`` with ``-C`` along a Calabi run.

    Only records where ``C > floor`` are used (below that, the K increments
    fall under rounding); ``mid`` is the record halfway through that window.
    """
    if run.kind != "calabi":
        raise ValidationError("dissipation check needs a Calabi run")
    t, k_vals, c_vals = run.series("t"), run.series("K"), run.series("calabi")
    if len(t) < 5:
        raise ValidationError("run too short for a dissipation check")
    dk = np.gradient(k_vals, t)
    active = np.flatnonzero(c_vals > floor)
    active = active[(active > 0) & (active < len(t) - 1)]
    if len(active) == 0:
        raise ValidationError("calabi functional is below the floor along the whole run")
    rel = np.abs(dk[active] / -c_vals[active] - 1)
    mid = active[len(active) // 2]
    return {
        "t_mid": float(t[mid]),
        "rel_error_mid": float(abs(dk[mid] / -c_vals[mid] - 1)),
        "rel_error_max": float(rel.max()),
        "window": (float(t[active[0]]), float(t[active[-1]])),
    }
