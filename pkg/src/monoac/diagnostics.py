"""Trajectory checks: monotonicity, energy laws, range, decay rates, absorbing entry.

Every check is a pure function of immutable trajectory data and returns a
CheckReport whose pass flag is exactly ``worst_violation <= tolerance``.
Checks that combine clauses with different tolerances report the worst
violation as a ratio against its own clause tolerance (tolerance 1.0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, h1_grad_sq, lap_array, norm_lp
from .model import ModelParams
from .steppers import SolverConfig, Trajectory, run

__all__ = [
    "CheckReport",
    "check_monotone",
    "check_energy_decrease",
    "check_eta_monotone",
    "check_range",
    "check_comparison",
    "check_dissipation",
    "fit_decay_rate",
    "check_equilibrium",
    "check_absorbing",
    "check_smoothing",
    "check_yosida_convergence",
    "check_energy_flux",
    "check_gradient_flux",
    "settling_time",
    "SINGLE_TRAJECTORY_CHECKS",
    "run_checks",
]


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    worst_violation: float
    tolerance: float
    location: float | None
    details: dict

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "location": self.location,
            "details": self.details,
        }


def _report(name, worst, tol, location=None, **details) -> CheckReport:
    worst = float(worst)
    return CheckReport(name=name, passed=bool(worst <= tol), worst_violation=worst,
                       tolerance=float(tol), location=location, details=details)


def _snapshot_pairs(traj: Trajectory):
    return zip(traj.snapshots[:-1], traj.snapshots[1:], traj.snapshot_times[1:])


def check_monotone(traj: Trajectory, tol: float = 1e-12) -> CheckReport:
    """Fields never decrease in time and never dip below the initial datum."""
    worst = 0.0
    loc = None
    if traj.step_min_increment is not None and len(traj.step_min_increment):
        k = int(np.argmin(traj.step_min_increment))
        worst = max(worst, -float(traj.step_min_increment[k]))
        loc = float(traj.times[k + 1])
    else:
        for a, b, t in _snapshot_pairs(traj):
            v = -float(np.min(b.values - a.values))
            if v > worst:
                worst, loc = v, float(t)
    if traj.obstacle_gap_min is not None:
        k = int(np.argmin(traj.obstacle_gap_min))
        gap = -float(traj.obstacle_gap_min[k])
        if gap > worst:
            worst, loc = gap, float(traj.times[k])
    else:
        u0v = traj.u0.values
        for s, t in zip(traj.snapshots, traj.snapshot_times):
            v = -float(np.min(s.values - u0v))
            if v > worst:
                worst, loc = v, float(t)
    return _report("monotone", worst, tol, loc)


def check_energy_decrease(traj: Trajectory, tol: float = 1e-12) -> CheckReport:
    """Per-step energy decrease, with the energy-identity defect reported.

    The strict 1e-12 tolerance is guaranteed for the convex-split implicit
    scheme; the explicit schemes satisfy it as well at half the stability
    limit, where the quadratic step error cannot overtake the dissipation.
    """
    e = traj.series("E")
    d = np.diff(e)
    worst = float(np.max(d)) if len(d) else 0.0
    loc = float(traj.times[int(np.argmax(d)) + 1]) if len(d) else None
    details = {}
    if traj.du_dt_l2 is not None and len(traj.du_dt_l2):
        dt = float(np.diff(traj.times).mean())
        defect = np.abs(d + dt * traj.du_dt_l2**2)
        details["energy_identity_defect_max"] = float(np.max(defect))
    return _report("energy_decrease", worst, tol, loc, **details)


def check_eta_monotone(traj: Trajectory, tol: float | None = None) -> CheckReport:
    """Multiplier norm nonincreasing and always below its initial level.

    Tolerance defaults to 1e-6 * (1 + |eta(0)|_2), slack for active-set
    changes that the time discretization resolves only to solver accuracy.
    """
    eta = traj.series("eta_l2")
    tol_eta = 1e-6 * (1.0 + float(eta[0])) if tol is None else tol
    rises = np.diff(eta)
    worst_rise = float(np.max(rises)) if len(rises) else 0.0
    loc = float(traj.times[int(np.argmax(rises)) + 1]) if len(rises) else None
    dr0 = float(traj.series("res_neg_l2sq")[0])
    bound_excess = float(np.max(eta**2 - dr0)) if len(eta) else 0.0
    worst = max(worst_rise, bound_excess)
    return _report("eta_monotone", worst, tol_eta, loc,
                   initial_level=dr0, worst_rise=worst_rise,
                   worst_bound_excess=bound_excess)


def check_range(traj: Trajectory, p: ModelParams | None = None,
                upper_tol: float = 1e-8, lower_tol: float = 1e-12) -> CheckReport:
    """Range preservation: u0 <= u(t) <= max(sqrt(kappa), |u0|_inf)."""
    p = p or traj.params
    bound = max(np.sqrt(p.kappa), float(np.max(np.abs(traj.u0.values))))
    linf = traj.series("u_linf")
    upper = float(np.max(linf - bound))
    if traj.obstacle_gap_min is not None:
        lower = -float(np.min(traj.obstacle_gap_min))
    else:
        lower = max(
            (-float(np.min(s.values - traj.u0.values)) for s in traj.snapshots),
            default=0.0,
        )
    worst = max(upper / upper_tol, lower / lower_tol)
    k = int(np.argmax(linf))
    return _report("range", worst, 1.0, float(traj.times[k]),
                   upper_bound=bound, upper_violation=upper, lower_violation=lower,
                   upper_tol=upper_tol, lower_tol=lower_tol)


def check_comparison(traj_lo: Trajectory, traj_hi: Trajectory,
                     tol: float = 1e-10) -> CheckReport:
    """Ordered initial data stay ordered at every common snapshot time."""
    if traj_lo.grid != traj_hi.grid or traj_lo.params != traj_hi.params \
            or traj_lo.config.scheme != traj_hi.config.scheme:
        raise ValueError("comparison requires matching grid, params and scheme")
    if float(np.max(traj_lo.u0.values - traj_hi.u0.values)) > 0:
        raise ValueError("initial data are not ordered low <= high")
    lo_times = {round(float(t), 12): i for i, t in enumerate(traj_lo.snapshot_times)}
    worst, loc = 0.0, None
    matched = 0
    for j, t in enumerate(traj_hi.snapshot_times):
        i = lo_times.get(round(float(t), 12))
        if i is None:
            continue
        matched += 1
        v = float(np.max(traj_lo.snapshots[i].values - traj_hi.snapshots[j].values))
        if v > worst:
            worst, loc = v, float(t)
    if matched == 0:
        raise ValueError("trajectories share no snapshot times")
    return _report("comparison", worst, tol, loc, common_times=matched)


def check_dissipation(traj: Trajectory, p: ModelParams | None = None,
                      r: float | None = None, tol: float = 1e-6) -> CheckReport:
    """Empirical forcing bound and the exponential envelope it implies.

    Estimates C_hat as the largest per-step value of
    |du/dt|_2^2 + d(phi)/dt + 2*kappa*phi and then verifies
    phi(t) <= C_hat/(2k) + exp(-2kt) * (phi(0) - C_hat/(2k)) + tol at every step.
    """
    p = p or traj.params
    if traj.du_dt_l2 is None:
        raise ValueError("dissipation check needs the per-step rate series")
    phi = traj.series("phi")
    t = traj.times
    dt = np.diff(t)
    d_series = traj.du_dt_l2**2 + np.diff(phi) / dt + 2.0 * p.kappa * phi[:-1]
    c_hat = float(np.max(d_series)) if len(d_series) else 0.0
    c_hat = max(c_hat, 0.0)
    level = c_hat / (2.0 * p.kappa)
    envelope = level + np.exp(-2.0 * p.kappa * t) * (phi[0] - level)
    excess = phi - envelope
    worst = float(np.max(excess))
    loc = float(t[int(np.argmax(excess))])
    return _report("dissipation", worst, tol, loc, c_hat=c_hat,
                   envelope_level=level, initial_level_r=r)


def fit_decay_rate(traj: Trajectory, t_start: float, t_end: float | None = None,
                   floor_ratio: float = 1e-8, min_points: int = 10,
                   return_details: bool = False):
    """Least-squares decay rate of log |du/dt|_2 over [t_start, t_end].

    The window is shortened automatically once the series falls below
    floor_ratio times its in-window maximum (the floating-point floor of a
    frozen state); stationary series cannot be fitted and raise ValueError.
    """
    if traj.du_dt_l2 is None:
        raise ValueError("decay fit needs the per-step rate series")
    t = traj.times[:-1]
    v = traj.du_dt_l2
    t_end = float(traj.times[-1]) if t_end is None else t_end
    sel = (t >= t_start) & (t <= t_end)
    tw, vw = t[sel], v[sel]
    pos = vw > 0
    if not np.any(pos):
        raise ValueError("rate series is zero on the fit window; nothing to fit")
    vmax = float(np.max(vw[pos]))
    floor = vmax * floor_ratio
    below = np.nonzero(vw < floor)[0]
    shortened = False
    if below.size:
        cut = int(below[0])
        tw, vw = tw[:cut], vw[:cut]
        shortened = True
    keep = vw > 0
    tw, vw = tw[keep], vw[keep]
    if len(tw) < min_points:
        raise ValueError(
            f"only {len(tw)} usable points in the fit window; series reached the floor too early"
        )
    slope, _ = np.polyfit(tw, np.log(vw), 1)
    rate = -float(slope)
    if return_details:
        return rate, {"points": int(len(tw)), "window": (float(tw[0]), float(tw[-1])),
                      "shortened": shortened, "floor": floor}
    return rate


def check_equilibrium(traj: Trajectory, eq: Field, report,
                      dist_tol: float = 1e-5, res_tol: float = 1e-6) -> CheckReport:
    """Final state sits on the polished stationary solution, residuals certified."""
    dist = float(np.max(np.abs(traj.final_state().values - eq.values)))
    res = float(report.max_entry())
    worst = max(dist / dist_tol, res / res_tol)
    return _report("equilibrium", worst, 1.0, float(traj.times[-1]),
                   distance_inf=dist, complementarity_max=res,
                   dist_tol=dist_tol, res_tol=res_tol)


def check_absorbing(trajs: list[Trajectory], p: ModelParams, c_bound: float,
                    phi_bound: float) -> CheckReport:
    """Each trajectory enters the residual/energy box and never leaves again."""
    if not (c_bound > 0 and phi_bound > 0):
        raise ValueError("bounds must be positive")
    entry_times = []
    worst = 0.0
    for traj in trajs:
        if traj.res_l2sq is None:
            raise ValueError("absorbing check needs the full residual norm series")
        inside = (traj.res_l2sq <= c_bound) & (traj.series("phi") <= phi_bound)
        outside = np.nonzero(~inside)[0]
        if outside.size == 0:
            entry_times.append(0.0)
            continue
        last_out = int(outside[-1])
        if last_out == len(inside) - 1:
            miss = max(float(traj.res_l2sq[-1] - c_bound),
                       float(traj.series("phi")[-1] - phi_bound), 0.0)
            worst = max(worst, miss)
            entry_times.append(float("inf"))
        else:
            entry_times.append(float(traj.times[last_out + 1]))
    return _report("absorbing", worst, 0.0,
                   max((t for t in entry_times if np.isfinite(t)), default=None),
                   entry_times=entry_times, c_bound=c_bound, phi_bound=phi_bound)


def check_smoothing(traj: Trajectory, tol: float = 1e-6) -> CheckReport:
    """Instant regularization: min(t,1)*|lap u|_2 stays bounded, eta stays capped.

    The smoothing constant itself is reported, not thresholded; the pass/fail
    clause is the multiplier cap |eta(t)|_2^2 <= |eta(0)|_2^2 + tol.
    """
    g = traj.grid
    sup_smoothing = 0.0
    for s, t in zip(traj.snapshots, traj.snapshot_times):
        if t == 0.0:
            continue
        lap_l2 = float(np.sqrt(g.cell_volume * np.sum(lap_array(g, s.values) ** 2)))
        sup_smoothing = max(sup_smoothing, min(float(t), 1.0) * lap_l2)
    eta = traj.series("eta_l2")
    dr0 = float(traj.series("res_neg_l2sq")[0])
    worst = float(np.max(eta**2 - dr0))
    return _report("smoothing", worst, tol, None,
                   smoothing_constant=sup_smoothing, initial_level=dr0,
                   finite=bool(np.isfinite(sup_smoothing)))


def check_yosida_convergence(g, u0: Field, p: ModelParams, base_cfg: SolverConfig,
                             lambdas, reference_cfg: SolverConfig | None = None,
                             zero_floor: float = 1e-12) -> CheckReport:
    """Errors against an implicit reference shrink as the regularization does.

    Runs one regularized trajectory per lambda (strictly decreasing sequence)
    and compares each to the reference at the common snapshot times.
    """
    lambdas = list(lambdas)
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambdas must be strictly decreasing")
    if reference_cfg is None:
        reference_cfg = SolverConfig(
            scheme="implicit_obstacle", dt=base_cfg.dt * 16, t_end=base_cfg.t_end,
            splitting="convex_split",
            snapshot_stride=max(1, base_cfg.snapshot_stride // 16),
        )
    ref = run(g, u0, p, reference_cfg)
    ref_times = {round(float(t), 12): i for i, t in enumerate(ref.snapshot_times)}
    errors = []
    for lam in lambdas:
        cfg = SolverConfig(scheme="yosida", dt=base_cfg.dt, t_end=base_cfg.t_end,
                           yosida_lambda=lam, newton_tol=base_cfg.newton_tol,
                           snapshot_stride=base_cfg.snapshot_stride)
        traj = run(g, u0, p, cfg)
        err = 0.0
        matched = 0
        for j, t in enumerate(traj.snapshot_times):
            if t == 0.0:
                continue
            i = ref_times.get(round(float(t), 12))
            if i is None:
                continue
            matched += 1
            err = max(err, norm_lp(g, Field(g, traj.snapshots[j].values
                                            - ref.snapshots[i].values), 2))
        if matched == 0:
            raise ValueError("no common sample times between the sweeps and the reference")
        errors.append(err)
    if max(errors) <= zero_floor:
        worst = 0.0  # frozen data: every route is exact
    else:
        worst = max(b - a for a, b in zip(errors, errors[1:]))
    return _report("yosida_convergence", worst, 0.0, None,
                   lambdas=list(map(float, lambdas)), errors=[float(e) for e in errors])


def check_energy_flux(traj: Trajectory, slack: float | None = None) -> CheckReport:
    """Integrated residual norm against the initial multiplier budget.

    Discrete form of: E(T) + integral |r|_2^2 dt <= T * |eta(0)|_2^2 + E(0).
    The quadrature is the right-endpoint sum, which matches the backward
    differences of the discrete energy identity; the t = 0 node is excluded
    because kinked initial data have no finite residual norm there in the
    refinement limit.
    """
    e = traj.series("E")
    t = traj.times
    dt = np.diff(t)
    lhs = float(e[-1] + np.sum(dt * traj.res_l2sq[1:]))
    eta0_sq = float(traj.series("res_neg_l2sq")[0])
    rhs = float(t[-1] * eta0_sq + e[0])
    tol = 1e-4 * (1.0 + abs(float(e[0]))) if slack is None else slack
    return _report("energy_flux", lhs - rhs, tol, float(t[-1]),
                   lhs=lhs, rhs=rhs)


def check_gradient_flux(traj: Trajectory, slack: float | None = None) -> CheckReport:
    """Rate-gradient budget for smooth data; needs stride-1 snapshots.

    Discrete form of: integral |grad u_t|_2^2 dt + 0.5*|r(T)|_2^2 + kappa*E(T)
    <= 0.5*|r(0)|_2^2 + kappa*E(0) + slack.
    """
    if traj.config.snapshot_stride != 1:
        raise ValueError("gradient flux check needs snapshot_stride == 1")
    g = traj.grid
    kappa = traj.params.kappa
    dt = float(np.diff(traj.times).mean())
    acc = 0.0
    for a, b, _ in _snapshot_pairs(traj):
        acc += dt * h1_grad_sq(g, (b.values - a.values) / dt)
    e = traj.series("E")
    lhs = acc + 0.5 * float(traj.res_l2sq[-1]) + kappa * float(e[-1])
    rhs = 0.5 * float(traj.res_l2sq[0]) + kappa * float(e[0])
    tol = 1e-4 * (1.0 + abs(float(e[0])) + float(traj.res_l2sq[0])) if slack is None else slack
    return _report("gradient_flux", lhs - rhs, tol, float(traj.times[-1]),
                   lhs=lhs, rhs=rhs)


def settling_time(traj: Trajectory, eps: float) -> float | None:
    """First time the full residual norm drops to its initial negative-part level.

    Returns the first T with |r(T)|_2^2 <= |r(0)_-|_2^2 + eps, or None if the
    trajectory never settles within its horizon.
    """
    target = float(traj.series("res_neg_l2sq")[0]) + eps
    hits = np.nonzero(traj.res_l2sq <= target)[0]
    return float(traj.times[int(hits[0])]) if hits.size else None


SINGLE_TRAJECTORY_CHECKS = {
    "monotone": lambda traj, tol=None: check_monotone(traj, **({} if tol is None else {"tol": tol})),
    "energy_decrease": lambda traj, tol=None: check_energy_decrease(traj, **({} if tol is None else {"tol": tol})),
    "eta_monotone": lambda traj, tol=None: check_eta_monotone(traj, tol=tol),
    "range": lambda traj, tol=None: check_range(traj, **({} if tol is None else {"upper_tol": tol})),
    "dissipation": lambda traj, tol=None: check_dissipation(traj, **({} if tol is None else {"tol": tol})),
    "smoothing": lambda traj, tol=None: check_smoothing(traj, **({} if tol is None else {"tol": tol})),
    "energy_flux": lambda traj, tol=None: check_energy_flux(traj, **({} if tol is None else {"slack": tol})),
}


def run_checks(traj: Trajectory, requested) -> list[CheckReport]:
    """Run named single-trajectory checks, honoring per-check tolerance overrides."""
    reports = []
    for item in requested:
        if isinstance(item, str):
            name, override = item, None
        else:
            name = item["name"]
            override = item.get("tolerance")
        try:
            fn = SINGLE_TRAJECTORY_CHECKS[name]
        except KeyError:
            raise ValueError(
                f"unknown check {name!r}; expected one of {sorted(SINGLE_TRAJECTORY_CHECKS)}"
            ) from None
        reports.append(fn(traj, override))
    return reports
