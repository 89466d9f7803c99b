"""Time integration of the monotone flow by three routes.

explicit          forward Euler on u_t = (lap u - u^3 + kappa u)_+
implicit_obstacle backward Euler written as a per-step lower-obstacle problem,
                  convex splitting by default (energy decrease for any dt)
yosida            forward Euler on the resolvent-regularized right-hand side

Every route moves fields upward only, so trajectories are monotone in time
and stay above their initial datum.  A trajectory records the scalar
diagnostics of every step and full field snapshots on a stride.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from ._linsolve import LinearSolveError, solve_shifted
from .grid import Field, Grid, lap_array
from .model import (
    SNAPSHOT_COLUMNS,
    EnergySnapshot,
    ModelParams,
    _snapshot_values,
    residual_array,
)
from .obstacle import KernelError, ObstacleProblem, complementarity_report, solve_active_set

__all__ = [
    "SolverConfig",
    "Trajectory",
    "SolverError",
    "cfl_limit",
    "step_explicit",
    "step_implicit_obstacle",
    "resolvent_jlambda",
    "step_yosida",
    "run",
]

SCHEMES = ("explicit", "implicit_obstacle", "yosida")
SPLITTINGS = ("convex_split", "fully_implicit")


class SolverError(RuntimeError):
    """An inner solve failed; carries the partial trajectory when one exists."""

    def __init__(self, message, trajectory=None, report=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.report = report


def cfl_limit(g: Grid) -> float:
    """Largest stable explicit step, 1 / (2 * sum_axis 1/h^2)."""
    return 1.0 / (2.0 * sum(1.0 / (h * h) for h in g.h))


@dataclass(frozen=True)
class SolverConfig:
    scheme: str
    dt: float
    t_end: float
    splitting: str = "convex_split"
    yosida_lambda: float = 1e-2
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    pgs_tol: float = 1e-11
    pgs_max_iter: int = 100_000
    snapshot_stride: int = 1

    def validate(self, g: Grid, p: ModelParams):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.splitting not in SPLITTINGS:
            raise ValueError(f"unknown splitting {self.splitting!r}; expected one of {SPLITTINGS}")
        for name in ("dt", "t_end", "yosida_lambda", "newton_tol", "pgs_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.scheme in ("explicit", "yosida"):
            limit = cfl_limit(g)
            if self.dt > limit * (1.0 + 1e-12):
                raise ValueError(
                    f"dt={self.dt} violates the stability bound {limit} for scheme {self.scheme}"
                )
        if self.scheme == "implicit_obstacle" and self.splitting == "fully_implicit":
            if not self.dt < 1.0 / p.kappa:
                raise ValueError(
                    f"fully_implicit needs dt < 1/kappa = {1.0 / p.kappa} to keep the step convex"
                )
        n = self.t_end / self.dt
        if abs(n - round(n)) > 1e-8 * max(1.0, n):
            raise ValueError(f"t_end={self.t_end} is not an integer number of steps of dt={self.dt}")

    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    """Time-stamped states plus per-step diagnostics of one run.

    ``diag`` holds one row per recorded time with the columns of
    SNAPSHOT_COLUMNS; the remaining arrays are auxiliary per-step series used
    by the verification checks (full squared residual norm, distance to the
    initial obstacle, step increments, inner iteration counts).
    """

    grid: Grid
    params: ModelParams
    config: SolverConfig
    u0: Field
    times: np.ndarray
    diag: np.ndarray
    res_l2sq: np.ndarray
    obstacle_gap_min: np.ndarray
    du_dt_l2: np.ndarray
    step_min_increment: np.ndarray
    inner_iterations: np.ndarray
    snapshot_times: np.ndarray
    snapshots: list[Field]
    multipliers: list[Field] | None = None
    eta_hat_gap_l2: np.ndarray | None = None
    wall_time: float = 0.0
    failure: dict | None = dataclass_field(default=None)

    def n_steps(self) -> int:
        return len(self.times) - 1

    def series(self, name: str) -> np.ndarray:
        return self.diag[:, SNAPSHOT_COLUMNS.index(name)]

    def snapshot_row(self, k: int) -> EnergySnapshot:
        return EnergySnapshot(*self.diag[k])

    def final_state(self) -> Field:
        return self.snapshots[-1]

    def state_at_time(self, t: float) -> Field:
        idx = int(np.argmin(np.abs(self.snapshot_times - t)))
        if abs(self.snapshot_times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no stored snapshot at t={t}")
        return self.snapshots[idx]


def step_explicit(g: Grid, u: Field, p: ModelParams, dt: float) -> Field:
    """One forward-Euler step; never moves a node downward."""
    if dt > cfl_limit(g) * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} violates the stability bound {cfl_limit(g)}")
    r = residual_array(g, u.values, p)
    return Field(g, u.values + dt * np.maximum(r, 0.0))


def _implicit_problem(g: Grid, u_prev: np.ndarray, p: ModelParams, dt: float,
                      splitting: str) -> ObstacleProblem:
    if splitting == "convex_split":
        b = u_prev * (1.0 / dt + p.kappa)
        kappa_implicit = False
    elif splitting == "fully_implicit":
        if not dt < 1.0 / p.kappa:
            raise ValueError(f"fully_implicit needs dt < 1/kappa = {1.0 / p.kappa}")
        b = u_prev / dt
        kappa_implicit = True
    else:
        raise ValueError(f"unknown splitting {splitting!r}")
    return ObstacleProblem(grid=g, psi=Field(g, u_prev), a=1.0 / dt,
                           b=Field(g, b), kappa_implicit=kappa_implicit, params=p)


def _implicit_step(g, u_prev: np.ndarray, p, dt, splitting, newton_tol=1e-10,
                   newton_max_iter=50, pgs_tol=1e-11, pgs_max_iter=100_000):
    prob = _implicit_problem(g, u_prev, p, dt, splitting)
    try:
        u_next, eta_hat, iters = solve_active_set(prob, prob.psi, tol=newton_tol,
                                                  newton_max_iter=newton_max_iter)
    except (KernelError, LinearSolveError) as exc:
        raise SolverError(f"implicit step failed: {exc}") from exc
    report = complementarity_report(prob, u_next, eta_hat)
    if report.max_entry() > 1e3 * max(newton_tol, pgs_tol):
        raise SolverError(
            f"implicit step stalled after {iters} iterations at residual "
            f"{report.max_entry():.3e}", report=report,
        )
    return u_next, eta_hat, iters


def step_implicit_obstacle(g: Grid, u_prev: Field, p: ModelParams, dt: float,
                           splitting: str = "convex_split"):
    """One backward-Euler step solved as a lower-obstacle problem.

    Returns (u_next, multiplier) with u_next >= u_prev elementwise, the
    multiplier nonpositive and supported where the step did not move.
    """
    u_next, eta_hat, _ = _implicit_step(g, u_prev.values, p, dt, splitting)
    return u_next, eta_hat


def _resolvent_raw(g: Grid, v: np.ndarray, lam: float, tol: float,
                   max_iter: int, w0: np.ndarray | None = None) -> np.ndarray:
    """Newton solve of w + lam*(-lap w + w^3) = v; the operator is monotone."""
    w = v.copy() if w0 is None else w0.copy()

    def res(x):
        return x + lam * (x * x * x - lap_array(g, x)) - v

    r = res(w)
    norm = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if norm <= tol:
            return w
        diag = 1.0 / lam + 3.0 * w * w
        delta = solve_shifted(g, diag, -r / lam, x0=None)
        step = 1.0
        while step > 1e-12:
            trial = w + step * delta
            tr = res(trial)
            tn = float(np.max(np.abs(tr)))
            if tn < norm:
                w, r, norm = trial, tr, tn
                break
            step *= 0.5
        else:
            raise SolverError("resolvent Newton line search exhausted")
    if norm > tol:
        raise SolverError(f"resolvent Newton stopped at residual {norm:.3e} > {tol:.1e}")
    return w


def resolvent_jlambda(g: Grid, v: Field, lam: float, newton_tol: float = 1e-10,
                      newton_max_iter: int = 50) -> Field:
    """Resolve w + lam*(-lap w + w^3) = v; unique by monotonicity."""
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    return Field(g, _resolvent_raw(g, v.values, lam, newton_tol, newton_max_iter))


def yosida_rhs(g: Grid, u: Field, p: ModelParams, lam: float,
               newton_tol: float = 1e-10) -> Field:
    """Regularized rate (kappa*u - (u - w)/lam)_+ with w the resolvent of u.

    (u - w)/lam equals -lap(w) + w^3 exactly at the solve, but evaluating it
    this way avoids re-amplifying the Newton tolerance through the stencil.
    """
    w = _resolvent_raw(g, u.values, lam, newton_tol, 50)
    rate = p.kappa * u.values - (u.values - w) / lam
    return Field(g, np.maximum(rate, 0.0))


def step_yosida(g: Grid, u: Field, p: ModelParams, dt: float, lam: float,
                newton_tol: float = 1e-10) -> Field:
    """One forward-Euler step of the regularized flow; monotone like the others."""
    if dt > cfl_limit(g) * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} violates the stability bound {cfl_limit(g)}")
    rate = yosida_rhs(g, u, p, lam, newton_tol=newton_tol)
    return Field(g, u.values + dt * rate.values)


def run(g: Grid, u0: Field, p: ModelParams, cfg: SolverConfig) -> Trajectory:
    """Integrate from t = 0 to t_end, recording diagnostics every step.

    The eta column of the diagnostics always comes from the instantaneous
    state (eta = min(r, 0)), independent of the scheme; the implicit scheme
    additionally stores its step multipliers and their gap to that eta.
    """
    if u0.grid != g:
        raise ValueError("initial field is not on the given grid")
    cfg.validate(g, p)
    n_steps = cfg.n_steps()
    dt = cfg.dt
    implicit = cfg.scheme == "implicit_obstacle"
    u0v = u0.values
    u = u0v.copy()
    w_cell = g.cell_volume

    times = dt * np.arange(n_steps + 1)
    diag = np.empty((n_steps + 1, len(SNAPSHOT_COLUMNS)))
    res_l2sq = np.empty(n_steps + 1)
    gap_min = np.empty(n_steps + 1)
    du_dt_l2 = np.zeros(n_steps)
    min_inc = np.zeros(n_steps)
    inner = np.zeros(n_steps, dtype=int)
    snapshots: list[Field] = []
    snap_times: list[float] = []
    multipliers: list[Field] | None = [] if implicit else None
    eta_gap = np.zeros(n_steps) if implicit else None
    pending_eta_hat: np.ndarray | None = None
    started = time.perf_counter()

    def record(k: int, uv: np.ndarray, r: np.ndarray):
        diag[k] = _snapshot_values(g, uv, p, times[k], r=r)
        res_l2sq[k] = w_cell * float((r * r).sum())
        gap_min[k] = float((uv - u0v).min())
        if k % cfg.snapshot_stride == 0 or k == n_steps:
            snapshots.append(Field(g, uv.copy()))
            snap_times.append(float(times[k]))

    def partial(k: int, message: str) -> Trajectory:
        return Trajectory(
            grid=g, params=p, config=cfg, u0=u0,
            times=times[: k + 1], diag=diag[: k + 1],
            res_l2sq=res_l2sq[: k + 1], obstacle_gap_min=gap_min[: k + 1],
            du_dt_l2=du_dt_l2[:k], step_min_increment=min_inc[:k],
            inner_iterations=inner[:k],
            snapshot_times=np.array(snap_times), snapshots=snapshots,
            multipliers=multipliers, eta_hat_gap_l2=None if eta_gap is None else eta_gap[:k],
            wall_time=time.perf_counter() - started,
            failure={"step": k, "message": message},
        )

    w_warm = None  # resolvent warm start across steps
    for k in range(n_steps + 1):
        r = residual_array(g, u, p)
        if pending_eta_hat is not None:
            eta_now = np.minimum(r, 0.0)
            eta_gap[k - 1] = float(np.sqrt(w_cell * np.sum((pending_eta_hat - eta_now) ** 2)))
            pending_eta_hat = None
        record(k, u, r)
        if k == n_steps:
            break
        try:
            if cfg.scheme == "explicit":
                u_next = u + dt * np.maximum(r, 0.0)
            elif cfg.scheme == "yosida":
                w_warm = _resolvent_raw(g, u, cfg.yosida_lambda, cfg.newton_tol,
                                        cfg.newton_max_iter, w0=w_warm)
                rate = np.maximum(p.kappa * u - (u - w_warm) / cfg.yosida_lambda, 0.0)
                u_next = u + dt * rate
            else:
                nf, ef, iters = _implicit_step(
                    g, u, p, dt, cfg.splitting,
                    newton_tol=cfg.newton_tol, newton_max_iter=cfg.newton_max_iter,
                    pgs_tol=cfg.pgs_tol, pgs_max_iter=cfg.pgs_max_iter,
                )
                u_next = nf.values
                inner[k] = iters
                multipliers.append(ef)
                pending_eta_hat = ef.values
        except SolverError as exc:
            raise SolverError(str(exc), trajectory=partial(k, str(exc)),
                              report=exc.report) from exc
        delta = u_next - u
        min_inc[k] = float(delta.min())
        du_dt_l2[k] = (w_cell * float((delta * delta).sum())) ** 0.5 / dt
        if not np.isfinite(du_dt_l2[k]):
            raise SolverError(f"state left the finite range at step {k}",
                              trajectory=partial(k, "non-finite state"))
        u = u_next

    return Trajectory(
        grid=g, params=p, config=cfg, u0=u0,
        times=times, diag=diag, res_l2sq=res_l2sq, obstacle_gap_min=gap_min,
        du_dt_l2=du_dt_l2, step_min_increment=min_inc, inner_iterations=inner,
        snapshot_times=np.array(snap_times), snapshots=snapshots,
        multipliers=multipliers, eta_hat_gap_l2=eta_gap,
        wall_time=time.perf_counter() - started,
    )
