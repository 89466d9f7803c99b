"""Constrained solve kernels for lower-obstacle problems with a cubic term.

All kernels target one complementarity system on the interior nodes:

    u >= psi,   G(u) := a*u - lap(u) + u^3 - [kappa*u] - b >= 0,   (u - psi)*G(u) = 0,

with multiplier eta_hat = -G(u) <= 0 supported on the contact set.  The same
form covers a backward-Euler step (a = 1/dt, obstacle = previous state) and
the stationary problem (a = 0, obstacle = initial datum, polish mode only).

Three routes are provided: projected nonlinear Gauss-Seidel, a primal-dual
active-set Newton method, and an exhaustive active-set enumeration usable as
an oracle on tiny problems.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._linsolve import LinearSolveError, solve_shifted
from .grid import Field, Grid, lap_array
from .model import ModelParams

__all__ = [
    "ObstacleProblem",
    "ComplementarityReport",
    "KernelError",
    "solve_pgs",
    "solve_active_set",
    "brute_force_obstacle",
    "solve_equilibrium",
    "complementarity_report",
]


class KernelError(RuntimeError):
    """A constrained solve failed; carries the best iterate diagnostics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ObstacleProblem:
    """One lower-obstacle instance; see the module docstring for the system."""

    grid: Grid
    psi: Field
    a: float
    b: Field
    kappa_implicit: bool
    params: ModelParams

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"mass coefficient a must be >= 0, got {self.a}")
        if self.psi.grid != self.grid or self.b.grid != self.grid:
            raise ValueError("obstacle/source fields are not on the problem grid")

    @property
    def nonconvex(self) -> bool:
        # the -kappa*u term makes the a = 0 problem indefinite
        return self.a == 0.0 and self.kappa_implicit

    def diag_shift(self) -> float:
        """Linear diagonal coefficient a - [kappa], before the stencil and cubic parts."""
        return self.a - (self.params.kappa if self.kappa_implicit else 0.0)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Operator value a*v - lap(v) + v^3 - [kappa*v]."""
        return self.diag_shift() * v - lap_array(self.grid, v) + v**3

    def stationarity(self, v: np.ndarray) -> np.ndarray:
        """G(v) = operator value minus the source."""
        return self.apply(v) - self.b.values


@dataclass(frozen=True)
class ComplementarityReport:
    """Max-norm residuals of a returned (u, eta_hat) pair."""

    primal_violation: float
    dual_violation: float
    gap: float
    stationarity_residual: float

    def max_entry(self) -> float:
        return max(self.primal_violation, self.dual_violation, self.gap,
                   self.stationarity_residual)

    def to_dict(self) -> dict:
        return {
            "primal_violation": self.primal_violation,
            "dual_violation": self.dual_violation,
            "gap": self.gap,
            "stationarity_residual": self.stationarity_residual,
        }


def _neighbor_table(g: Grid):
    """Flat-index neighbor lists and inverse-h^2 weights for nodewise sweeps."""
    n = g.n_nodes
    idx = np.arange(n).reshape(g.shape)
    nbrs, wgts = [], []
    for axis in range(g.dim):
        w = 1.0 / (g.h[axis] * g.h[axis])
        for shift in (-1, 1):
            nb = np.full(g.shape, -1, dtype=int)
            if shift == -1:
                sl_to = (slice(1, None),) if g.dim == 1 else _axis_slice(axis, slice(1, None), g.dim)
                sl_from = (slice(None, -1),) if g.dim == 1 else _axis_slice(axis, slice(None, -1), g.dim)
            else:
                sl_to = (slice(None, -1),) if g.dim == 1 else _axis_slice(axis, slice(None, -1), g.dim)
                sl_from = (slice(1, None),) if g.dim == 1 else _axis_slice(axis, slice(1, None), g.dim)
            nb[sl_to] = idx[sl_from]
            nbrs.append(nb.reshape(-1))
            wgts.append(w)
    return nbrs, wgts


def _axis_slice(axis, sl, dim):
    out = [slice(None)] * dim
    out[axis] = sl
    return tuple(out)


def _cubic_root(c: float, q: float) -> float:
    """Unique real root of s^3 + c*s = q for c > 0 (closed form plus polish)."""
    disc = np.sqrt(0.25 * q * q + (c**3) / 27.0)
    s = np.cbrt(0.5 * q + disc) - np.cbrt(disc - 0.5 * q)
    for _ in range(2):
        s -= (s * s * s + c * s - q) / (3.0 * s * s + c)
    return s


def _clamped_multiplier(prob: ObstacleProblem, u: np.ndarray) -> np.ndarray:
    """Multiplier supported on the exact contact set, projected onto eta <= 0."""
    raw = -prob.stationarity(u)
    contact = u <= prob.psi.values
    return np.where(contact, np.minimum(raw, 0.0), 0.0)


def solve_pgs(prob: ObstacleProblem, u_init: Field, tol: float = 1e-11,
              max_iter: int = 100_000):
    """Projected nonlinear Gauss-Seidel sweep.

    Each node solves its scalar cubic stationarity equation exactly and is then
    projected onto [psi_i, inf).  Terminates when a full sweep moves no node by
    more than tol; returns (solution, multiplier, sweeps).  If max_iter sweeps
    are exhausted the best iterate is returned with sweeps == max_iter.
    """
    g = prob.grid
    psi = prob.psi.values
    b = prob.b.values
    c_hat = prob.diag_shift() + 2.0 * sum(1.0 / (h * h) for h in g.h)
    if c_hat <= 0:
        raise KernelError(f"nodewise coefficient {c_hat} <= 0; instance too nonconvex for sweeps")
    nbrs, wgts = _neighbor_table(g)
    u = np.maximum(u_init.values.copy(), psi)
    n = g.n_nodes
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_change = 0.0
        for i in range(n):
            q = b[i]
            for nb, w in zip(nbrs, wgts):
                j = nb[i]
                if j >= 0:
                    q += w * u[j]
            s = _cubic_root(c_hat, q)
            new = s if s > psi[i] else psi[i]
            change = abs(new - u[i])
            if change > max_change:
                max_change = change
            u[i] = new
        if max_change <= tol:
            break
    eta = _clamped_multiplier(prob, u)
    return Field(g, u), Field(g, eta), sweeps


def solve_active_set(prob: ObstacleProblem, u_init: Field, tol: float = 1e-10,
                     max_iter: int | None = None, newton_max_iter: int = 50,
                     pgs_fallback: bool = True):
    """Primal-dual active-set Newton solve of the complementarity system.

    Alternates an active-set guess with an equality-constrained Newton solve
    (contact nodes frozen on the obstacle) and stops once the full KKT system
    is satisfied: stationarity off contact and wrong-signed multiplier mass
    both below tol.  Detected cycling or a failed Newton solve falls back to
    solve_pgs when permitted.

    Contact can release as a front moving one node per sweep (kinked data do
    exactly this), so the default sweep budget scales with the node count.
    """
    g = prob.grid
    if max_iter is None:
        max_iter = max(60, 2 * g.n_nodes)
    psi = prob.psi.values
    u = np.maximum(u_init.values.copy(), psi)
    mu = prob.stationarity(u)  # -eta_hat estimate
    primal_tol = 1e-13 * (1.0 + float(np.max(np.abs(psi))))
    seen = set()
    for it in range(1, max_iter + 1):
        active = (mu + (psi - u)) > 0.0  # ties classified inactive
        key = active.tobytes()
        if key in seen:
            break  # cycling
        seen.add(key)
        u = np.where(active, psi, u)
        ok = _newton_inactive(prob, u, active, tol, max_newton=newton_max_iter)
        if not ok:
            break
        resid = prob.stationarity(u)
        mu = np.where(active, resid, 0.0)
        dual_violation = float(np.max(-mu)) if active.any() else 0.0
        stat = float(np.max(np.abs(np.where(active, 0.0, resid))))
        primal = float(np.max(psi - u))
        if stat <= tol and dual_violation <= max(tol, 1e-12) and primal <= primal_tol:
            u = np.maximum(u, psi)
            eta = np.where(active, np.minimum(-mu, 0.0), 0.0)
            return Field(g, u), Field(g, eta), it
    if not pgs_fallback:
        raise KernelError("active-set iteration did not converge")
    return solve_pgs(prob, Field(g, np.maximum(u, psi)), tol=min(tol, 1e-11))


def _newton_inactive(prob: ObstacleProblem, u: np.ndarray, active: np.ndarray,
                     tol: float, max_newton: int = 60) -> bool:
    """Newton for G(u) = 0 on the inactive nodes, contact values frozen.

    Mutates u in place; returns False on stagnation or a singular system.
    """
    if active.all():
        return True
    g = prob.grid
    shift = prob.diag_shift()

    def inactive_res(v):
        return np.where(active, 0.0, prob.stationarity(v))

    res = inactive_res(u)
    norm = float(np.max(np.abs(res)))
    for _ in range(max_newton):
        if norm <= tol:
            return True
        diag = shift + 3.0 * u * u
        try:
            delta = solve_shifted(g, diag, -res, fixed=active)
        except LinearSolveError:
            return False
        step = 1.0
        while step > 1e-12:
            trial = u + step * delta
            trial_res = inactive_res(trial)
            trial_norm = float(np.max(np.abs(trial_res)))
            if trial_norm < norm:
                u[:] = trial
                res, norm = trial_res, trial_norm
                break
            step *= 0.5
        else:
            return False
    return norm <= tol


def brute_force_obstacle(prob: ObstacleProblem, newton_tol: float = 1e-13,
                         kkt_tol: float = 1e-10):
    """Enumerate every active set on a tiny convex instance and verify KKT.

    Usable as an oracle only: requires at most 12 interior nodes and refuses
    instances whose a = 0 operator carries the destabilizing -kappa*u term.
    Returns the first (unique, for convex instances) verified (u, eta_hat).
    """
    g = prob.grid
    n = g.n_nodes
    if n > 12:
        raise ValueError(f"enumeration oracle limited to 12 nodes, got {n}")
    if prob.nonconvex:
        raise KernelError("a = 0 instance with the kappa term inside may be nonconvex; refusing")
    psi = prob.psi.values
    b = prob.b.values
    dense = _dense_linear_part(g, prob.diag_shift())
    for bits in itertools.product((False, True), repeat=n):
        active = np.array(bits)
        u = psi.copy()
        if not _dense_newton(dense, prob, u, active, newton_tol):
            continue
        resid = prob.apply(u) - b
        dual_ok = (not active.any()) or float(np.max(-resid[active])) <= kkt_tol
        inactive = ~active
        primal_ok = (not inactive.any()) or float(np.max(psi[inactive] - u[inactive])) <= kkt_tol
        if dual_ok and primal_ok:
            u = np.maximum(u, psi)
            eta = np.where(active, np.minimum(-resid, 0.0), 0.0)
            return Field(g, u), Field(g, eta)
    raise KernelError("no active set verifies KKT; instance is nonconvex or tolerances too tight")


def _dense_linear_part(g: Grid, shift: float) -> np.ndarray:
    """Dense matrix of v -> shift*v - lap(v)."""
    n = g.n_nodes
    out = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[:] = 0.0
        e[j] = 1.0
        out[:, j] = shift * e - lap_array(g, e)
    return out


def _dense_newton(dense: np.ndarray, prob: ObstacleProblem, u: np.ndarray,
                  active: np.ndarray, tol: float, max_newton: int = 80) -> bool:
    inactive = np.nonzero(~active)[0]
    if inactive.size == 0:
        return True
    b = prob.b.values
    for _ in range(max_newton):
        res = (prob.apply(u) - b)[inactive]
        if float(np.max(np.abs(res))) <= tol:
            return True
        jac = dense[np.ix_(inactive, inactive)] + np.diag(3.0 * u[inactive] ** 2)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            return False
        u[inactive] += delta
        if np.max(np.abs(u)) > 1e8:
            return False
    return float(np.max(np.abs((prob.apply(u) - b)[inactive]))) <= tol


def complementarity_report(prob: ObstacleProblem, u: Field,
                           eta: Field) -> ComplementarityReport:
    """Residuals of a candidate solution; stationarity is measured off contact."""
    psi = prob.psi.values
    uv = u.values
    ev = eta.values
    primal = float(max(np.max(psi - uv), 0.0))
    dual = float(max(np.max(ev), 0.0))
    gap = float(np.max(np.abs((uv - psi) * ev)))
    resid = prob.stationarity(uv) + ev
    # on contact the multiplier absorbs the residual; off contact eta is zero
    stationarity = float(np.max(np.abs(resid)))
    return ComplementarityReport(primal, dual, gap, stationarity)


def solve_equilibrium(g: Grid, u0: Field, p: ModelParams, warm_start: Field,
                      tol: float = 1e-8, max_iter: int = 60):
    """Polish a near-stationary state into a solution of the stationary system.

    The stationary problem keeps the initial datum as the obstacle and has no
    mass term, so it is solved only as a local polish: the warm start should be
    the long-time state of a run.  If the warm start already satisfies the KKT
    system within tol it is returned unchanged.
    """
    if warm_start.grid != g or u0.grid != g:
        raise ValueError("fields are not on the given grid")
    gap_floor = -1e-10 * (1.0 + float(np.max(np.abs(u0.values))))
    if float(np.min(warm_start.values - u0.values)) < gap_floor:
        raise KernelError("warm start lies below the obstacle; it is not a trajectory state")
    prob = ObstacleProblem(grid=g, psi=u0, a=0.0,
                           b=Field(g, np.zeros(g.n_nodes)),
                           kappa_implicit=True, params=p)
    w = np.maximum(warm_start.values, u0.values)
    eta0 = Field(g, _clamped_multiplier(prob, w))
    candidate = Field(g, w)
    report = complementarity_report(prob, candidate, eta0)
    if report.max_entry() <= tol:
        return candidate, eta0, report
    try:
        u, eta, _ = solve_active_set(prob, candidate, tol=min(tol, 1e-10),
                                     max_iter=max_iter)
    except (KernelError, LinearSolveError) as exc:
        raise KernelError(
            "equilibrium polish diverged; advance the trajectory further before polishing"
        ) from exc
    report = complementarity_report(prob, u, eta)
    if report.max_entry() > tol:
        raise KernelError(
            f"equilibrium polish stalled at residual {report.max_entry():.3e} > {tol:.1e}; "
            "advance the trajectory further before polishing",
            report=report,
        )
    return u, eta, report
