"""NLP container and a primal-dual interior-point reference solver.

The solver handles

    min f(x)   s.t.   c(x) = 0,   lower <= x <= upper

with a log barrier on the bounds, Newton steps on the primal-dual KKT
system (sparse LU), fraction-to-the-boundary step rules and a backtracking
line search on an l1 merit function with a second-order correction.
Variables whose bounds coincide are removed before iterating.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

INF = 1e19


class EvaluationError(RuntimeError):
    """A callback returned a non-finite value."""


@dataclass
class NlpProblem:
    n: int
    m: int
    objective: Callable
    gradient: Callable
    constraints: Callable
    jacobian: Callable
    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray
    hessian: Optional[Callable] = None  # (x, lam, obj_factor) -> sparse
    pattern: object = None
    variable_blocks: dict = field(default_factory=dict)
    constraint_blocks: dict = field(default_factory=dict)
    transcription: object = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        if not (self.lower.size == self.upper.size == self.x0.size == self.n):
            raise ValueError("bounds and initial guess must have length n")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class SolveOptions:
    tol: float = 1e-8
    constr_viol_tol: float = 1e-8
    max_iter: int = 300
    mu_init: float = 0.1
    bound_push: float = 1e-2
    bound_frac: float = 1e-2
    obj_scaling: Optional[float] = None  # None: scale the initial gradient to unit size
    acceptable_factor: float = 100.0
    stall_iterations: int = 5
    verbose: bool = False


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    constraint_violation: float
    optimality: float
    iterations: int
    wall_time: float
    success: bool
    status: str
    multipliers: Optional[np.ndarray] = None
    bound_multipliers: Optional[np.ndarray] = None

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "constraint_violation": self.constraint_violation,
            "optimality": self.optimality,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "success": self.success,
            "status": self.status,
        }


def _locate(values, blocks):
    bad = np.flatnonzero(~np.isfinite(values))
    for name, sl in blocks.items():
        idx = np.arange(values.size)[sl]
        if np.isin(bad, idx).any():
            return name
    return "unknown"


def _check(values, what, blocks=None):
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        where = _locate(values.ravel(), blocks or {}) if values.ndim <= 1 else "matrix"
        raise EvaluationError(f"non-finite {what} (block: {where})")
    return values


class _Reduced:
    """View of the problem over the non-fixed variables."""

    def __init__(self, prob: NlpProblem):
        self.prob = prob
        fixed = np.abs(prob.upper - prob.lower) <= 1e-14 * np.maximum(1.0, np.abs(prob.lower))
        self.free = np.flatnonzero(~fixed)
        self.full = prob.x0.copy()
        self.full[fixed] = prob.lower[fixed]
        self.lower = prob.lower[self.free]
        self.upper = prob.upper[self.free]

    def expand(self, x):
        z = self.full.copy()
        z[self.free] = x
        return z

    def f(self, x):
        v = float(self.prob.objective(self.expand(x)))
        if not np.isfinite(v):
            raise EvaluationError("non-finite objective")
        return v

    def g(self, x):
        g = self.prob.gradient(self.expand(x))
        _check(g, "objective gradient", self.prob.variable_blocks)
        return np.asarray(g)[self.free]

    def c(self, x):
        return _check(self.prob.constraints(self.expand(x)), "constraints",
                      self.prob.constraint_blocks)

    def J(self, x):
        J = sp.csr_matrix(self.prob.jacobian(self.expand(x)))
        _check(J.data, "constraint Jacobian")
        return J[:, self.free]

    def H(self, x, lam, obj_factor):
        if self.prob.hessian is None:
            return self._fd_hessian(x, lam, obj_factor)
        H = sp.csr_matrix(self.prob.hessian(self.expand(x), lam, obj_factor))
        _check(H.data, "Lagrangian Hessian")
        return H[self.free][:, self.free]

    def _fd_hessian(self, x, lam, obj_factor):
        # dense differences of the Lagrangian gradient; small problems only
        def grad_l(v):
            return obj_factor * self.g(v) + self.J(v).T @ lam

        n = x.size
        H = np.empty((n, n))
        for j in range(n):
            h = 1e-6 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            H[:, j] = (grad_l(xp) - grad_l(xm)) / (2 * h)
        return sp.csr_matrix(0.5 * (H + H.T))


def _push_inside(x, lo, hi, fl, fu, push, frac):
    x = x.copy()
    both = fl & fu
    span = np.where(both, hi - lo, np.inf)
    pl = np.minimum(push * np.maximum(1.0, np.abs(lo)), frac * span)
    pu = np.minimum(push * np.maximum(1.0, np.abs(hi)), frac * span)
    x = np.where(fl, np.maximum(x, lo + pl), x)
    x = np.where(fu, np.minimum(x, hi - pu), x)
    return x


def _ftb(v, dv, tau):
    """Largest step in (0, 1] keeping ``v + a dv >= (1 - tau) v``."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve(problem: NlpProblem, options: SolveOptions | None = None) -> SolveReport:
    """Solve ``problem`` with the interior-point method."""
    opts = options or SolveOptions()
    start = time.perf_counter()
    red = _Reduced(problem)
    lo, hi = red.lower, red.upper
    fl = lo > -INF / 10
    fu = hi < INF / 10
    n = red.free.size
    m = problem.m

    x = _push_inside(problem.x0[red.free], lo, hi, fl, fu, opts.bound_push, opts.bound_frac)
    g = red.g(x)
    if opts.obj_scaling is None:
        gmax = float(np.max(np.abs(g))) if g.size else 0.0
        fs = 1.0 / gmax if gmax > 1e-12 else 1.0
        fs = float(np.clip(fs, 1e-6, 1e8))
    else:
        fs = float(opts.obj_scaling)

    mu = opts.mu_init
    lam = np.zeros(m)
    zl = np.where(fl, 1.0, 0.0)
    zu = np.where(fu, 1.0, 0.0)
    nu = 1.0
    delta_w_last = 0.0
    status = "max_iter"
    stalled = 0
    it = 0
    kkt_err = np.inf
    cviol = np.inf

    def slacks(v):
        return np.where(fl, v - lo, 1.0), np.where(fu, hi - v, 1.0)

    def merit(v, nu_, mu_):
        sl, su = slacks(v)
        if np.any(sl[fl] <= 0) or np.any(su[fu] <= 0):
            return np.inf
        val = fs * red.f(v) - mu_ * (np.sum(np.log(sl[fl])) + np.sum(np.log(su[fu])))
        return val + nu_ * np.sum(np.abs(red.c(v)))

    for it in range(opts.max_iter + 1):
        f = fs * red.f(x)
        g = fs * red.g(x)
        c = red.c(x)
        J = red.J(x)
        sl, su = slacks(x)
        dual = g + J.T @ lam - zl + zu
        compl = np.concatenate([(zl * sl)[fl], (zu * su)[fu]])
        s_max = 100.0
        s_d = max(s_max, (np.sum(np.abs(lam)) + np.sum(zl) + np.sum(zu)) / max(1, m + n)) / s_max
        s_c = max(s_max, (np.sum(zl) + np.sum(zu)) / max(1, n)) / s_max
        cviol = float(np.max(np.abs(c))) if m else 0.0
        dinf = float(np.max(np.abs(dual))) if n else 0.0
        cinf = float(np.max(np.abs(compl))) if compl.size else 0.0
        kkt_err = max(dinf / s_d, cviol, cinf / s_c)
        if opts.verbose:
            log.info("it %3d f %.8e inf_pr %.2e inf_du %.2e mu %.1e", it, f / fs, cviol, dinf, mu)
        if kkt_err <= opts.tol and cviol <= opts.constr_viol_tol:
            status = "converged"
            break
        # roundoff can hold the KKT error just above a very tight tolerance
        acceptable = (kkt_err <= opts.acceptable_factor * opts.tol
                      and cviol <= opts.acceptable_factor * opts.constr_viol_tol)
        if acceptable and stalled >= opts.stall_iterations:
            status = "acceptable"
            break
        if it == opts.max_iter:
            break

        # barrier parameter update (monotone)
        while True:
            cmu = float(np.max(np.abs(compl - mu))) if compl.size else 0.0
            if max(dinf / s_d, cviol, cmu / s_c) > 10.0 * mu or mu <= opts.tol / 10:
                break
            mu = max(opts.tol / 10, min(0.2 * mu, mu**1.5))
            nu = max(nu, 1.0)
        tau = max(0.99, 1.0 - mu)

        H = red.H(x, lam, fs)
        sig = np.where(fl, zl / sl, 0.0) + np.where(fu, zu / su, 0.0)
        grad_b = g - np.where(fl, mu / sl, 0.0) + np.where(fu, mu / su, 0.0)
        rhs = -np.concatenate([grad_b + J.T @ lam, c])

        delta_w = 0.0
        delta_c = 0.0
        for attempt in range(40):
            W = H + sp.diags(sig + delta_w)
            K = sp.bmat([[W, J.T], [J, -delta_c * sp.eye(m) if m else None]], format="csc")
            try:
                lu = spla.splu(K, permc_spec="COLAMD")
                sol = lu.solve(rhs)
                ok = np.all(np.isfinite(sol))
            except RuntimeError:
                ok = False
            if ok:
                dx = sol[:n]
                curv = dx @ (W @ dx)
                if curv >= 1e-12 * (dx @ dx) or np.linalg.norm(dx) < 1e-14:
                    break
            if not ok:
                delta_c = max(delta_c, 1e-8 * mu**0.25)
            if delta_w == 0.0:
                delta_w = 1e-4 if delta_w_last == 0.0 else max(1e-20, delta_w_last / 3)
            else:
                delta_w *= 8.0 if delta_w_last == 0.0 else 8.0
        else:
            status = "kkt_failure"
            break
        delta_w_last = delta_w
        dx = sol[:n]
        dlam = sol[n:]
        dzl = np.where(fl, mu / sl - zl - zl / sl * dx, 0.0)
        dzu = np.where(fu, mu / su - zu + zu / su * dx, 0.0)

        a_max = min(_ftb(sl[fl], dx[fl], tau), _ftb(su[fu], -dx[fu], tau))
        a_z = min(_ftb(zl[fl], dzl[fl], tau), _ftb(zu[fu], dzu[fu], tau))

        cnorm = float(np.sum(np.abs(c)))
        nu_req = float(np.max(np.abs(lam + dlam))) if m else 0.0
        if nu < nu_req:
            nu = 1.5 * nu_req + 1e-6
        dphi = grad_b @ dx - nu * cnorm
        if dphi > 0 and cnorm > 0:
            nu = (grad_b @ dx + 0.5 * max(curv, 0.0)) / (0.9 * cnorm) + 1e-6
            dphi = grad_b @ dx - nu * cnorm
        phi0 = merit(x, nu, mu)

        alpha = a_max
        accepted = False
        x_new = None
        for ls in range(40):
            trial = x + alpha * dx
            phi = merit(trial, nu, mu)
            if phi <= phi0 + 1e-4 * alpha * min(dphi, 0.0) + 1e-14 * abs(phi0):
                accepted = True
                x_new = trial
                break
            if ls == 0 and m:
                # second-order correction for the constraint curvature
                c_trial = red.c(trial)
                soc = lu.solve(np.concatenate([np.zeros(n), -c_trial]))[:n]
                step = alpha * dx + soc
                a_soc = min(_ftb(sl[fl], step[fl], tau), _ftb(su[fu], -step[fu], tau))
                trial2 = x + a_soc * step
                if merit(trial2, nu, mu) <= phi0 + 1e-4 * alpha * min(dphi, 0.0):
                    accepted = True
                    x_new = trial2
                    break
            alpha *= 0.5
            if alpha < 1e-12:
                break
        if not accepted:
            x_new = x + alpha * dx
        moved = np.max(np.abs(x_new - x)) if n else 0.0
        stalled = stalled + 1 if moved <= 1e-14 * (1.0 + np.max(np.abs(x))) else 0
        x = x_new
        lam = lam + alpha * dlam
        zl = zl + a_z * dzl
        zu = zu + a_z * dzu
        sl, su = slacks(x)
        kappa = 1e10
        zl = np.where(fl, np.clip(zl, mu / (kappa * sl), kappa * mu / sl), 0.0)
        zu = np.where(fu, np.clip(zu, mu / (kappa * su), kappa * mu / su), 0.0)

    full = red.expand(x)
    lam_out = lam / fs
    zfull = np.zeros(problem.n)
    zfull[red.free] = (zu - zl) / fs
    return SolveReport(
        x=full,
        objective=float(problem.objective(full)),
        constraint_violation=float(cviol),
        optimality=float(kkt_err),
        iterations=it,
        wall_time=time.perf_counter() - start,
        success=status in ("converged", "acceptable"),
        status=status,
        multipliers=lam_out,
        bound_multipliers=zfull,
    )


def default_initial_guess(tr) -> np.ndarray:
    """Straight line in time from the initial profile to zero; zero controls."""
    lay = tr.layout
    prob = tr.problem
    times = tr.mesh.support_times()
    frac = (times - prob.t0) / (prob.tf - prob.t0)
    y0 = np.asarray(prob.initial(tr.grid.nodes), dtype=float) * np.ones(lay.n_nodes)
    state = (1.0 - frac)[:, None] * y0[None, :]
    z = np.zeros(lay.size)
    z[: lay.n_state] = state.T.ravel()
    z[-2], z[-1] = prob.t0, prob.tf
    return z


def build_nlp(tr, x0=None) -> NlpProblem:
    """Wrap a transcription as an :class:`NlpProblem`."""
    lo, hi = tr.bounds()
    lay = tr.layout
    return NlpProblem(
        n=lay.size,
        m=lay.n_constraints,
        objective=tr.objective,
        gradient=tr.gradient,
        constraints=tr.constraints,
        jacobian=tr.jacobian,
        hessian=tr.hessian,
        lower=lo,
        upper=hi,
        x0=default_initial_guess(tr) if x0 is None else x0,
        pattern=tr.pattern(),
        variable_blocks=lay.variable_blocks(),
        constraint_blocks=lay.constraint_blocks(),
        transcription=tr,
    )
