"""Line-search Riemannian interior point method.

Iterates on ``(x, y, z, s)`` with ``x`` on the product manifold, equality
multipliers ``y``, inequality multipliers ``z >= 0`` and slacks ``s > 0``
for ``g(x) + s = 0``.  Each iteration checks the ``mu = 0`` optimality error,
updates the barrier parameter, solves the Newton system, scales the dual and
slack steps by the fraction-to-boundary rule and backtracks on the primal
step along the retraction.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .nlp import (SingularKKTError, assemble, error_metrics, replay_E0,
                  solve_newton)

TOLERANCE_PRESETS = {"table": 1e-11, "figure": 1e-14, "ipopt-default": 1e-6}

CONVERGED = "converged"
MAX_ITERS = "max-iters"
LS_FAILURE = "line-search-failure"


@dataclass
class SolverOptions:
    N_max: int = 200
    J_max: int = 30
    eps_tol: float = 1e-11
    kappa_mu: float = 0.99
    theta_mu: float = 1.99
    tau_min: float = 0.995
    gamma_theta_barrier: float = 1e-6  # barrier-cost progress
    theta_min: float = 1e-4
    eta_phi: float = 1e-4
    gamma_theta_progress: float = 1e-4  # feasibility progress
    beta: float = 0.5
    mu0: float = 0.1
    s_phi: float = 2.3
    s_theta: float = 1.1
    delta: float = 1.0
    regularize: bool = False
    # "full": y += d_y (unit multiplier step); "primal": y += alpha d_y with the accepted primal step
    dual_step: str = "full"

    def __post_init__(self):
        for name, val in asdict(self).items():
            if name not in ("regularize", "dual_step") and not val > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.tau_min < 1:
            raise ValueError("tau_min must lie in (0, 1)")
        if self.dual_step not in ("full", "primal"):
            raise ValueError("dual_step must be 'full' or 'primal'")
        self.N_max = int(self.N_max)
        self.J_max = int(self.J_max)


class SolverError(RuntimeError):
    def __init__(self, message, iteration):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class SolverState:
    x: object
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    mu: float
    iter: int = 0


@dataclass
class IterationRecord:
    iter: int
    E_0: float
    E_mu: float
    mu: float
    cost: float
    theta: float
    alpha: float
    alpha_z: float
    alpha_s: float
    j: int
    reason: str
    # raw residual norms for replaying E_0
    kkt_inf: float
    eps_E: float
    comp_0_inf: float
    s_d: float
    s_c: float
    min_s: float
    min_z: float
    tau: float
    ftb_margin: float  # min over z, s of (new - (1 - tau) old); >= 0 by construction
    t_total: float
    t_eval: float

    def replay_E0(self):
        return replay_E0(self.kkt_inf, self.eps_E, self.comp_0_inf, self.s_d, self.s_c)


@dataclass
class IterationTrace:
    """Initial metrics plus one record per Newton step taken."""

    initial: IterationRecord = None
    records: list = field(default_factory=list)

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def E0_history(self):
        """``E_0`` at the initial point followed by every accepted iterate."""
        return [self.initial.E_0] + [r.E_0 for r in self.records]


@dataclass
class SolveResult:
    state: SolverState
    trace: IterationTrace
    status: str
    E_0: float
    cost: float
    t_total: float
    t_eval: float

    @property
    def iterations(self):
        return self.state.iter

    @property
    def converged(self):
        return self.status == CONVERGED


def fraction_to_boundary(w, d, tau):
    """Largest ``alpha`` in ``(0, 1]`` with ``w + alpha d >= (1 - tau) w`` componentwise.

    The bound is enforced exactly in floating point (the candidate is nudged
    down if rounding would violate it).
    """
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    neg = d < 0
    if not np.any(neg):
        return 1.0
    with np.errstate(over="ignore"):  # subnormal d gives inf, clipped to 1
        alpha = float(min(1.0, np.min(-tau * w[neg] / d[neg])))
    floor = (1.0 - tau) * w
    while alpha > 0 and np.any(w + alpha * d < floor):
        alpha = float(np.nextafter(alpha, 0.0))
    return alpha


def update_mu(mu, E_mu, options):
    """Barrier update, applied only when ``E_mu <= 10 mu``."""
    if E_mu <= 10.0 * mu:
        return max(options.eps_tol / 10.0, min(options.kappa_mu * mu, mu ** options.theta_mu))
    return mu


def infeasibility(h, g):
    return float(np.abs(h).sum() + np.clip(g, 0.0, None).sum())


def barrier_value(f, s, mu):
    return f - mu * float(np.sum(np.log(s))) if len(s) else f


@dataclass
class LineSearchResult:
    success: bool
    x: object
    ev: object
    alpha: float
    j: int
    reason: str
    phi: float
    theta: float
    t_eval: float = 0.0


def line_search(problem, state, direction, options, ev=None):
    """Backtrack on ``d_x`` until one of the acceptance tests passes.

    ``phi`` is the barrier function with the slack held at its current value,
    ``c = <grad f(x_k), alpha d_x>`` and ``theta = |h|_1 + sum(max(g, 0))``.
    The switching test uses ``(-c)**s_phi`` so that it is defined for the
    descent case ``c < 0`` it guards.
    """
    t_eval = 0.0
    if ev is None or ev.grad is None:
        t0 = time.perf_counter()
        ev = problem.evaluate(state.x, order=1)
        t_eval += time.perf_counter() - t0
    o = options
    phi0 = barrier_value(ev.f, state.s, state.mu)
    theta0 = infeasibility(ev.h, ev.g)
    slope = float(ev.grad @ direction.dx)
    alpha = 1.0
    last = None
    for j in range(1, o.J_max + 1):
        t0 = time.perf_counter()
        xt = problem.retract(state.x, alpha * direction.dx)
        evt = problem.evaluate(xt, order=0)
        t_eval += time.perf_counter() - t0
        phit = barrier_value(evt.f, state.s, state.mu)
        thetat = infeasibility(evt.h, evt.g)
        c = alpha * slope
        last = (xt, evt, phit, thetat)
        if theta0 <= o.theta_min and c < 0 and alpha * (-c) ** o.s_phi > o.delta * theta0 ** o.s_theta:
            if phit <= phi0 + o.eta_phi * c:
                return LineSearchResult(True, xt, evt, alpha, j, "armijo", phit, thetat, t_eval)
        elif phit <= phi0 - o.gamma_theta_barrier * theta0:
            return LineSearchResult(True, xt, evt, alpha, j, "cost-progress", phit, thetat, t_eval)
        elif thetat <= (1.0 - o.gamma_theta_progress) * theta0:
            return LineSearchResult(True, xt, evt, alpha, j, "feasibility-progress", phit, thetat, t_eval)
        alpha *= o.beta
    xt, evt, phit, thetat = last
    return LineSearchResult(False, xt, evt, alpha / o.beta, o.J_max, "failure", phit, thetat, t_eval)


def initial_state(problem, x0, options, ev=None):
    """Interior start ``s = max(1e-2, -g)``, ``z = mu0 / s``, ``y = 0``."""
    if ev is None:
        ev = problem.evaluate(x0, order=0)
    s = np.maximum(1e-2, -ev.g)
    z = options.mu0 / s
    return SolverState(x=x0, y=np.zeros(problem.l), z=z, s=s, mu=options.mu0)


def _record(k, m, ev, mu, state, alpha, a_z, a_s, j, reason, tau, margin, t_tot, t_ev):
    return IterationRecord(
        iter=k, E_0=m.E_0, E_mu=m.E_mu, mu=mu, cost=ev.f, theta=infeasibility(ev.h, ev.g),
        alpha=alpha, alpha_z=a_z, alpha_s=a_s, j=j, reason=reason,
        kkt_inf=m.kkt_inf, eps_E=m.eps_E, comp_0_inf=m.comp_0_inf, s_d=m.s_d, s_c=m.s_c,
        min_s=float(state.s.min()) if len(state.s) else np.inf,
        min_z=float(state.z.min()) if len(state.z) else np.inf,
        tau=tau, ftb_margin=margin, t_total=t_tot, t_eval=t_ev)


def solve(problem, x0, options=None, state=None, callback=None):
    """Run the interior point iteration from ``x0``.

    Returns a :class:`SolveResult`; ``status`` is ``converged`` when
    ``E_0 <= eps_tol``, otherwise ``max-iters`` or ``line-search-failure``.
    """
    options = SolverOptions() if options is None else options
    t_start = time.perf_counter()
    t0 = time.perf_counter()
    ev = problem.evaluate(x0, order=2)
    t_eval_total = time.perf_counter() - t0
    if state is None:
        state = initial_state(problem, x0, options, ev)
    if np.any(state.s <= 0) or np.any(state.z < 0):
        raise ValueError("initial slack must be positive and multipliers nonnegative")
    m = error_metrics(problem, state.x, state.y, state.z, state.s, state.mu, ev)
    trace = IterationTrace()
    trace.initial = _record(0, m, ev, state.mu, state, 0.0, 0.0, 0.0, 0, "initial",
                            0.0, 0.0, time.perf_counter() - t_start, t_eval_total)
    status = MAX_ITERS
    for k in range(1, options.N_max + 2):
        if m.E_0 <= options.eps_tol:
            status = CONVERGED
            break
        if k > options.N_max:
            break
        t_it = time.perf_counter()
        state.mu = update_mu(state.mu, m.E_mu, options)
        system = assemble(problem, state.x, state.y, state.z, state.s, state.mu, ev)
        try:
            d = solve_newton(system, regularize=options.regularize)
        except SingularKKTError as exc:
            raise SolverError(f"{exc} (pivot {exc.pivot})", k) from exc
        tau = max(options.tau_min, 1.0 - state.mu)
        a_z = fraction_to_boundary(state.z, d.dz, tau) if problem.m else 1.0
        a_s = fraction_to_boundary(state.s, d.ds, tau) if problem.m else 1.0
        d.dz = a_z * d.dz
        d.ds = a_s * d.ds
        ls = line_search(problem, state, d, options, ev)
        t_ev = ls.t_eval
        if not ls.success:
            status = LS_FAILURE
            break
        z_new = state.z + d.dz
        s_new = state.s + d.ds
        margin = min(np.min(z_new - (1 - tau) * state.z, initial=np.inf),
                     np.min(s_new - (1 - tau) * state.s, initial=np.inf))
        state.x, state.z, state.s = ls.x, z_new, s_new
        state.y = state.y + (d.dy if options.dual_step == "full" else ls.alpha * d.dy)
        state.iter = k
        t0 = time.perf_counter()
        ev = problem.evaluate(state.x, order=2)
        m = error_metrics(problem, state.x, state.y, state.z, state.s, state.mu, ev)
        t_ev += time.perf_counter() - t0
        t_eval_total += t_ev
        rec = _record(k, m, ev, state.mu, state, ls.alpha, a_z, a_s, ls.j, ls.reason, tau,
                      margin, time.perf_counter() - t_it, t_ev)
        trace.append(rec)
        if callback is not None:
            callback(rec)
    return SolveResult(state=state, trace=trace, status=status, E_0=m.E_0, cost=ev.f,
                       t_total=time.perf_counter() - t_start, t_eval=t_eval_total)
